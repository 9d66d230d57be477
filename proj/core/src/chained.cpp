// Chained-equation ridge imputation.
//
// Regressing column j on every other column with a ridge penalty only needs
// the inverse of the full penalised Gram matrix G = Z^T Z + diag(lambda):
// the coefficients are beta = -Ginv(:, j) / Ginv(j, j) with beta_j = 0. When a
// column's missing entries are overwritten, G changes by a symmetric rank-2
// term, and Ginv is patched with a 2x2 Woodbury update in O(P^2).

#include <algorithm>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "ignite/baselines.hpp"

namespace ignite {

namespace {

struct Workspace {
  Matrix Z;     // N x (P + 1), last column is the intercept
  Matrix Ginv;  // (P + 1) x (P + 1)
};

Matrix penalised_gram_inverse(const Matrix& Z, double ridge) {
  const Index n = Z.cols();
  Matrix G = Matrix::Zero(n, n);
  G.selfadjointView<Eigen::Lower>().rankUpdate(Z.transpose());
  G = G.selfadjointView<Eigen::Lower>();
  for (Index k = 0; k + 1 < n; ++k) G(k, k) += ridge;
  // The intercept is left unpenalised; ridge on the other columns keeps G
  // positive definite.
  return G.ldlt().solve(Matrix::Identity(n, n));
}

Vector regression_coefficients(const Matrix& Ginv, Index j) {
  Vector beta = -Ginv.col(j) / Ginv(j, j);
  beta(j) = 0.0;
  return beta;
}

// Overwrites the `rows` entries of column j with `values` and patches Ginv.
void overwrite_column(Workspace& ws, Index j, const std::vector<Index>& rows, const Vector& values) {
  const Index n = ws.Z.cols();
  Vector a = Vector::Zero(n);
  double delta_sq = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double delta = values(static_cast<Index>(r)) - ws.Z(rows[r], j);
    if (delta == 0.0) continue;
    a.noalias() += delta * ws.Z.row(rows[r]).transpose();
    delta_sq += delta * delta;
  }
  a(j) += 0.5 * delta_sq;
  for (std::size_t r = 0; r < rows.size(); ++r) ws.Z(rows[r], j) = values(static_cast<Index>(r));

  // G' = G + U V^T with U = [e_j, a], V = [a, e_j].
  Matrix Y(n, 2);  // Ginv U
  Y.col(0) = ws.Ginv.col(j);
  Y.col(1) = ws.Ginv * a;
  Matrix GV(n, 2);  // Ginv V
  GV.col(0) = Y.col(1);
  GV.col(1) = Y.col(0);
  Eigen::Matrix2d S;
  S(0, 0) = 1.0 + a.dot(Y.col(0));
  S(0, 1) = a.dot(Y.col(1));
  S(1, 0) = Y(j, 0);
  S(1, 1) = 1.0 + Y(j, 1);
  ws.Ginv.noalias() -= Y * S.inverse() * GV.transpose();
}

}  // namespace

Matrix ChainedModel::fit(const Matrix& X, const Matrix& M, const ChainedOptions& options) {
  if (X.rows() != M.rows() || X.cols() != M.cols()) throw ShapeError("chained: X and M shapes differ");
  if (options.rounds < 1 || options.chains < 1) throw InvalidArgument("chained: rounds and chains must be >= 1");
  if (options.ridge <= 0.0) throw InvalidArgument("chained: ridge penalty must be positive");
  options_ = options;
  const Index N = X.rows();
  const Index P = X.cols();

  col_mean_ = Vector(P);
  degenerate_.assign(static_cast<std::size_t>(P), false);
  std::vector<std::vector<Index>> missing_rows(static_cast<std::size_t>(P));
  std::size_t n_degenerate = 0;
  for (Index j = 0; j < P; ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < N; ++i) {
      if (M(i, j) == 1.0) {
        sum += X(i, j);
        ++count;
      } else {
        missing_rows[static_cast<std::size_t>(j)].push_back(i);
      }
    }
    if (count == 0) {
      degenerate_[static_cast<std::size_t>(j)] = true;
      col_mean_(j) = 0.5;
      ++n_degenerate;
    } else {
      col_mean_(j) = sum / static_cast<double>(count);
    }
  }
  if (n_degenerate > 0) spdlog::warn("chained imputation: {} all-missing columns stay at 0.5", n_degenerate);

  std::vector<Index> targets;
  for (Index j = 0; j < P; ++j) {
    if (!degenerate_[static_cast<std::size_t>(j)] && !missing_rows[static_cast<std::size_t>(j)].empty()) {
      targets.push_back(j);
    }
  }

  chains_.assign(static_cast<std::size_t>(options.chains), {});
  Matrix pooled = Matrix::Zero(N, P);
  for (int c = 0; c < options.chains; ++c) {
    std::mt19937_64 rng(options.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(c + 1));
    Workspace ws;
    ws.Z.resize(N, P + 1);
    for (Index j = 0; j < P; ++j) {
      for (Index i = 0; i < N; ++i) ws.Z(i, j) = M(i, j) == 1.0 ? X(i, j) : col_mean_(j);
    }
    ws.Z.col(P).setOnes();

    Chain& chain = chains_[static_cast<std::size_t>(c)];
    for (int round = 0; round < options.rounds; ++round) {
      ws.Ginv = penalised_gram_inverse(ws.Z, options.ridge);
      std::vector<Index> order = targets;
      std::shuffle(order.begin(), order.end(), rng);
      const bool last_round = round + 1 == options.rounds;
      if (last_round) {
        chain.order = order;
        chain.coeffs.clear();
        chain.coeffs.reserve(order.size());
      }
      for (Index j : order) {
        const auto& rows = missing_rows[static_cast<std::size_t>(j)];
        const Vector beta = regression_coefficients(ws.Ginv, j);
        Vector pred(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) pred(static_cast<Index>(r)) = ws.Z.row(rows[r]).dot(beta);
        overwrite_column(ws, j, rows, pred);
        if (last_round) chain.coeffs.push_back(beta);
      }
    }
    pooled += ws.Z.leftCols(P);
  }
  pooled /= static_cast<double>(options.chains);
  for (Index i = 0; i < pooled.size(); ++i) {
    if (M(i) == 1.0) pooled(i) = X(i);
  }
  return pooled;
}

Matrix ChainedModel::transform(const Matrix& X, const Matrix& M) const {
  if (chains_.empty()) throw InvalidArgument("chained model used before fit()");
  if (X.cols() != columns() || M.cols() != columns()) throw ShapeError("chained: column count differs from fit");
  const Index N = X.rows();
  const Index P = X.cols();
  Matrix pooled = Matrix::Zero(N, P);
  for (const Chain& chain : chains_) {
    Matrix Z(N, P + 1);
    for (Index j = 0; j < P; ++j) {
      for (Index i = 0; i < N; ++i) Z(i, j) = M(i, j) == 1.0 ? X(i, j) : col_mean_(j);
    }
    Z.col(P).setOnes();
    for (int round = 0; round < options_.rounds; ++round) {
      for (std::size_t k = 0; k < chain.order.size(); ++k) {
        const Index j = chain.order[k];
        for (Index i = 0; i < N; ++i) {
          if (M(i, j) != 1.0) Z(i, j) = Z.row(i).dot(chain.coeffs[k]);
        }
      }
    }
    pooled += Z.leftCols(P);
  }
  pooled /= static_cast<double>(chains_.size());
  for (Index i = 0; i < pooled.size(); ++i) {
    if (M(i) == 1.0) pooled(i) = X(i);
  }
  return pooled;
}

Matrix impute_chained(const Matrix& X_flat, const Matrix& M_flat, const ChainedOptions& options) {
  ChainedModel model;
  return model.fit(X_flat, M_flat, options);
}

}  // namespace ignite
