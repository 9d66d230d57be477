#include "ignite/baselines.hpp"

#include <spdlog/spdlog.h>

namespace ignite {

ImputationResult impute_locf(const Matrix& X, const Matrix& M) {
  if (X.rows() != M.rows() || X.cols() != M.cols()) throw ShapeError("impute_locf: X and M shapes differ");
  ImputationResult out{X, M};
  for (Index f = 0; f < X.cols(); ++f) {
    double last = 0.0;
    for (Index t = 0; t < X.rows(); ++t) {
      if (M(t, f) == 1.0) {
        last = X(t, f);
      } else {
        out.X_hat(t, f) = last;
      }
    }
  }
  return out;
}

FeatureMeans fit_feature_means(const Dataset& train) {
  const Index F = train.features();
  Vector sum = Vector::Zero(F), count = Vector::Zero(F);
  for (const auto& r : train.records) {
    for (Index t = 0; t < r.X.rows(); ++t) {
      for (Index f = 0; f < F; ++f) {
        if (r.M(t, f) == 1.0) {
          sum(f) += r.X(t, f);
          count(f) += 1.0;
        }
      }
    }
  }
  FeatureMeans means;
  means.mean = Vector(F);
  means.observed.assign(static_cast<std::size_t>(F), false);
  for (Index f = 0; f < F; ++f) {
    if (count(f) > 0) {
      means.mean(f) = sum(f) / count(f);
      means.observed[static_cast<std::size_t>(f)] = true;
    } else {
      means.mean(f) = 0.5;
      spdlog::warn("feature {} never observed in training; mean imputation fills 0.5",
                   f < static_cast<Index>(train.feature_names.size()) ? train.feature_names[f] : std::to_string(f));
    }
  }
  return means;
}

ImputationResult impute_mean(const Matrix& X, const Matrix& M, const FeatureMeans& means) {
  if (X.cols() != means.mean.size()) throw ShapeError("impute_mean: feature count differs from training means");
  ImputationResult out{X, M};
  for (Index f = 0; f < X.cols(); ++f) {
    for (Index t = 0; t < X.rows(); ++t) {
      if (M(t, f) != 1.0) out.X_hat(t, f) = means.mean(f);
    }
  }
  return out;
}

std::vector<ImputationResult> LocfImputer::impute(std::span<const PatientRecord> records) const {
  std::vector<ImputationResult> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(impute_locf(r.X, r.M));
  return out;
}

std::vector<ImputationResult> MeanImputer::impute(std::span<const PatientRecord> records) const {
  if (means_.mean.size() == 0) throw InvalidArgument("mean imputer used before fit()");
  std::vector<ImputationResult> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(impute_mean(r.X, r.M, means_));
  return out;
}

Matrix flatten_records(std::span<const PatientRecord> records, bool mask) {
  if (records.empty()) return Matrix(0, 0);
  const Index T = records.front().steps();
  const Index F = records.front().features();
  Matrix flat(static_cast<Index>(records.size()), T * F);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Matrix& src = mask ? records[i].M : records[i].X;
    if (src.rows() != T || src.cols() != F) throw ShapeError("flatten_records: records differ in shape");
    for (Index t = 0; t < T; ++t) flat.block(static_cast<Index>(i), t * F, 1, F) = src.row(t);
  }
  return flat;
}

Matrix unflatten_row(const Matrix& flat, Index row, Index steps, Index features) {
  Matrix out(steps, features);
  for (Index t = 0; t < steps; ++t) out.row(t) = flat.block(row, t * features, 1, features);
  return out;
}

void ChainedImputer::fit(const Dataset& train) {
  const Matrix X = flatten_records(train.records, false);
  const Matrix M = flatten_records(train.records, true);
  model_.fit(X, M, options_);
}

std::vector<ImputationResult> ChainedImputer::impute(std::span<const PatientRecord> records) const {
  std::vector<ImputationResult> out;
  if (records.empty()) return out;
  const Matrix X = flatten_records(records, false);
  const Matrix M = flatten_records(records, true);
  const Matrix completed = model_.transform(X, M);
  const Index T = records.front().steps();
  const Index F = records.front().features();
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    ImputationResult r{unflatten_row(completed, static_cast<Index>(i), T, F), records[i].M};
    // Observed entries are copied through bitwise.
    for (Index k = 0; k < r.X_hat.size(); ++k) {
      if (records[i].M(k) == 1.0) r.X_hat(k) = records[i].X(k);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ignite
