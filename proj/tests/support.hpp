#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ignite/ingest.hpp"
#include "ignite/nn.hpp"

namespace ignite::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m(k) = n(rng);
  return m;
}

inline Matrix random_mask(Index rows, Index cols, double p_observed, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p_observed);
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m(k) = coin(rng) ? 1.0 : 0.0;
  return m;
}

// Record with values in [0, 1) at observed positions.
inline PatientRecord random_record(Index T, Index F, Index K, double p_observed, std::mt19937_64& rng,
                                   std::int64_t id = 0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PatientRecord r;
  r.record_id = id;
  r.M = random_mask(T, F, p_observed, rng);
  r.X = Matrix(T, F);
  for (Index k = 0; k < r.X.size(); ++k) r.X(k) = r.M(k) == 1.0 ? u(rng) : kMissing;
  r.A = random_mask(T, K, 0.3, rng);
  r.d = encode_demographics(20.0 + 70.0 * u(rng), u(rng) < 0.5 ? 0 : 1);
  r.y = u(rng) < 0.5 ? 1 : 0;
  return r;
}

inline Dataset random_dataset(std::size_t n, Index T, Index F, Index K, double p_observed, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  for (Index f = 0; f < F; ++f) d.feature_names.push_back("f" + std::to_string(f));
  for (Index k = 0; k < K; ++k) d.treatment_names.push_back("rx" + std::to_string(k));
  for (std::size_t i = 0; i < n; ++i) {
    d.records.push_back(random_record(T, F, K, p_observed, rng, static_cast<std::int64_t>(i)));
  }
  d.records[0].y = 1;
  if (n > 1) d.records[1].y = 0;
  return d;
}

struct GradientReport {
  std::string name;
  double max_relative_error = 0.0;    // worst single entry, see below
  double max_abs_grad = 0.0;
  double group_relative_error = 0.0;  // |a - n|_2 / max(|a|_2, |n|_2, floor)
};

// Compares analytic gradients accumulated by `loss_and_backward` against
// central differences of `loss` for every entry of every parameter in `set`.
// Relative error per entry is |a - n| / max(|a|, |n|, floor); the group error
// uses the same formula on the whole tensor with Euclidean norms.
inline std::vector<GradientReport> check_gradients(nn::ParameterSet& set,
                                                   const std::function<double()>& loss,
                                                   const std::function<void()>& loss_and_backward,
                                                   double step = 1e-5, double floor = 1e-6) {
  set.zero_grad();
  loss_and_backward();
  std::vector<GradientReport> out;
  for (std::size_t p = 0; p < set.size(); ++p) {
    ad::Parameter& param = set[p];
    const Matrix analytic = param.grad;
    GradientReport rep{param.name, 0.0, 0.0, 0.0};
    Matrix numerical(param.value.rows(), param.value.cols());
    for (Index k = 0; k < param.value.size(); ++k) {
      const double orig = param.value(k);
      param.value(k) = orig + step;
      const double up = loss();
      param.value(k) = orig - step;
      const double down = loss();
      param.value(k) = orig;
      const double numeric = (up - down) / (2.0 * step);
      numerical(k) = numeric;
      const double a = analytic(k);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      rep.max_relative_error = std::max(rep.max_relative_error, std::abs(a - numeric) / denom);
      rep.max_abs_grad = std::max(rep.max_abs_grad, std::abs(a));
    }
    rep.group_relative_error =
        (analytic - numerical).norm() / std::max({analytic.norm(), numerical.norm(), floor});
    out.push_back(rep);
  }
  return out;
}

}  // namespace ignite::testing
