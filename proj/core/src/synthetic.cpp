#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ignite/ingest.hpp"

namespace ignite {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Intercept b such that E[sigmoid(a s + b)] = prevalence for s ~ U(0, 1),
// using the closed form (softplus(a + b) - softplus(b)) / a.
double outcome_intercept(double slope, double prevalence) {
  double lo = -50.0, hi = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double p = (softplus(slope + mid) - softplus(mid)) / slope;
    (p < prevalence ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct FeatureProfile {
  double loading;
  double period;
  double amplitude;
  double obs_rate;
  double never_rate;
  double center;
  double spread;
};

}  // namespace

Dataset generate_synthetic_cohort(const SyntheticSpec& spec, SyntheticTruth* truth) {
  if (spec.n_patients < 2) throw InvalidArgument("synthetic cohort needs n_patients >= 2");
  if (spec.features < 2) throw InvalidArgument("synthetic cohort needs at least 2 features");
  if (spec.treatments < 0 || spec.steps < 2) throw InvalidArgument("synthetic cohort needs K >= 0 and T >= 2");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index T = spec.steps;
  const Index F = spec.features;
  const Index K = spec.treatments;

  std::vector<FeatureProfile> profiles(static_cast<std::size_t>(F));
  for (auto& p : profiles) {
    p.loading = (unit(rng) < 0.7 ? 1.0 : -1.0) * (0.6 + 0.8 * unit(rng));
    p.period = 8.0 + 16.0 * unit(rng);
    p.amplitude = 0.2 + 0.3 * unit(rng);
    p.obs_rate = 0.15 + 0.45 * unit(rng);
    p.never_rate = 0.2 + 0.4 * unit(rng);
    p.center = 20.0 + 100.0 * unit(rng);
    p.spread = 2.0 + 18.0 * unit(rng);
  }

  constexpr double kOutcomeSlope = 6.0;
  constexpr double kPrevalence = 0.15;
  const double intercept = outcome_intercept(kOutcomeSlope, kPrevalence);

  Dataset data;
  for (Index f = 0; f < F; ++f) data.feature_names.push_back("f" + std::to_string(f));
  for (Index k = 0; k < K; ++k) data.treatment_names.push_back("rx" + std::to_string(k));
  data.records.reserve(static_cast<std::size_t>(spec.n_patients));
  if (truth != nullptr) {
    truth->severity.clear();
    truth->complete.clear();
  }

  for (int i = 0; i < spec.n_patients; ++i) {
    const double s = unit(rng);
    PatientRecord rec;
    rec.record_id = i;
    rec.X = Matrix(T, F);
    rec.M = Matrix(T, F);
    Matrix complete(T, F);

    for (Index f = 0; f < F; ++f) {
      const FeatureProfile& p = profiles[static_cast<std::size_t>(f)];
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      const bool never = unit(rng) < p.never_rate * (1.0 - s);
      const double obs_prob = std::min(0.95, p.obs_rate * (0.35 + 1.3 * s));
      double noise = 0.0;
      for (Index t = 0; t < T; ++t) {
        noise = 0.7 * noise + 0.2 * normal(rng);
        const double trend = 2.0 * s - 1.0 + 1.2 * s * static_cast<double>(t) / static_cast<double>(T - 1);
        const double z = p.loading * trend +
                         p.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / p.period + phase) +
                         noise;
        complete(t, f) = p.center + p.spread * z;
        const bool observed = !never && unit(rng) < obs_prob;
        rec.X(t, f) = observed ? complete(t, f) : kMissing;
        rec.M(t, f) = observed ? 1.0 : 0.0;
      }
    }

    rec.A = Matrix::Zero(T, K);
    for (Index k = 0; k < K; ++k) {
      if (unit(rng) < sigmoid(-1.5 + 3.0 * s)) {
        const auto start = static_cast<Index>(unit(rng) * static_cast<double>(T));
        rec.A.bottomRows(T - std::min(start, T - 1)).col(k).setOnes();
      }
    }

    const double age = std::clamp(60.0 + 10.0 * s + 15.0 * normal(rng), 18.0, 95.0);
    const int gender = unit(rng) < 0.55 ? 1 : 0;
    rec.d = encode_demographics(age, gender);
    rec.y = unit(rng) < sigmoid(kOutcomeSlope * s + intercept) ? 1 : 0;

    if (truth != nullptr) {
      truth->severity.push_back(s);
      truth->complete.push_back(std::move(complete));
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

}  // namespace ignite
