#include "ignite/missingness.hpp"

#include <algorithm>
#include <cmath>

namespace ignite {

Matrix binary_mask(const Matrix& X) {
  return X.unaryExpr([](double v) { return is_missing(v) ? 0.0 : 1.0; });
}

Matrix imm(const Matrix& M) {
  const double T = static_cast<double>(M.rows());
  const RowVector observed_fraction = M.colwise().sum() / T;
  return (M.array() == 1.0).select(Matrix::Ones(M.rows(), M.cols()), observed_fraction.replicate(M.rows(), 1));
}

std::string to_string(Stratum s) {
  switch (s) {
    case Stratum::Low: return "low";
    case Stratum::Mid: return "mid";
    case Stratum::High: return "high";
  }
  return "?";
}

std::string to_string(StratumKind k) { return k == StratumKind::Sample ? "sample" : "feature"; }

StratumKind parse_stratum_kind(const std::string& s) {
  if (s == "sample") return StratumKind::Sample;
  if (s == "feature") return StratumKind::Feature;
  throw InvalidArgument("unknown strata kind '" + s + "' (expected sample or feature)");
}

namespace {

// Bound as a rational with denominator 10^6, exact for the usual quarter
// boundaries.
struct RationalBound {
  long long num;
  long long den;
};

RationalBound to_rational(double b) {
  constexpr long long den = 1'000'000;
  return {std::llround(b * static_cast<double>(den)), den};
}

}  // namespace

Stratum classify(const Fraction& f, const StratumBounds& bounds) {
  if (!(bounds.lower > 0.0 && bounds.lower < bounds.upper && bounds.upper < 1.0)) {
    throw InvalidArgument("stratum bounds must be strictly increasing inside (0, 1)");
  }
  const RationalBound lo = to_rational(bounds.lower);
  const RationalBound hi = to_rational(bounds.upper);
  // count / total <= num / den  <=>  count * den <= num * total
  if (f.count * lo.den <= lo.num * f.total) return Stratum::Low;
  if (f.count * hi.den >= hi.num * f.total) return Stratum::High;
  return Stratum::Mid;
}

MissingnessProfile profile(const PatientRecord& record, const StratumBounds& bounds) {
  const Index T = record.M.rows();
  const Index F = record.M.cols();
  MissingnessProfile p;
  long long missing = 0;
  long long never = 0;
  p.never_observed.assign(static_cast<std::size_t>(F), false);
  for (Index f = 0; f < F; ++f) {
    long long observed = 0;
    for (Index t = 0; t < T; ++t) observed += record.M(t, f) == 1.0 ? 1 : 0;
    missing += T - observed;
    if (observed == 0) {
      p.never_observed[static_cast<std::size_t>(f)] = true;
      ++never;
    }
  }
  p.sample_wise = {missing, static_cast<long long>(T * F)};
  p.feature_wise = {never, static_cast<long long>(F)};
  p.stratum_sample = classify(p.sample_wise, bounds);
  p.stratum_feature = classify(p.feature_wise, bounds);
  return p;
}

Stratification stratify(const Dataset& data, StratumKind kind, std::size_t min_stratum,
                        const StratumBounds& bounds) {
  Stratification out;
  out.kind = kind;
  for (Stratum s : {Stratum::Low, Stratum::Mid, Stratum::High}) {
    out.members[s];
    out.indices[s];
  }
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto prof = profile(data.records[i], bounds);
    const Stratum s = kind == StratumKind::Sample ? prof.stratum_sample : prof.stratum_feature;
    out.members[s].push_back(data.records[i].record_id);
    out.indices[s].push_back(i);
  }
  for (auto& [s, ids] : out.members) out.excluded[s] = ids.size() < min_stratum;
  return out;
}

std::vector<FeatureMissingness> cohort_feature_table(const Dataset& data) {
  const Index F = data.features();
  std::vector<FeatureMissingness> rows(static_cast<std::size_t>(F));
  std::vector<long long> missing(static_cast<std::size_t>(F), 0), never(static_cast<std::size_t>(F), 0);
  long long entries = 0;
  for (const auto& r : data.records) {
    entries += r.M.rows();
    for (Index f = 0; f < F; ++f) {
      const auto observed = static_cast<long long>(r.M.col(f).sum());
      missing[static_cast<std::size_t>(f)] += r.M.rows() - observed;
      if (observed == 0) ++never[static_cast<std::size_t>(f)];
    }
  }
  const double n = static_cast<double>(data.records.size());
  for (Index f = 0; f < F; ++f) {
    auto& row = rows[static_cast<std::size_t>(f)];
    row.feature = data.feature_names[static_cast<std::size_t>(f)];
    row.sample_level_pct =
        entries == 0 ? 0.0 : 100.0 * static_cast<double>(missing[static_cast<std::size_t>(f)]) / static_cast<double>(entries);
    row.feature_level_pct = n == 0 ? 0.0 : 100.0 * static_cast<double>(never[static_cast<std::size_t>(f)]) / n;
  }
  return rows;
}

PatientRecord hide_observed(const PatientRecord& record, double rate, std::mt19937_64& rng, Matrix* hidden) {
  if (!(rate > 0.0 && rate < 1.0)) throw InvalidArgument("mask rate must be in (0, 1)");
  std::vector<Index> observed;
  for (Index k = 0; k < record.M.size(); ++k) {
    if (record.M(k) == 1.0) observed.push_back(k);
  }
  std::size_t n_hide = static_cast<std::size_t>(std::llround(rate * static_cast<double>(observed.size())));
  if (!observed.empty()) n_hide = std::clamp<std::size_t>(n_hide, 1, observed.size());
  std::shuffle(observed.begin(), observed.end(), rng);
  PatientRecord out = record;
  Matrix mask = Matrix::Zero(record.M.rows(), record.M.cols());
  for (std::size_t i = 0; i < n_hide; ++i) {
    const Index k = observed[i];
    out.X(k) = kMissing;
    out.M(k) = 0.0;
    mask(k) = 1.0;
  }
  if (hidden) *hidden = std::move(mask);
  return out;
}

}  // namespace ignite
