#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "ignite/ingest.hpp"

namespace ignite {

namespace {

// Values that cannot occur physiologically are treated as missing. Zero urine
// output is a real measurement; every other feature must be positive.
bool valid_measurement(const std::string& parameter, double value) {
  if (!std::isfinite(value) || value < 0.0) return false;
  if (value == 0.0) return parameter == "Urine" || parameter == "MechVent";
  return true;
}

}  // namespace

PatientRecord hourly_aggregate(const RawRecord& raw, int horizon_hours,
                               const std::vector<std::string>& features,
                               const std::vector<std::string>& treatments) {
  if (horizon_hours < 1) throw InvalidArgument("hourly_aggregate: horizon_hours must be >= 1");
  const Index T = horizon_hours;
  const Index F = static_cast<Index>(features.size());
  const Index K = static_cast<Index>(treatments.size());

  std::unordered_map<std::string, Index> feature_col, treatment_col;
  for (Index f = 0; f < F; ++f) feature_col.emplace(features[f], f);
  for (Index k = 0; k < K; ++k) treatment_col.emplace(treatments[k], k);

  Matrix sums = Matrix::Zero(T, F);
  Matrix counts = Matrix::Zero(T, F);
  PatientRecord rec;
  rec.record_id = raw.record_id;
  rec.A = Matrix::Zero(T, K);

  for (const Event& e : raw.events) {
    if (e.minute < 0 || e.minute >= 60 * horizon_hours) continue;
    const Index hour = e.minute / 60;
    if (auto it = feature_col.find(e.parameter); it != feature_col.end()) {
      if (!valid_measurement(e.parameter, e.value)) continue;
      sums(hour, it->second) += e.value;
      counts(hour, it->second) += 1.0;
    } else if (auto kt = treatment_col.find(e.parameter); kt != treatment_col.end()) {
      if (e.value > 0.0) rec.A(hour, kt->second) = 1.0;
    }
  }

  rec.X = Matrix(T, F);
  rec.M = Matrix(T, F);
  for (Index t = 0; t < T; ++t) {
    for (Index f = 0; f < F; ++f) {
      if (counts(t, f) > 0.0) {
        rec.X(t, f) = sums(t, f) / counts(t, f);
        rec.M(t, f) = 1.0;
      } else {
        rec.X(t, f) = kMissing;
        rec.M(t, f) = 0.0;
      }
    }
  }
  rec.d = encode_demographics(raw.descriptors.age, raw.descriptors.gender);
  return rec;
}

Vector encode_demographics(double age, int gender) {
  Vector d = Vector::Zero(kDemographicDim);
  constexpr double lo = 15.0, hi = 100.0;
  constexpr double width = (hi - lo) / kAgeBins;
  int bin = 0;
  if (age >= 0.0) bin = std::clamp(static_cast<int>(std::floor((age - lo) / width)), 0, kAgeBins - 1);
  d(bin) = 1.0;
  const int sex_bin = (gender == 0) ? 0 : (gender == 1) ? 1 : 2;
  d(kAgeBins + sex_bin) = 1.0;
  return d;
}

double Dataset::prevalence() const {
  if (records.empty()) return 0.0;
  std::size_t pos = 0;
  for (const auto& r : records) pos += (r.y == 1);
  return static_cast<double>(pos) / static_cast<double>(records.size());
}

void Dataset::validate() const {
  const Index F = features();
  const Index K = treatments();
  const Index T = steps();
  for (const auto& r : records) {
    if (r.X.rows() != T || r.X.cols() != F) {
      throw ShapeError("record " + std::to_string(r.record_id) + ": X is not " + std::to_string(T) + "x" +
                       std::to_string(F));
    }
    if (r.M.rows() != T || r.M.cols() != F) throw ShapeError("record " + std::to_string(r.record_id) + ": M shape");
    if (r.A.rows() != T || r.A.cols() != K) throw ShapeError("record " + std::to_string(r.record_id) + ": A shape");
    if (r.d.size() != demographic_dim()) throw ShapeError("record " + std::to_string(r.record_id) + ": d shape");
    for (Index i = 0; i < r.X.size(); ++i) {
      if ((r.M(i) == 1.0) == is_missing(r.X(i)) || (r.M(i) != 0.0 && r.M(i) != 1.0)) {
        throw ShapeError("record " + std::to_string(r.record_id) + ": mask inconsistent with sentinel");
      }
    }
  }
}

Split train_test_split(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.feature_names = data.feature_names;
  out.treatment_names = data.treatment_names;
  out.normalization = data.normalization;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= data.records.size()) throw InvalidArgument("subset: index out of range");
    out.records.push_back(data.records[i]);
  }
  return out;
}

NormalizationStats fit_normalization(const Dataset& train) {
  const Index F = train.features();
  NormalizationStats s;
  s.min = Vector::Constant(F, std::numeric_limits<double>::infinity());
  s.max = Vector::Constant(F, -std::numeric_limits<double>::infinity());
  for (const auto& r : train.records) {
    for (Index t = 0; t < r.X.rows(); ++t) {
      for (Index f = 0; f < F; ++f) {
        if (r.M(t, f) == 1.0) {
          s.min(f) = std::min(s.min(f), r.X(t, f));
          s.max(f) = std::max(s.max(f), r.X(t, f));
        }
      }
    }
  }
  for (Index f = 0; f < F; ++f) {
    if (!std::isfinite(s.min(f))) {
      s.min(f) = 0.0;
      s.max(f) = 1.0;
    } else if (s.max(f) == s.min(f)) {
      const std::string name = f < static_cast<Index>(train.feature_names.size()) ? train.feature_names[f] : "?";
      spdlog::warn("feature {} has a constant training range; observed values map to 0.5", name);
    }
  }
  return s;
}

Matrix normalize_matrix(const Matrix& X, const NormalizationStats& stats) {
  if (X.cols() != stats.min.size()) throw ShapeError("normalize: feature count differs from stats");
  Matrix out = X;
  for (Index f = 0; f < X.cols(); ++f) {
    const double lo = stats.min(f), hi = stats.max(f);
    for (Index t = 0; t < X.rows(); ++t) {
      const double v = X(t, f);
      if (is_missing(v)) continue;
      out(t, f) = (hi == lo) ? 0.5 : std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    }
  }
  return out;
}

Matrix denormalize_matrix(const Matrix& X, const NormalizationStats& stats) {
  if (X.cols() != stats.min.size()) throw ShapeError("denormalize: feature count differs from stats");
  Matrix out = X;
  for (Index f = 0; f < X.cols(); ++f) {
    const double lo = stats.min(f), hi = stats.max(f);
    for (Index t = 0; t < X.rows(); ++t) {
      if (is_missing(X(t, f))) continue;
      out(t, f) = (hi == lo) ? lo : X(t, f) * (hi - lo) + lo;
    }
  }
  return out;
}

Dataset normalize(const Dataset& data, const NormalizationStats& stats) {
  Dataset out = data;
  for (auto& r : out.records) r.X = normalize_matrix(r.X, stats);
  out.normalization = stats;
  return out;
}

}  // namespace ignite
