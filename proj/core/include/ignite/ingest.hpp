#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "ignite/common.hpp"

namespace ignite {

// ---------------------------------------------------------------------------
// Raw PhysioNet Challenge 2012 records

struct Event {
  int minute = 0;
  std::string parameter;
  double value = 0.0;

  bool operator==(const Event&) const = default;
};

struct Descriptors {
  double age = -1.0;     // years; -1 unknown
  int gender = -1;       // 0 female, 1 male, -1 unknown
  double height = -1.0;  // cm
  int icu_type = -1;     // 1..4
  double weight = -1.0;  // kg
};

struct RawRecord {
  std::int64_t record_id = -1;
  Descriptors descriptors;
  std::vector<Event> events;  // sorted by minute (stable w.r.t. file order)
  std::vector<std::string> ignored;  // parameter names outside the vocabulary
};

// The 35 time-series physiology features used for PhysioNet 2012, in the
// order of the published feature table.
const std::vector<std::string>& physionet_features();
// Time-varying treatments; PhysioNet 2012 has mechanical ventilation only.
const std::vector<std::string>& physionet_treatments();

RawRecord parse_physionet_record(std::istream& in);
RawRecord parse_physionet_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Hourly grids

struct PatientRecord {
  std::int64_t record_id = -1;
  Matrix X;  // T x F, kMissing where unobserved
  Matrix M;  // T x F, 1 observed / 0 missing
  Matrix A;  // T x K binary treatments
  Vector d;  // one-hot demographics (age bin ++ sex bin)
  int y = 0;

  Index steps() const { return X.rows(); }
  Index features() const { return X.cols(); }
};

// Bucket h covers minutes [60h, 60(h+1)); several measurements in a bucket
// are averaged; events at or after 60 * horizon are dropped. Treatment
// events are marked 1 within their hour. A, d and y are left for the caller
// (A is sized T x K with the given treatment vocabulary).
PatientRecord hourly_aggregate(const RawRecord& raw, int horizon_hours = 48,
                               const std::vector<std::string>& features = physionet_features(),
                               const std::vector<std::string>& treatments = physionet_treatments());

// Demographic encoding: 5 equal-width age bins over [15, 100) followed by
// 3 sex bins (female, male, unknown).
inline constexpr int kAgeBins = 5;
inline constexpr int kSexBins = 3;
inline constexpr int kDemographicDim = kAgeBins + kSexBins;
Vector encode_demographics(double age, int gender);

// ---------------------------------------------------------------------------
// Cohorts

struct NormalizationStats {
  Vector min;
  Vector max;
};

struct Dataset {
  std::vector<PatientRecord> records;
  std::vector<std::string> feature_names;
  std::vector<std::string> treatment_names;
  std::optional<NormalizationStats> normalization;

  std::size_t size() const { return records.size(); }
  Index steps() const { return records.empty() ? 0 : records.front().steps(); }
  Index features() const { return static_cast<Index>(feature_names.size()); }
  Index treatments() const { return static_cast<Index>(treatment_names.size()); }
  Index demographic_dim() const { return records.empty() ? kDemographicDim : records.front().d.size(); }
  double prevalence() const;

  // Throws ShapeError when records disagree on T, F, K or mask consistency.
  void validate() const;
};

struct CohortLoadSummary {
  std::size_t files = 0;
  std::size_t without_outcome = 0;
};

// Loads every `*.txt` record under record_dir and joins outcomes from a CSV
// with `RecordID` and `In-hospital_death` columns.
Dataset load_physionet_cohort(const std::filesystem::path& record_dir,
                              const std::filesystem::path& outcomes_file,
                              CohortLoadSummary* summary = nullptr, int horizon_hours = 48);

struct SyntheticSpec {
  int n_patients = 1000;
  int features = 10;
  int treatments = 2;
  int steps = 48;
  std::uint64_t seed = 0;
};

struct SyntheticTruth {
  std::vector<double> severity;  // latent s per patient
  std::vector<Matrix> complete;  // fully observed raw signals, T x F each
};

// Informative-missingness cohort: a latent severity shifts the signal level
// and trend, raises observation frequency, lowers the chance of a feature
// never being measured, and drives the mortality outcome (prevalence ~15%).
Dataset generate_synthetic_cohort(const SyntheticSpec& spec, SyntheticTruth* truth = nullptr);

// ---------------------------------------------------------------------------
// Splits and normalisation

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle, first round(fraction * n) indices go to train.
Split train_test_split(std::size_t n, double train_fraction, std::uint64_t seed);
Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);

// Per-feature (min, max) over observed training entries. Features never
// observed in training default to (0, 1).
NormalizationStats fit_normalization(const Dataset& train);

// Maps observed entries to (x - min) / (max - min) clipped to [0, 1]; a
// degenerate feature (max == min) maps to 0.5. Missing entries untouched.
// The returned dataset carries the stats.
Dataset normalize(const Dataset& data, const NormalizationStats& stats);
Matrix normalize_matrix(const Matrix& X, const NormalizationStats& stats);
Matrix denormalize_matrix(const Matrix& X, const NormalizationStats& stats);

}  // namespace ignite
