#pragma once

#include <array>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ignite/ingest.hpp"

namespace ignite {

// 1 where X is observed, 0 where it carries the missing sentinel.
Matrix binary_mask(const Matrix& X);

// Individualized missingness mask: 1 at observed positions; at missing
// positions the feature's observed fraction over the T steps.
Matrix imm(const Matrix& M);

enum class Stratum { Low, Mid, High };
enum class StratumKind { Sample, Feature };

std::string to_string(Stratum s);
std::string to_string(StratumKind k);
StratumKind parse_stratum_kind(const std::string& s);

// Inclusive lower and upper stratum bounds: low <=> fraction <= lower,
// high <=> fraction >= upper, mid otherwise.
struct StratumBounds {
  double lower = 0.25;
  double upper = 0.75;
};

// Exact count/total fraction, so boundary comparisons are not subject to
// floating-point rounding.
struct Fraction {
  long long count = 0;
  long long total = 1;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total); }
};

Stratum classify(const Fraction& f, const StratumBounds& bounds = {});

struct MissingnessProfile {
  Fraction sample_wise;   // missing entries / (T * F)
  std::vector<bool> never_observed;
  Fraction feature_wise;  // never-observed features / F
  Stratum stratum_sample = Stratum::Low;
  Stratum stratum_feature = Stratum::Low;
};

MissingnessProfile profile(const PatientRecord& record, const StratumBounds& bounds = {});

struct Stratification {
  StratumKind kind = StratumKind::Sample;
  std::map<Stratum, std::vector<std::int64_t>> members;  // record ids
  std::map<Stratum, std::vector<std::size_t>> indices;   // positions in the dataset
  std::map<Stratum, bool> excluded;                      // populated below min_stratum
};

Stratification stratify(const Dataset& data, StratumKind kind, std::size_t min_stratum = 800,
                        const StratumBounds& bounds = {});

struct FeatureMissingness {
  std::string feature;
  double sample_level_pct = 0.0;   // missing entries of the feature over N*T
  double feature_level_pct = 0.0;  // patients who never have the feature
};

std::vector<FeatureMissingness> cohort_feature_table(const Dataset& data);

// Hides round(rate * observed) uniformly chosen observed entries of a record
// (at least one when the record has any). `hidden` receives a T x F
// indicator of the hidden entries.
PatientRecord hide_observed(const PatientRecord& record, double rate, std::mt19937_64& rng, Matrix* hidden);

}  // namespace ignite
