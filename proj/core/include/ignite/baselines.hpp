#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ignite/ingest.hpp"

namespace ignite {

struct ImputationResult {
  Matrix X_hat;       // complete T x F matrix
  Matrix provenance;  // 1 where the value was observed and copied through
};

// Common interface of every imputation method. fit() sees only the training
// split; impute() must not alter observed entries.
class Imputer {
 public:
  virtual ~Imputer() = default;
  virtual std::string name() const = 0;
  virtual void fit(const Dataset& train) = 0;
  virtual std::vector<ImputationResult> impute(std::span<const PatientRecord> records) const = 0;
};

// Forward fill per feature; leading gaps and never-observed features are 0.
ImputationResult impute_locf(const Matrix& X, const Matrix& M);

struct FeatureMeans {
  Vector mean;                 // fill value per feature
  std::vector<bool> observed;  // whether the feature had any training value
};

FeatureMeans fit_feature_means(const Dataset& train);
ImputationResult impute_mean(const Matrix& X, const Matrix& M, const FeatureMeans& means);

// ---------------------------------------------------------------------------
// Chained-equation (MICE-style) ridge imputation on flattened records.

struct ChainedOptions {
  int rounds = 5;
  int chains = 3;
  double ridge = 1.0;
  std::uint64_t seed = 0;
};

// Fits round-robin ridge regressions on an N x P matrix with kMissing holes.
// Each chain starts from column means and visits incomplete columns in a
// seeded random order; the completed matrices are pooled by their mean.
class ChainedModel {
 public:
  ChainedModel() = default;

  // Returns the pooled completion of the fitted matrix itself.
  Matrix fit(const Matrix& X, const Matrix& M, const ChainedOptions& options);
  // Replays the final-round regressions on new rows.
  Matrix transform(const Matrix& X, const Matrix& M) const;

  Index columns() const { return col_mean_.size(); }

 private:
  struct Chain {
    std::vector<Index> order;    // target columns of the final round
    std::vector<Vector> coeffs;  // one (P + 1)-vector per entry of order (last = intercept)
  };

  ChainedOptions options_;
  Vector col_mean_;
  std::vector<bool> degenerate_;
  std::vector<Chain> chains_;
};

Matrix impute_chained(const Matrix& X_flat, const Matrix& M_flat, const ChainedOptions& options = {});

// Flattening used by the chained imputer: record -> 1 x (T * F) row with
// column index t * F + f.
Matrix flatten_records(std::span<const PatientRecord> records, bool mask);
Matrix unflatten_row(const Matrix& flat, Index row, Index steps, Index features);

// ---------------------------------------------------------------------------

class LocfImputer final : public Imputer {
 public:
  std::string name() const override { return "locf"; }
  void fit(const Dataset&) override {}
  std::vector<ImputationResult> impute(std::span<const PatientRecord> records) const override;
};

class MeanImputer final : public Imputer {
 public:
  std::string name() const override { return "mean"; }
  void fit(const Dataset& train) override { means_ = fit_feature_means(train); }
  std::vector<ImputationResult> impute(std::span<const PatientRecord> records) const override;

 private:
  FeatureMeans means_;
};

class ChainedImputer final : public Imputer {
 public:
  explicit ChainedImputer(ChainedOptions options = {}) : options_(options) {}
  std::string name() const override { return "mice"; }
  void fit(const Dataset& train) override;
  std::vector<ImputationResult> impute(std::span<const PatientRecord> records) const override;

 private:
  ChainedOptions options_;
  ChainedModel model_;
};

}  // namespace ignite
