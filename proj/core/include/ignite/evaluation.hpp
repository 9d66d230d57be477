#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ignite/baselines.hpp"
#include "ignite/missingness.hpp"
#include "ignite/model.hpp"

namespace ignite {

// ---------------------------------------------------------------------------
// Metrics

// Area under the ROC curve from the Mann-Whitney rank statistic with
// midranks for ties. Labels are 0/1. Throws MetricError when a class is absent.
double auroc(const Vector& scores, const Vector& labels);
// Step-wise average precision; tied scores form a single threshold.
double auprc(const Vector& scores, const Vector& labels);

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test

enum class Alternative { Greater, Less, TwoSided };

struct WilcoxonResult {
  double statistic = 0.0;  // W+, sum of ranks of positive differences
  double p = 1.0;
  int n = 0;               // pairs with a nonzero difference
  bool exact = true;
};

// Tests a - b. Zero differences are dropped and tied magnitudes receive
// midranks. The exact null distribution is used for n <= 25, a normal
// approximation with tie and continuity correction otherwise.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    Alternative alternative = Alternative::Greater);

// Exact P(W+ >= w) under random signs, for ranks given doubled (so that
// midranks are integers).
double wilcoxon_exact_upper(const std::vector<int>& doubled_ranks, int doubled_statistic);

// ---------------------------------------------------------------------------
// Downstream mortality classifier

struct DownstreamHyper {
  double dropout = 0.3;
  double learning_rate = 3e-3;
  int batch_size = 128;
};

struct DownstreamRanges {
  std::pair<double, double> dropout{0.1, 0.9};
  std::pair<double, double> learning_rate{1e-4, 1e-1};
  std::pair<int, int> batch_size{64, 1024};
};

struct DownstreamOptions {
  int hidden = 32;
  int max_epochs = 100;
  int patience = 10;
  double validation_fraction = 0.2;
  int search_trials = 6;
  DownstreamRanges ranges;
};

// Imputed records flattened to one row per patient (column t * F + f).
struct ImputedSet {
  Matrix X;
  Vector y;
  std::vector<std::int64_t> record_ids;
  Index steps = 0;
  Index features = 0;

  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
};

ImputedSet make_imputed_set(const std::vector<ImputationResult>& imputed, std::span<const PatientRecord> records);

class DownstreamClassifier {
 public:
  DownstreamClassifier(Index steps, Index features, int hidden, std::uint64_t seed);
  DownstreamClassifier(DownstreamClassifier&&) noexcept = default;
  DownstreamClassifier& operator=(DownstreamClassifier&&) noexcept = default;

  // Mortality probabilities, one per row.
  Vector predict(const Matrix& X) const;
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const SequenceClassifier& network() const { return net_; }
  int epochs_trained = 0;
  double best_validation_loss = 0.0;

 private:
  nn::ParameterSet params_;
  SequenceClassifier net_;
};

// Trains one classifier with early stopping on a validation fold carved
// from `train` (seeded). The parameters of the best validation epoch are kept.
DownstreamClassifier fit_downstream(const ImputedSet& train, const DownstreamHyper& hyper,
                                    const DownstreamOptions& options, std::uint64_t seed);

// Seeded random search over the downstream hyperparameter ranges; scored by
// validation loss.
DownstreamHyper search_downstream_hyper(const ImputedSet& train, const DownstreamOptions& options,
                                        std::uint64_t seed);

// One classifier per seed with hyperparameters searched once and shared.
// Throws InvalidArgument when the labels hold a single class.
std::vector<DownstreamClassifier> train_downstream(const ImputedSet& train, const std::vector<std::uint64_t>& seeds,
                                                   const DownstreamOptions& options,
                                                   DownstreamHyper* chosen = nullptr);

// ---------------------------------------------------------------------------
// Reconstruction scoring

struct ReconstructionScore {
  double rmse_mean = 0.0, rmse_std = 0.0;
  double mae_mean = 0.0, mae_std = 0.0;
  // Per-patient RMSE averaged with weights equal to the masked fraction.
  double rmse_weighted = 0.0;
  std::size_t patients = 0;
};

// Per-patient scores over artificially hidden entries; see hide_observed.
// `imputer` must already be fitted. When `sample` is non-null it receives
// the masked records and their imputations for plotting.
struct ReconstructionSample {
  std::vector<PatientRecord> masked;
  std::vector<Matrix> hidden;
  std::vector<ImputationResult> imputed;
};
ReconstructionScore reconstruction_eval(const Imputer& imputer, const Dataset& test_set, double mask_rate,
                                        std::uint64_t seed, ReconstructionSample* sample = nullptr);

// ---------------------------------------------------------------------------
// Reports

struct DownstreamCell {
  std::string method;
  std::string stratum;  // "all" for the full population
  std::uint64_t seed = 0;
  double auroc = 0.0;
  double auprc = 0.0;
};

struct ReconstructionCell {
  std::string method;
  double mask_rate = 0.0;
  ReconstructionScore score;
};

struct SignificanceCell {
  std::string method;    // hypothesised better method
  std::string baseline;
  std::string stratum;
  std::string metric;  // auroc or auprc
  double p = 1.0;
};

struct StratumPopulation {
  std::string kind;     // sample, feature or all
  std::string stratum;  // low, mid, high or all
  std::size_t n = 0;
  std::size_t positives = 0;
  bool excluded = false;
};

// One feature of one patient for the imputation plots.
struct PlotSeries {
  std::int64_t record_id = 0;
  std::string feature;
  double mask_rate = 0.0;
  std::vector<double> observed;      // NaN where not shown to the imputer
  std::vector<double> ground_truth;  // NaN except at hidden entries
  std::map<std::string, std::vector<double>> imputed;  // per method
};

struct EvalReport {
  std::vector<StratumPopulation> populations;
  std::vector<DownstreamCell> downstream;
  std::vector<ReconstructionCell> reconstruction;
  std::vector<SignificanceCell> significance;
  std::vector<PlotSeries> plots;

  // Throws InvalidArgument on out-of-range metric values.
  void validate() const;
  bool empty() const { return downstream.empty() && reconstruction.empty() && populations.empty(); }
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

// Appends one-sided Wilcoxon p-values for every ordered method pair in every
// stratum, paired by seed.
void add_significance(EvalReport& report);

enum class ReportFormat { Csv, Markdown };
ReportFormat parse_report_format(const std::string& s);

struct ReportOptions {
  // Adds the missingness-weighted RMSE column to the reconstruction table.
  bool weighted_rmse = false;
};

// Writes downstream, reconstruction, significance and population tables to
// `out_dir` (report.md or one csv per table) with atomic renames; optional
// SVG line plots go to plot_dir. Returns the paths written.
std::vector<std::filesystem::path> emit_report(const EvalReport& report, ReportFormat format,
                                               const std::filesystem::path& out_dir,
                                               const std::optional<std::filesystem::path>& plot_dir = std::nullopt,
                                               const ReportOptions& options = {});

// Table text without touching the filesystem.
std::string render_markdown(const EvalReport& report, const ReportOptions& options = {});
// File name -> csv text.
std::map<std::string, std::string> render_csv(const EvalReport& report, const ReportOptions& options = {});
std::string render_plot_svg(const PlotSeries& series);

// ---------------------------------------------------------------------------
// Pipelines

using ImputerFactory = std::function<std::unique_ptr<Imputer>(const std::string& method)>;

// locf, mean, mice or ignite.
ImputerFactory default_imputer_factory(const IgniteConfig& ignite = {}, const ChainedOptions& chained = {});

struct EvalOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;
  DownstreamOptions downstream;
  std::size_t min_stratum = 800;
  StratumBounds bounds;
  std::vector<double> mask_rates;  // reconstruction rates; empty skips it
  int plot_patients = 0;           // patients kept for imputation plots
};

// Downstream evaluation on one cohort: seeded split, normalisation fitted on
// the training part, every imputer fitted once on it, then one classifier per
// seed. Reconstruction scores are added for each configured mask rate.
// `data` is in raw units.
EvalReport evaluate_population(const Dataset& data, const std::vector<std::string>& methods,
                               const ImputerFactory& factory, const EvalOptions& options,
                               const std::string& stratum_label = "all");

// The same pipeline run independently inside every populated stratum.
EvalReport stratified_eval(const Dataset& data, const std::vector<std::string>& methods, StratumKind kind,
                           const ImputerFactory& factory, const EvalOptions& options);

}  // namespace ignite
