// ignite: command-line front end for ingestion, training, imputation and
// evaluation runs.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ignite/evaluation.hpp"
#include "ignite/ingest.hpp"
#include "ignite/missingness.hpp"
#include "ignite/persistence.hpp"
#include "ignite/run_config.hpp"

namespace fs = std::filesystem;
using namespace ignite;

namespace {

struct Options {
  std::string config_path;
  std::string data;
  std::string outcomes;
  std::string store;
  std::string out;
  std::string name;
  std::string checkpoint;
  std::string strata;
  std::string format;
  std::string plot_dir;
  std::string log_level = "info";
  std::vector<std::string> methods;
  std::vector<std::string> ablate;
  std::vector<double> mask_rates;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool force = false;
  bool weighted_rmse = false;
};

class Phase {
 public:
  explicit Phase(std::string name) : name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~Phase() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    spdlog::info("phase={} seconds={:.2f}", name_, s);
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

// Flags override config keys.
RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (!o.data.empty()) c.data.source = o.data;
  if (!o.outcomes.empty()) c.data.outcomes = o.outcomes;
  if (!o.methods.empty()) c.eval.methods = o.methods;
  if (!o.strata.empty()) c.eval.strata = o.strata;
  if (!o.mask_rates.empty()) c.eval.mask_rates = o.mask_rates;
  if (!o.out.empty()) c.output.dir = o.out;
  if (!o.format.empty()) c.output.formats = {o.format};
  if (o.weighted_rmse) c.eval.weighted_rmse = true;
  if (!o.store.empty()) {
    c.output.store = o.store;
  } else if (const char* env = std::getenv("IGNITE_STORE"); env && *env) {
    c.output.store = env;
  }
  if (o.seed) c.model.seed = *o.seed;
  if (o.epochs) c.model.epochs = *o.epochs;
  for (const auto& a : o.ablate) {
    if (a == "condition") c.model.components.condition = false;
    else if (a == "imm") c.model.components.imm = false;
    else if (a == "mit") c.model.components.mit = false;
    else if (a == "discriminator") c.model.components.discriminator = false;
    else throw InvalidArgument("unknown ablation '" + a + "'");
  }
  c.model.validate();
  if (!c.eval.strata.empty()) parse_stratum_kind(c.eval.strata);
  for (const auto& m : c.eval.methods) {
    if (m != "locf" && m != "mean" && m != "mice" && m != "ignite") throw InvalidArgument("unknown method '" + m + "'");
  }
  return c;
}

fs::path default_outcomes(const fs::path& dir) {
  std::string suffix = dir.filename().string();
  if (suffix.empty()) suffix = dir.parent_path().filename().string();
  const auto dash = suffix.rfind('-');
  const std::string set = dash == std::string::npos ? "" : suffix.substr(dash + 1);
  for (const fs::path& base : {dir, dir.parent_path()}) {
    const fs::path candidate = base / ("Outcomes-" + set + ".txt");
    if (!set.empty() && fs::exists(candidate)) return candidate;
  }
  for (const fs::path& base : {dir, dir.parent_path()}) {
    if (fs::exists(base / "Outcomes.txt")) return base / "Outcomes.txt";
  }
  throw NotFoundError("no outcomes file found for '" + dir.string() + "'; pass --outcomes");
}

Dataset load_source(const RunConfig& c) {
  Phase phase("load_data");
  const std::string& src = c.data.source;
  if (src.empty()) throw InvalidArgument("no data source given (--data)");
  if (src.rfind("synthetic", 0) == 0) {
    const SyntheticSpec spec = parse_synthetic_source(src);
    spdlog::info("generating synthetic cohort n={} F={} K={} T={} seed={}", spec.n_patients, spec.features,
                 spec.treatments, spec.steps, spec.seed);
    return generate_synthetic_cohort(spec);
  }
  if (src.rfind("store:", 0) == 0) {
    const ArtifactStore store(c.output.store);
    return load_dataset(store, src.substr(6));
  }
  const fs::path dir(src);
  if (!fs::is_directory(dir)) throw NotFoundError("data directory '" + src + "' does not exist");
  const fs::path outcomes = c.data.outcomes.empty() ? default_outcomes(dir) : fs::path(c.data.outcomes);
  CohortLoadSummary summary;
  Dataset data = load_physionet_cohort(dir, outcomes, &summary, c.data.horizon_hours);
  spdlog::info("loaded {} records from {} files ({} without outcome)", data.size(), summary.files,
               summary.without_outcome);
  return data;
}

void require_seed(const Options& o, const char* cmd) {
  if (!o.seed) throw InvalidArgument(std::string("--seed is required for ") + cmd);
}

void write_resolved(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  write_file_atomic(dir / "resolved_config.json", to_json(c).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Options& o) {
  const RunConfig c = resolve_config(o);
  const Dataset data = load_source(c);
  ArtifactStore store(c.output.store);
  const std::string name = o.name.empty() ? "cohort" : o.name;
  {
    Phase phase("save_dataset");
    save_dataset(store, name, data, o.force);
  }
  std::cout << fmt::format("dataset={} patients={} steps={} features={} treatments={} prevalence={:.4f}\n", name,
                           data.size(), data.steps(), data.features(), data.treatments(), data.prevalence());
  return 0;
}

int cmd_profile(const Options& o) {
  const RunConfig c = resolve_config(o);
  if (o.out.empty()) throw InvalidArgument("profile needs --out FILE.csv");
  const Dataset data = load_source(c);
  Phase phase("profile");
  std::string csv = "feature,sample_level_pct,feature_level_pct\n";
  for (const auto& row : cohort_feature_table(data)) {
    csv += fmt::format("{},{:.2f},{:.2f}\n", row.feature, row.sample_level_pct, row.feature_level_pct);
  }
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, csv);
  for (StratumKind kind : {StratumKind::Sample, StratumKind::Feature}) {
    const Stratification s = stratify(data, kind, c.eval.min_stratum);
    for (Stratum st : {Stratum::Low, Stratum::Mid, Stratum::High}) {
      const auto it = s.indices.find(st);
      std::size_t n = it == s.indices.end() ? 0 : it->second.size(), pos = 0;
      if (it != s.indices.end()) {
        for (std::size_t i : it->second) pos += data.records[i].y == 1 ? 1 : 0;
      }
      spdlog::info("strata kind={} stratum={} n={} positives={}", to_string(kind), to_string(st), n, pos);
    }
  }
  std::cout << fmt::format("profile={} features={} patients={}\n", out.string(), data.features(), data.size());
  return 0;
}

int cmd_train(const Options& o) {
  require_seed(o, "train");
  const RunConfig c = resolve_config(o);
  const Dataset data = load_source(c);
  const Split split = train_test_split(data.size(), c.eval.train_fraction, *o.seed);
  const Dataset raw_train = subset(data, split.train);
  const Dataset train_set = normalize(raw_train, fit_normalization(raw_train));
  TrainHistory history;
  std::optional<IgniteModel> model;
  {
    Phase phase("train");
    model.emplace(train_ignite(train_set, c.model, &history));
  }
  ArtifactStore store(c.output.store);
  const std::string name = o.name.empty() ? "ignite" : o.name;
  save_checkpoint(store, name, *model, o.force);
  write_resolved(c, c.output.dir);
  std::cout << fmt::format("checkpoint={} epochs={} steps={} final_loss={:.6f}\n", name, history.epoch_loss.size(),
                           history.steps, history.epoch_loss.empty() ? 0.0 : history.epoch_loss.back());
  return 0;
}

int cmd_impute(const Options& o) {
  const RunConfig c = resolve_config(o);
  const Dataset data = load_source(c);
  ArtifactStore store(c.output.store);
  StoredImputation out;
  for (const auto& r : data.records) out.record_ids.push_back(r.record_id);
  if (!o.checkpoint.empty()) {
    const IgniteModel model = load_checkpoint(store, o.checkpoint, shape_of(data));
    if (!model.normalization) throw CorruptionError("checkpoint lacks normalisation statistics");
    Phase phase("impute");
    const Dataset norm = normalize(data, *model.normalization);
    out.results = model.impute(norm.records);
    for (auto& r : out.results) r.X_hat = denormalize_matrix(r.X_hat, *model.normalization);
    // Observed entries are restored from the raw data to avoid round-off.
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& rec = data.records[i];
      for (Index k = 0; k < rec.X.size(); ++k) {
        if (rec.M(k) == 1.0) out.results[i].X_hat(k) = rec.X(k);
      }
    }
    out.method = "ignite";
  } else {
    if (c.eval.methods.size() != 1 || c.eval.methods.front() == "ignite") {
      throw InvalidArgument("impute needs --checkpoint NAME or exactly one --method among locf, mean, mice");
    }
    Phase phase("impute");
    const auto imputer = default_imputer_factory(c.model)(c.eval.methods.front());
    imputer->fit(data);
    out.results = imputer->impute(data.records);
    out.method = imputer->name();
  }
  const std::string name = o.name.empty() ? out.method + "_imputed" : o.name;
  save_imputations(store, name, out, o.force);
  std::cout << fmt::format("imputation={} method={} patients={}\n", name, out.method, out.results.size());
  return 0;
}

void emit_all(const EvalReport& report, const RunConfig& c, const Options& o) {
  Phase phase("emit_report");
  const std::optional<fs::path> plots = o.plot_dir.empty() ? std::nullopt : std::optional<fs::path>(o.plot_dir);
  ReportOptions ro;
  ro.weighted_rmse = c.eval.weighted_rmse;
  for (const auto& f : c.output.formats) {
    for (const auto& p : emit_report(report, parse_report_format(f), c.output.dir, plots, ro)) {
      spdlog::info("wrote {}", p.string());
    }
  }
}

int cmd_evaluate(const Options& o) {
  require_seed(o, "evaluate");
  RunConfig c = resolve_config(o);
  const Dataset data = load_source(c);
  EvalOptions eo = eval_options(c, *o.seed);
  eo.mask_rates = o.mask_rates;  // reconstruction only when rates are passed explicitly
  if (!o.plot_dir.empty() && eo.plot_patients == 0) eo.plot_patients = 3;
  const auto factory = default_imputer_factory(c.model, ChainedOptions{5, 3, 1.0, *o.seed});
  EvalReport report;
  {
    Phase phase("evaluate");
    report = c.eval.strata.empty() ? evaluate_population(data, c.eval.methods, factory, eo)
                                   : stratified_eval(data, c.eval.methods, parse_stratum_kind(c.eval.strata), factory, eo);
  }
  write_resolved(c, c.output.dir);
  emit_all(report, c, o);
  ArtifactStore store(c.output.store);
  save_report(store, o.name.empty() ? "report" : o.name, report, o.force);
  std::cout << render_markdown(report, {c.eval.weighted_rmse});
  return 0;
}

int cmd_reconstruct(const Options& o) {
  require_seed(o, "reconstruct");
  RunConfig c = resolve_config(o);
  const Dataset data = load_source(c);
  EvalOptions eo = eval_options(c, *o.seed);
  eo.seeds.clear();
  if (!o.plot_dir.empty() && eo.plot_patients == 0) eo.plot_patients = 3;
  const auto factory = default_imputer_factory(c.model, ChainedOptions{5, 3, 1.0, *o.seed});
  EvalReport report;
  {
    Phase phase("reconstruct");
    report = evaluate_population(data, c.eval.methods, factory, eo);
  }
  write_resolved(c, c.output.dir);
  emit_all(report, c, o);
  ArtifactStore store(c.output.store);
  save_report(store, o.name.empty() ? "reconstruction" : o.name, report, o.force);
  std::cout << render_markdown(report, {c.eval.weighted_rmse});
  return 0;
}

int cmd_report(const Options& o) {
  const RunConfig c = resolve_config(o);
  const ArtifactStore store(c.output.store);
  const EvalReport report = load_report(store, o.name.empty() ? "report" : o.name);
  emit_all(report, c, o);
  return 0;
}

std::string quote(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out;
}

int fail(const std::string& kind, const std::string& message) {
  std::cerr << "error: kind=" << kind << " message=\"" << quote(message) << "\"\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("ignite");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e %l %v");

  CLI::App app{"IGNITE imputation toolkit for irregular clinical time series"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Run configuration (JSON with data/model/eval/output sections)")
      ->check(CLI::ExistingFile);
  app.add_option("--store", o.store, "Artifact store root (default: $IGNITE_STORE, then ./store)");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto data_flags = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "PhysioNet record directory, synthetic:n=..,F=..,K=..,T=..,seed=.., or store:NAME");
    sub->add_option("--outcomes", o.outcomes, "Outcomes CSV for a PhysioNet directory");
  };
  auto method_flags = [&](CLI::App* sub) {
    sub->add_option("--method", o.methods, "Imputation method (repeatable): locf, mean, mice, ignite")
        ->check(CLI::IsMember({"locf", "mean", "mice", "ignite"}));
    sub->add_option("--ablate", o.ablate, "Disable an IGNITE component (repeatable)")
        ->check(CLI::IsMember({"condition", "imm", "mit", "discriminator"}));
    sub->add_option("--epochs", o.epochs, "IGNITE training epochs")->check(CLI::NonNegativeNumber);
  };
  auto report_flags = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory for reports and the resolved config");
    sub->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "markdown"}));
    sub->add_option("--plot-dir", o.plot_dir, "Directory for per-patient SVG imputation plots");
    sub->add_flag("--weighted-rmse", o.weighted_rmse, "Add the missingness-weighted RMSE column");
  };
  auto name_flags = [&](CLI::App* sub, const std::string& what) {
    sub->add_option("--name", o.name, "Store name of the " + what);
    sub->add_flag("--force", o.force, "Overwrite an existing store entry");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "Load a cohort and save it to the artifact store");
  data_flags(ingest);
  name_flags(ingest, "dataset (default cohort)");

  CLI::App* profile = app.add_subcommand("profile", "Per-feature missingness table and stratum sizes");
  data_flags(profile);
  profile->add_option("--out", o.out, "CSV file for the feature table")->required();

  CLI::App* train = app.add_subcommand("train", "Train IGNITE on the training split and save a checkpoint");
  data_flags(train);
  train->add_option("--seed", o.seed, "Random seed (required)");
  train->add_option("--ablate", o.ablate, "Disable an IGNITE component (repeatable)")
      ->check(CLI::IsMember({"condition", "imm", "mit", "discriminator"}));
  train->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--out", o.out, "Directory for the resolved config");
  name_flags(train, "checkpoint (default ignite)");

  CLI::App* impute = app.add_subcommand("impute", "Impute a cohort with a checkpoint or a baseline");
  data_flags(impute);
  impute->add_option("--checkpoint", o.checkpoint, "IGNITE checkpoint name in the store");
  impute->add_option("--method", o.methods, "Baseline method instead of a checkpoint")
      ->check(CLI::IsMember({"locf", "mean", "mice"}));
  name_flags(impute, "imputation (default <method>_imputed)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Downstream mortality evaluation, optionally stratified");
  data_flags(evaluate);
  method_flags(evaluate);
  evaluate->add_option("--strata", o.strata, "Stratify by missingness kind")
      ->check(CLI::IsMember({"sample", "feature"}));
  evaluate->add_option("--mask-rate", o.mask_rates, "Also score reconstruction at this mask rate (repeatable)")
      ->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--seed", o.seed, "Random seed (required)");
  report_flags(evaluate);
  name_flags(evaluate, "report (default report)");

  CLI::App* reconstruct = app.add_subcommand("reconstruct", "Masked-reconstruction RMSE/MAE per method");
  data_flags(reconstruct);
  method_flags(reconstruct);
  reconstruct->add_option("--mask-rate", o.mask_rates, "Fraction of observed entries to hide (repeatable)")
      ->check(CLI::Range(0.0, 1.0));
  reconstruct->add_option("--seed", o.seed, "Random seed (required)");
  report_flags(reconstruct);
  name_flags(reconstruct, "report (default reconstruction)");

  CLI::App* report = app.add_subcommand("report", "Re-emit a stored evaluation report");
  report_flags(report);
  report->add_option("--name", o.name, "Stored report name (default report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  try {
    Phase phase("total");
    if (*ingest) return cmd_ingest(o);
    if (*profile) return cmd_profile(o);
    if (*train) return cmd_train(o);
    if (*impute) return cmd_impute(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*reconstruct) return cmd_reconstruct(o);
    if (*report) return cmd_report(o);
    return fail("usage", "no subcommand");
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
