#include "ignite/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

namespace ignite {

ReconstructionScore reconstruction_eval(const Imputer& imputer, const Dataset& test_set, double mask_rate,
                                        std::uint64_t seed, ReconstructionSample* sample) {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw InvalidArgument("mask rate must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<PatientRecord> masked;
  std::vector<Matrix> hidden;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const PatientRecord& r = test_set.records[i];
    if (r.M.sum() == 0.0) continue;
    Matrix h;
    masked.push_back(hide_observed(r, mask_rate, rng, &h));
    hidden.push_back(std::move(h));
    source.push_back(i);
  }
  ReconstructionScore score;
  if (masked.empty()) {
    spdlog::warn("reconstruction: no patient has maskable entries");
    return score;
  }
  auto imputed = imputer.impute(masked);
  std::vector<double> rmse, mae, weight;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    const PatientRecord& truth = test_set.records[source[i]];
    double sq = 0.0, ab = 0.0, count = 0.0;
    for (Index k = 0; k < hidden[i].size(); ++k) {
      if (hidden[i](k) == 0.0) continue;
      const double d = imputed[i].X_hat(k) - truth.X(k);
      sq += d * d;
      ab += std::abs(d);
      count += 1.0;
    }
    rmse.push_back(std::sqrt(sq / count));
    mae.push_back(ab / count);
    weight.push_back(count / static_cast<double>(hidden[i].size()));
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return std::pair<double, double>{m, std::sqrt(var / n)};
  };
  std::tie(score.rmse_mean, score.rmse_std) = mean_std(rmse);
  std::tie(score.mae_mean, score.mae_std) = mean_std(mae);
  double wsum = 0.0, wr = 0.0;
  for (std::size_t i = 0; i < rmse.size(); ++i) {
    wsum += weight[i];
    wr += weight[i] * rmse[i];
  }
  score.rmse_weighted = wsum > 0.0 ? wr / wsum : 0.0;
  score.patients = masked.size();
  if (sample) {
    sample->masked = std::move(masked);
    sample->hidden = std::move(hidden);
    sample->imputed = std::move(imputed);
  }
  return score;
}

ImputerFactory default_imputer_factory(const IgniteConfig& ignite, const ChainedOptions& chained) {
  return [ignite, chained](const std::string& method) -> std::unique_ptr<Imputer> {
    if (method == "locf") return std::make_unique<LocfImputer>();
    if (method == "mean") return std::make_unique<MeanImputer>();
    if (method == "mice") return std::make_unique<ChainedImputer>(chained);
    if (method == "ignite") return std::make_unique<IgniteImputer>(ignite);
    throw InvalidArgument("unknown imputation method '" + method + "'");
  };
}

namespace {

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

void add_plot_series(EvalReport& report, const std::string& method, double rate, const ReconstructionSample& sample,
                     const Dataset& test, const NormalizationStats& stats, int patients) {
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(patients), sample.masked.size());
  for (std::size_t i = 0; i < n; ++i) {
    const PatientRecord& masked = sample.masked[i];
    const Matrix recovered = denormalize_matrix(sample.imputed[i].X_hat, stats);
    const Matrix observed = denormalize_matrix(masked.X, stats);
    // The sample holds records in test order, skipping those without observations.
    const PatientRecord* truth = nullptr;
    for (const auto& r : test.records) {
      if (r.record_id == masked.record_id) truth = &r;
    }
    if (!truth) continue;
    const Matrix truth_raw = denormalize_matrix(truth->X, stats);
    for (Index f = 0; f < masked.features(); ++f) {
      if (sample.hidden[i].col(f).sum() == 0.0) continue;
      PlotSeries* series = nullptr;
      for (auto& s : report.plots) {
        if (s.record_id == masked.record_id && s.feature == test.feature_names[static_cast<std::size_t>(f)] &&
            s.mask_rate == rate) {
          series = &s;
        }
      }
      if (!series) {
        PlotSeries s;
        s.record_id = masked.record_id;
        s.feature = test.feature_names[static_cast<std::size_t>(f)];
        s.mask_rate = rate;
        for (Index t = 0; t < masked.steps(); ++t) {
          s.observed.push_back(masked.M(t, f) == 1.0 ? observed(t, f) : kMissing);
          s.ground_truth.push_back(sample.hidden[i](t, f) == 1.0 ? truth_raw(t, f) : kMissing);
        }
        report.plots.push_back(std::move(s));
        series = &report.plots.back();
      }
      std::vector<double> values;
      for (Index t = 0; t < masked.steps(); ++t) values.push_back(recovered(t, f));
      series->imputed[method] = std::move(values);
    }
  }
}

}  // namespace

EvalReport evaluate_population(const Dataset& data, const std::vector<std::string>& methods,
                               const ImputerFactory& factory, const EvalOptions& options,
                               const std::string& stratum_label) {
  if (methods.empty()) throw InvalidArgument("evaluation needs at least one method");
  if (data.size() == 0) throw InvalidArgument("evaluation on an empty cohort");
  data.validate();
  EvalReport report;
  StratumPopulation pop{stratum_label == "all" ? "all" : "subset", stratum_label, data.size(), 0, false};
  for (const auto& r : data.records) pop.positives += r.y == 1 ? 1 : 0;
  report.populations.push_back(pop);
  const Split split = train_test_split(data.size(), options.train_fraction, options.split_seed);
  const Dataset raw_train = subset(data, split.train);
  const NormalizationStats stats = fit_normalization(raw_train);
  const Dataset train = normalize(raw_train, stats);
  const Dataset test = normalize(subset(data, split.test), stats);

  std::set<std::int64_t> train_ids;
  for (const auto& r : train.records) train_ids.insert(r.record_id);
  for (const auto& r : test.records) {
    if (train_ids.count(r.record_id)) throw InvalidArgument("evaluation: record in both training and test split");
  }
  const bool downstream = !options.seeds.empty();
  if (downstream && (train.prevalence() == 0.0 || train.prevalence() == 1.0)) {
    throw InvalidArgument("evaluation: training split contains a single outcome class");
  }

  for (const std::string& method : methods) {
    auto started = std::chrono::steady_clock::now();
    std::unique_ptr<Imputer> imputer = factory(method);
    imputer->fit(train);
    spdlog::info("[{}] {}: imputer fitted in {:.1f}s", stratum_label, method, elapsed(started));

    if (downstream) {
      started = std::chrono::steady_clock::now();
      const ImputedSet train_set = make_imputed_set(imputer->impute(train.records), train.records);
      const ImputedSet test_set = make_imputed_set(imputer->impute(test.records), test.records);
      DownstreamHyper hyper;
      auto classifiers = train_downstream(train_set, options.seeds, options.downstream, &hyper);
      for (std::size_t s = 0; s < classifiers.size(); ++s) {
        const Vector p = classifiers[s].predict(test_set.X);
        DownstreamCell cell{method, stratum_label, options.seeds[s], 0.0, 0.0};
        try {
          cell.auroc = auroc(p, test_set.y);
          cell.auprc = auprc(p, test_set.y);
        } catch (const MetricError& e) {
          spdlog::warn("[{}] {}: {}", stratum_label, method, e.what());
          continue;
        }
        report.downstream.push_back(cell);
      }
      spdlog::info("[{}] {}: downstream (dropout {:.2f}, lr {:.1e}, batch {}) in {:.1f}s", stratum_label, method,
                   hyper.dropout, hyper.learning_rate, hyper.batch_size, elapsed(started));
    }

    for (double rate : options.mask_rates) {
      started = std::chrono::steady_clock::now();
      ReconstructionSample sample;
      const std::uint64_t mask_seed = options.split_seed + static_cast<std::uint64_t>(std::llround(rate * 1000.0));
      ReconstructionCell cell{method, rate,
                              reconstruction_eval(*imputer, test, rate, mask_seed,
                                                  options.plot_patients > 0 ? &sample : nullptr)};
      if (options.plot_patients > 0) add_plot_series(report, method, rate, sample, test, stats, options.plot_patients);
      spdlog::info("[{}] {}: reconstruction at {:.0f}% rmse {:.4f} in {:.1f}s", stratum_label, method, rate * 100.0,
                   cell.score.rmse_mean, elapsed(started));
      report.reconstruction.push_back(cell);
    }
  }
  add_significance(report);
  return report;
}

EvalReport stratified_eval(const Dataset& data, const std::vector<std::string>& methods, StratumKind kind,
                           const ImputerFactory& factory, const EvalOptions& options) {
  const Stratification strata = stratify(data, kind, options.min_stratum, options.bounds);
  EvalReport report;
  std::size_t populated = 0;
  for (Stratum s : {Stratum::Low, Stratum::Mid, Stratum::High}) {
    StratumPopulation pop;
    pop.kind = to_string(kind);
    pop.stratum = to_string(s);
    const auto it = strata.indices.find(s);
    const std::vector<std::size_t> idx = it == strata.indices.end() ? std::vector<std::size_t>{} : it->second;
    pop.n = idx.size();
    for (std::size_t i : idx) pop.positives += data.records[i].y == 1 ? 1 : 0;
    pop.excluded = strata.excluded.count(s) ? strata.excluded.at(s) : true;
    report.populations.push_back(pop);
    if (pop.excluded) {
      spdlog::info("{} stratum {} excluded ({} records)", pop.kind, pop.stratum, pop.n);
      continue;
    }
    ++populated;
    EvalReport part = evaluate_population(subset(data, idx), methods, factory, options, pop.stratum);
    for (auto& c : part.downstream) report.downstream.push_back(std::move(c));
    for (auto& c : part.reconstruction) report.reconstruction.push_back(std::move(c));
    for (auto& c : part.plots) report.plots.push_back(std::move(c));
  }
  if (populated == 0) spdlog::warn("all {} strata are below {} records; the report is empty", to_string(kind),
                                   options.min_stratum);
  add_significance(report);
  return report;
}

void add_significance(EvalReport& report) {
  report.significance.clear();
  std::vector<std::string> methods, strata;
  for (const auto& c : report.downstream) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    if (std::find(strata.begin(), strata.end(), c.stratum) == strata.end()) strata.push_back(c.stratum);
  }
  for (const auto& stratum : strata) {
    for (const auto& a : methods) {
      for (const auto& b : methods) {
        if (a == b) continue;
        for (const char* metric : {"auroc", "auprc"}) {
          std::vector<double> va, vb;
          for (const auto& ca : report.downstream) {
            if (ca.method != a || ca.stratum != stratum) continue;
            for (const auto& cb : report.downstream) {
              if (cb.method == b && cb.stratum == stratum && cb.seed == ca.seed) {
                const bool roc = std::string(metric) == "auroc";
                va.push_back(roc ? ca.auroc : ca.auprc);
                vb.push_back(roc ? cb.auroc : cb.auprc);
              }
            }
          }
          if (va.empty()) continue;
          report.significance.push_back({a, b, stratum, metric, wilcoxon_signed_rank(va, vb).p});
        }
      }
    }
  }
}

void EvalReport::validate() const {
  auto unit = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(what) + " outside [0, 1]");
  };
  for (const auto& c : downstream) {
    unit(c.auroc, "AUROC");
    unit(c.auprc, "AUPRC");
  }
  for (const auto& c : reconstruction) {
    const auto& s = c.score;
    if (!(s.rmse_mean >= 0.0 && s.rmse_std >= 0.0 && s.mae_mean >= 0.0 && s.mae_std >= 0.0)) {
      throw InvalidArgument("reconstruction errors must be non-negative");
    }
  }
  for (const auto& c : significance) {
    if (!(c.p > 0.0 && c.p <= 1.0)) throw InvalidArgument("p-value outside (0, 1]");
  }
}

nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  json j;
  j["populations"] = json::array();
  for (const auto& p : r.populations) {
    j["populations"].push_back(
        {{"kind", p.kind}, {"stratum", p.stratum}, {"n", p.n}, {"positives", p.positives}, {"excluded", p.excluded}});
  }
  j["downstream"] = json::array();
  for (const auto& c : r.downstream) {
    j["downstream"].push_back(
        {{"method", c.method}, {"stratum", c.stratum}, {"seed", c.seed}, {"auroc", c.auroc}, {"auprc", c.auprc}});
  }
  j["reconstruction"] = json::array();
  for (const auto& c : r.reconstruction) {
    j["reconstruction"].push_back({{"method", c.method},
                                   {"mask_rate", c.mask_rate},
                                   {"rmse_mean", c.score.rmse_mean},
                                   {"rmse_std", c.score.rmse_std},
                                   {"mae_mean", c.score.mae_mean},
                                   {"mae_std", c.score.mae_std},
                                   {"rmse_weighted", c.score.rmse_weighted},
                                   {"patients", c.score.patients}});
  }
  j["significance"] = json::array();
  for (const auto& c : r.significance) {
    j["significance"].push_back({{"method", c.method},
                                 {"baseline", c.baseline},
                                 {"stratum", c.stratum},
                                 {"metric", c.metric},
                                 {"p", c.p}});
  }
  j["plots"] = json::array();
  for (const auto& p : r.plots) {
    auto nan_to_null = [](const std::vector<double>& v) {
      json a = json::array();
      for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
      return a;
    };
    json imputed = json::object();
    for (const auto& [m, v] : p.imputed) imputed[m] = nan_to_null(v);
    j["plots"].push_back({{"record_id", p.record_id},
                          {"feature", p.feature},
                          {"mask_rate", p.mask_rate},
                          {"observed", nan_to_null(p.observed)},
                          {"ground_truth", nan_to_null(p.ground_truth)},
                          {"imputed", imputed}});
  }
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    for (const auto& p : j.at("populations")) {
      r.populations.push_back({p.at("kind"), p.at("stratum"), p.at("n"), p.at("positives"), p.at("excluded")});
    }
    for (const auto& c : j.at("downstream")) {
      r.downstream.push_back({c.at("method"), c.at("stratum"), c.at("seed"), c.at("auroc"), c.at("auprc")});
    }
    for (const auto& c : j.at("reconstruction")) {
      ReconstructionCell cell;
      cell.method = c.at("method");
      cell.mask_rate = c.at("mask_rate");
      cell.score.rmse_mean = c.at("rmse_mean");
      cell.score.rmse_std = c.at("rmse_std");
      cell.score.mae_mean = c.at("mae_mean");
      cell.score.mae_std = c.at("mae_std");
      cell.score.rmse_weighted = c.value("rmse_weighted", 0.0);
      cell.score.patients = c.value("patients", std::size_t{0});
      r.reconstruction.push_back(cell);
    }
    for (const auto& c : j.at("significance")) {
      r.significance.push_back({c.at("method"), c.at("baseline"), c.at("stratum"), c.at("metric"), c.at("p")});
    }
    auto null_to_nan = [](const nlohmann::json& a) {
      std::vector<double> v;
      for (const auto& x : a) v.push_back(x.is_null() ? kMissing : x.get<double>());
      return v;
    };
    if (j.contains("plots")) {
      for (const auto& p : j.at("plots")) {
        PlotSeries s;
        s.record_id = p.at("record_id");
        s.feature = p.at("feature");
        s.mask_rate = p.at("mask_rate");
        s.observed = null_to_nan(p.at("observed"));
        s.ground_truth = null_to_nan(p.at("ground_truth"));
        for (auto it = p.at("imputed").begin(); it != p.at("imputed").end(); ++it) s.imputed[it.key()] = null_to_nan(*it);
        r.plots.push_back(std::move(s));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
  r.validate();
  return r;
}

}  // namespace ignite
