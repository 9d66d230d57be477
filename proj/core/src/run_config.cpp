#include "ignite/run_config.hpp"

#include <charconv>
#include <set>

namespace ignite {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument("config section '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw InvalidArgument("unknown key '" + where + "." + it.key() + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument("config key '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  reject_unknown(j, {"data", "model", "eval", "output"}, "config");
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"source", "outcomes", "horizon_hours"}, "data");
    read(d, "source", c.data.source, "data");
    read(d, "outcomes", c.data.outcomes, "data");
    read(d, "horizon_hours", c.data.horizon_hours, "data");
  }
  if (j.contains("model")) c.model = ignite_config_from_json(j.at("model"));
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e,
                   {"methods", "strata", "mask_rates", "seeds", "train_fraction", "min_stratum",
                    "downstream_search_trials", "downstream_max_epochs", "plot_patients", "weighted_rmse"},
                   "eval");
    read(e, "methods", c.eval.methods, "eval");
    read(e, "strata", c.eval.strata, "eval");
    read(e, "mask_rates", c.eval.mask_rates, "eval");
    read(e, "seeds", c.eval.seeds, "eval");
    read(e, "train_fraction", c.eval.train_fraction, "eval");
    read(e, "min_stratum", c.eval.min_stratum, "eval");
    read(e, "downstream_search_trials", c.eval.downstream_search_trials, "eval");
    read(e, "downstream_max_epochs", c.eval.downstream_max_epochs, "eval");
    read(e, "plot_patients", c.eval.plot_patients, "eval");
    read(e, "weighted_rmse", c.eval.weighted_rmse, "eval");
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    reject_unknown(o, {"store", "dir", "formats"}, "output");
    read(o, "store", c.output.store, "output");
    read(o, "dir", c.output.dir, "output");
    read(o, "formats", c.output.formats, "output");
  }
  if (!c.eval.strata.empty()) parse_stratum_kind(c.eval.strata);
  for (const auto& f : c.output.formats) parse_report_format(f);
  for (double r : c.eval.mask_rates) {
    if (!(r > 0.0 && r < 1.0)) throw InvalidArgument("eval.mask_rates entries must be in (0, 1)");
  }
  if (!(c.eval.train_fraction > 0.0 && c.eval.train_fraction < 1.0)) {
    throw InvalidArgument("eval.train_fraction must be in (0, 1)");
  }
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"data", {{"source", c.data.source}, {"outcomes", c.data.outcomes}, {"horizon_hours", c.data.horizon_hours}}},
      {"model", to_json(c.model)},
      {"eval",
       {{"methods", c.eval.methods},
        {"strata", c.eval.strata},
        {"mask_rates", c.eval.mask_rates},
        {"seeds", c.eval.seeds},
        {"train_fraction", c.eval.train_fraction},
        {"min_stratum", c.eval.min_stratum},
        {"downstream_search_trials", c.eval.downstream_search_trials},
        {"downstream_max_epochs", c.eval.downstream_max_epochs},
        {"plot_patients", c.eval.plot_patients},
        {"weighted_rmse", c.eval.weighted_rmse}}},
      {"output", {{"store", c.output.store}, {"dir", c.output.dir}, {"formats", c.output.formats}}},
  };
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j);
}

SyntheticSpec parse_synthetic_source(const std::string& source) {
  const std::string prefix = "synthetic:";
  if (source.rfind("synthetic", 0) != 0) throw InvalidArgument("not a synthetic source: '" + source + "'");
  SyntheticSpec spec;
  if (source == "synthetic") return spec;
  if (source.rfind(prefix, 0) != 0) throw InvalidArgument("malformed synthetic source '" + source + "'");
  std::string rest = source.substr(prefix.size());
  std::size_t pos = 0;
  while (pos < rest.size()) {
    std::size_t end = rest.find(',', pos);
    if (end == std::string::npos) end = rest.size();
    const std::string item = rest.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("synthetic source item '" + item + "' lacks '='");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size() || v < 0) {
      throw InvalidArgument("synthetic source value '" + value + "' is not a non-negative integer");
    }
    if (key == "n") spec.n_patients = static_cast<int>(v);
    else if (key == "F") spec.features = static_cast<int>(v);
    else if (key == "K") spec.treatments = static_cast<int>(v);
    else if (key == "T") spec.steps = static_cast<int>(v);
    else if (key == "seed") spec.seed = static_cast<std::uint64_t>(v);
    else throw InvalidArgument("unknown synthetic source key '" + key + "' (expected n, F, K, T, seed)");
    pos = end + 1;
  }
  return spec;
}

EvalOptions eval_options(const RunConfig& c, std::uint64_t seed) {
  EvalOptions o;
  o.seeds.clear();
  for (std::uint64_t s : c.eval.seeds) o.seeds.push_back(seed + s);
  o.split_seed = seed;
  o.train_fraction = c.eval.train_fraction;
  o.min_stratum = c.eval.min_stratum;
  o.mask_rates = c.eval.mask_rates;
  o.plot_patients = c.eval.plot_patients;
  o.downstream.search_trials = c.eval.downstream_search_trials;
  o.downstream.max_epochs = c.eval.downstream_max_epochs;
  return o;
}

}  // namespace ignite
