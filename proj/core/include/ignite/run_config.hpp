#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ignite/evaluation.hpp"
#include "ignite/ingest.hpp"
#include "ignite/model.hpp"

namespace ignite {

struct DataSection {
  // A PhysioNet record directory, "synthetic:n=..,F=..,K=..,T=..,seed=..",
  // or "store:NAME" for a dataset saved in the artifact store.
  std::string source;
  // Outcomes CSV for PhysioNet directories; empty looks for Outcomes-a.txt
  // next to the record directory.
  std::string outcomes;
  int horizon_hours = 48;
};

struct EvalSection {
  std::vector<std::string> methods{"locf", "mean", "mice", "ignite"};
  std::string strata;  // empty, sample or feature
  std::vector<double> mask_rates{0.1, 0.2, 0.5};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double train_fraction = 0.8;
  std::size_t min_stratum = 800;
  int downstream_search_trials = 6;
  int downstream_max_epochs = 100;
  int plot_patients = 0;
  bool weighted_rmse = false;
};

struct OutputSection {
  std::string store = "store";
  std::string dir = "out";
  std::vector<std::string> formats{"markdown"};
};

struct RunConfig {
  DataSection data;
  IgniteConfig model;
  EvalSection eval;
  OutputSection output;
};

// Unknown keys anywhere raise InvalidArgument.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

SyntheticSpec parse_synthetic_source(const std::string& source);

EvalOptions eval_options(const RunConfig& config, std::uint64_t seed);

}  // namespace ignite
