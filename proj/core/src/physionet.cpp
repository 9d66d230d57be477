#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "ignite/ingest.hpp"

namespace ignite {

const std::vector<std::string>& physionet_features() {
  static const std::vector<std::string> names = {
      "ALP",     "HR",        "DiasABP", "Na",          "Lactate",  "NIDiasABP", "PaO2",
      "WBC",     "pH",        "Albumin", "ALT",         "Glucose",  "SaO2",      "Temp",
      "AST",     "Bilirubin", "BUN",     "RespRate",    "Mg",       "HCT",       "SysABP",
      "FiO2",    "K",         "GCS",     "Cholesterol", "NISysABP", "TroponinT", "MAP",
      "TroponinI", "PaCO2",   "Platelets", "Urine",     "NIMAP",    "Creatinine", "HCO3"};
  return names;
}

const std::vector<std::string>& physionet_treatments() {
  static const std::vector<std::string> names = {"MechVent"};
  return names;
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

int parse_minutes(const std::string& s, std::size_t line_no) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) {
    throw ParseError("line " + std::to_string(line_no) + ": time '" + s + "' is not HH:MM");
  }
  double hh = 0, mm = 0;
  if (!parse_double(s.substr(0, colon), hh) || !parse_double(s.substr(colon + 1), mm) || hh < 0 || mm < 0 ||
      mm >= 60) {
    throw ParseError("line " + std::to_string(line_no) + ": time '" + s + "' is not HH:MM");
  }
  return static_cast<int>(hh) * 60 + static_cast<int>(mm);
}

const std::unordered_set<std::string>& descriptor_names() {
  static const std::unordered_set<std::string> names = {"RecordID", "Age", "Gender", "Height", "ICUType",
                                                        "Weight"};
  return names;
}

}  // namespace

RawRecord parse_physionet_record(std::istream& in) {
  static const std::unordered_set<std::string> vocab = [] {
    std::unordered_set<std::string> v(physionet_features().begin(), physionet_features().end());
    for (const auto& t : physionet_treatments()) v.insert(t);
    return v;
  }();

  RawRecord rec;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::set<std::string> ignored;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!header_seen) {
      const auto fields = split_csv(line);
      if (fields.size() != 3 || fields[0] != "Time" || fields[1] != "Parameter" || fields[2] != "Value") {
        throw ParseError("line " + std::to_string(line_no) + ": expected header 'Time,Parameter,Value'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 3) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    const int minute = parse_minutes(fields[0], line_no);
    const std::string& param = fields[1];
    double value = 0.0;
    if (param.empty() || !parse_double(fields[2], value)) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed parameter/value");
    }

    if (minute == 0 && descriptor_names().count(param) > 0) {
      if (param == "RecordID") rec.record_id = static_cast<std::int64_t>(value);
      else if (param == "Age") rec.descriptors.age = value;
      else if (param == "Gender") rec.descriptors.gender = (value == 0.0 || value == 1.0) ? static_cast<int>(value) : -1;
      else if (param == "Height") rec.descriptors.height = value;
      else if (param == "ICUType") rec.descriptors.icu_type = static_cast<int>(value);
      else if (param == "Weight") rec.descriptors.weight = value;
      continue;
    }
    if (vocab.count(param) == 0) {
      ignored.insert(param);
      continue;
    }
    rec.events.push_back({minute, param, value});
  }
  if (!header_seen) throw ParseError("line 1: expected header 'Time,Parameter,Value'");

  std::stable_sort(rec.events.begin(), rec.events.end(),
                   [](const Event& a, const Event& b) { return a.minute < b.minute; });
  rec.ignored.assign(ignored.begin(), ignored.end());
  return rec;
}

RawRecord parse_physionet_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open record file " + path.string());
  try {
    return parse_physionet_record(in);
  } catch (const ParseError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
}

namespace {

std::map<std::int64_t, int> read_outcomes(const std::filesystem::path& outcomes_file) {
  std::ifstream in(outcomes_file);
  if (!in) throw NotFoundError("cannot open outcomes file " + outcomes_file.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(outcomes_file.string() + ": empty outcomes file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  const auto id_it = std::find(header.begin(), header.end(), "RecordID");
  const auto y_it = std::find(header.begin(), header.end(), "In-hospital_death");
  if (id_it == header.end() || y_it == header.end()) {
    throw ParseError(outcomes_file.string() + ": needs RecordID and In-hospital_death columns");
  }
  const auto id_col = static_cast<std::size_t>(id_it - header.begin());
  const auto y_col = static_cast<std::size_t>(y_it - header.begin());

  std::map<std::int64_t, int> outcomes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    double id = 0, y = 0;
    if (fields.size() <= std::max(id_col, y_col) || !parse_double(fields[id_col], id) ||
        !parse_double(fields[y_col], y)) {
      throw ParseError(outcomes_file.string() + ": line " + std::to_string(line_no) + " is malformed");
    }
    const auto key = static_cast<std::int64_t>(id);
    if (!outcomes.emplace(key, y > 0.5 ? 1 : 0).second) {
      throw InvalidArgument(outcomes_file.string() + ": duplicate RecordID " + std::to_string(key));
    }
  }
  return outcomes;
}

}  // namespace

Dataset load_physionet_cohort(const std::filesystem::path& record_dir,
                              const std::filesystem::path& outcomes_file, CohortLoadSummary* summary,
                              int horizon_hours) {
  const auto outcomes = read_outcomes(outcomes_file);
  if (!std::filesystem::is_directory(record_dir)) {
    throw NotFoundError("record directory " + record_dir.string() + " does not exist");
  }

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(record_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt" &&
        entry.path().filename() != outcomes_file.filename()) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  Dataset data;
  data.feature_names = physionet_features();
  data.treatment_names = physionet_treatments();
  std::set<std::int64_t> seen;
  std::size_t without_outcome = 0;

  for (const auto& path : files) {
    RawRecord raw = parse_physionet_file(path);
    if (raw.record_id < 0) throw ParseError(path.filename().string() + ": no RecordID descriptor");
    if (!seen.insert(raw.record_id).second) {
      throw InvalidArgument("duplicate record_id " + std::to_string(raw.record_id) + " in " + record_dir.string());
    }
    auto it = outcomes.find(raw.record_id);
    if (it == outcomes.end()) {
      ++without_outcome;
      continue;
    }
    PatientRecord rec = hourly_aggregate(raw, horizon_hours);
    rec.y = it->second;
    data.records.push_back(std::move(rec));
  }

  if (files.empty()) spdlog::warn("no record files found in {}", record_dir.string());
  if (without_outcome > 0) spdlog::info("excluded {} records without an outcome", without_outcome);
  if (summary != nullptr) {
    summary->files = files.size();
    summary->without_outcome = without_outcome;
  }
  return data;
}

}  // namespace ignite
