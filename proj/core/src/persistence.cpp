#include "ignite/persistence.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <regex>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

namespace ignite {

static_assert(std::endian::native == std::endian::little, "array files are written in host byte order");

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) throw Error("io", "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void check_name(const std::string& name) {
  static const std::regex ok("[A-Za-z0-9][A-Za-z0-9._-]*");
  if (!std::regex_match(name, ok) || name.find("..") != std::string::npos) {
    throw InvalidArgument("invalid artifact name '" + name + "'");
  }
}

std::string to_bytes(const Matrix& m) {
  std::string bytes(static_cast<std::size_t>(m.size()) * sizeof(double), '\0');
  std::size_t offset = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      std::memcpy(bytes.data() + offset, &v, sizeof v);
      offset += sizeof v;
    }
  }
  return bytes;
}

nlohmann::json entry_to_json(const ManifestEntry& e) {
  nlohmann::json arrays = nlohmann::json::object();
  for (const auto& [k, a] : e.arrays) {
    arrays[k] = {{"file", a.file}, {"shape", {a.rows, a.cols}}, {"dtype", a.dtype}, {"sha256", a.sha256}};
  }
  return {{"kind", e.kind}, {"created_at", e.created_at}, {"arrays", arrays}, {"meta", e.meta}};
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.kind = j.at("kind");
  e.created_at = j.at("created_at");
  e.meta = j.value("meta", nlohmann::json::object());
  for (auto it = j.at("arrays").begin(); it != j.at("arrays").end(); ++it) {
    ArrayInfo a;
    a.file = it->at("file");
    a.rows = it->at("shape").at(0);
    a.cols = it->at("shape").at(1);
    a.dtype = it->at("dtype");
    a.sha256 = it->at("sha256");
    e.arrays[it.key()] = a;
  }
  return e;
}

}  // namespace

ArtifactStore::ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw InvalidArgument("cannot create store '" + root_.string() + "': " + ec.message());
  load_manifest();
}

void ArtifactStore::load_manifest() {
  manifest_.clear();
  const auto path = root_ / "manifest.json";
  if (!std::filesystem::exists(path)) return;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    for (auto it = j.at("entries").begin(); it != j.at("entries").end(); ++it) {
      manifest_[it.key()] = entry_from_json(*it);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("unreadable manifest '" + path.string() + "': " + e.what());
  }
}

void ArtifactStore::save_manifest() const {
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [name, e] : manifest_) entries[name] = entry_to_json(e);
  const nlohmann::json j = {{"format", 1}, {"entries", entries}};
  write_file_atomic(root_ / "manifest.json", j.dump(2) + "\n");
}

std::vector<std::string> ArtifactStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : manifest_) out.push_back(name);
  return out;
}

const ManifestEntry& ArtifactStore::entry(const std::string& name) const {
  const auto it = manifest_.find(name);
  if (it == manifest_.end()) throw NotFoundError("no artifact named '" + name + "' in " + root_.string());
  return it->second;
}

void ArtifactStore::put(const std::string& name, const std::string& kind, const std::map<std::string, Matrix>& arrays,
                        const nlohmann::json& meta, bool force) {
  check_name(name);
  if (contains(name) && !force) {
    throw InvalidArgument("artifact '" + name + "' already exists (use force to overwrite)");
  }
  const auto dir = entry_dir(name);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InvalidArgument("cannot create '" + dir.string() + "': " + ec.message());

  ManifestEntry e;
  e.kind = kind;
  e.created_at = utc_now();
  e.meta = meta;
  for (const auto& [key, m] : arrays) {
    check_name(key);
    const std::string bytes = to_bytes(m);
    ArrayInfo info;
    info.file = name + "/" + key + ".f64";
    info.rows = m.rows();
    info.cols = m.cols();
    info.sha256 = sha256_hex(bytes.data(), bytes.size());
    write_file_atomic(root_ / info.file, bytes);
    e.arrays[key] = info;
  }
  // Files of a replaced entry that the new entry no longer uses.
  if (auto old = manifest_.find(name); old != manifest_.end()) {
    for (const auto& [key, info] : old->second.arrays) {
      if (!e.arrays.count(key)) std::filesystem::remove(root_ / info.file, ec);
    }
  }
  manifest_[name] = std::move(e);
  save_manifest();
}

Matrix ArtifactStore::array(const std::string& name, const std::string& key) const {
  const ManifestEntry& e = entry(name);
  const auto it = e.arrays.find(key);
  if (it == e.arrays.end()) throw NotFoundError("artifact '" + name + "' has no array '" + key + "'");
  const ArrayInfo& info = it->second;
  if (info.dtype != "f64") throw CorruptionError("unsupported dtype '" + info.dtype + "'");
  std::string bytes;
  try {
    bytes = read_file(root_ / info.file);
  } catch (const NotFoundError&) {
    throw CorruptionError("array file '" + info.file + "' is missing");
  }
  if (bytes.size() != static_cast<std::size_t>(info.rows * info.cols) * sizeof(double)) {
    throw CorruptionError("array '" + info.file + "' has the wrong size");
  }
  if (sha256_hex(bytes.data(), bytes.size()) != info.sha256) {
    throw CorruptionError("checksum mismatch for '" + info.file + "'");
  }
  Matrix m(info.rows, info.cols);
  std::size_t offset = 0;
  for (Index r = 0; r < info.rows; ++r) {
    for (Index c = 0; c < info.cols; ++c) {
      std::memcpy(&m(r, c), bytes.data() + offset, sizeof(double));
      offset += sizeof(double);
    }
  }
  return m;
}

void ArtifactStore::remove(const std::string& name) {
  entry(name);
  manifest_.erase(name);
  save_manifest();
  std::error_code ec;
  std::filesystem::remove_all(entry_dir(name), ec);
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

Matrix stack_rows(const std::vector<PatientRecord>& records, const Matrix PatientRecord::*field) {
  if (records.empty()) return Matrix(0, 0);
  const Matrix& first = records.front().*field;
  Matrix out(static_cast<Index>(records.size()), first.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Matrix& m = records[i].*field;
    for (Index t = 0; t < m.rows(); ++t) out.block(static_cast<Index>(i), t * m.cols(), 1, m.cols()) = m.row(t);
  }
  return out;
}

Matrix unstack_row(const Matrix& flat, Index row, Index rows, Index cols) {
  Matrix out(rows, cols);
  for (Index t = 0; t < rows; ++t) out.row(t) = flat.block(row, t * cols, 1, cols);
  return out;
}

}  // namespace

void save_dataset(ArtifactStore& store, const std::string& name, const Dataset& data, bool force) {
  data.validate();
  const Index N = static_cast<Index>(data.size());
  std::map<std::string, Matrix> arrays;
  arrays["X"] = stack_rows(data.records, &PatientRecord::X);
  arrays["M"] = stack_rows(data.records, &PatientRecord::M);
  arrays["A"] = stack_rows(data.records, &PatientRecord::A);
  Matrix d(N, data.demographic_dim()), ids(N, 1), y(N, 1);
  for (Index i = 0; i < N; ++i) {
    const auto& r = data.records[static_cast<std::size_t>(i)];
    d.row(i) = r.d.transpose();
    ids(i, 0) = static_cast<double>(r.record_id);
    y(i, 0) = r.y;
  }
  arrays["d"] = d;
  arrays["record_id"] = ids;
  arrays["y"] = y;
  nlohmann::json meta = {{"patients", N},
                         {"steps", data.steps()},
                         {"features", data.feature_names},
                         {"treatments", data.treatment_names}};
  if (data.normalization) {
    arrays["norm_min"] = data.normalization->min.transpose();
    arrays["norm_max"] = data.normalization->max.transpose();
  }
  store.put(name, "dataset", arrays, meta, force);
}

Dataset load_dataset(const ArtifactStore& store, const std::string& name) {
  const ManifestEntry& e = store.entry(name);
  if (e.kind != "dataset") throw InvalidArgument("artifact '" + name + "' is a " + e.kind + ", not a dataset");
  Dataset data;
  const Index N = e.meta.at("patients");
  const Index T = e.meta.at("steps");
  data.feature_names = e.meta.at("features").get<std::vector<std::string>>();
  data.treatment_names = e.meta.at("treatments").get<std::vector<std::string>>();
  const Index F = data.features();
  const Index K = data.treatments();
  const Matrix X = store.array(name, "X"), M = store.array(name, "M"), A = store.array(name, "A");
  const Matrix d = store.array(name, "d"), ids = store.array(name, "record_id"), y = store.array(name, "y");
  if (X.rows() != N || (N > 0 && X.cols() != T * F)) throw CorruptionError("dataset '" + name + "' has an inconsistent shape");
  data.records.resize(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) {
    auto& r = data.records[static_cast<std::size_t>(i)];
    r.record_id = static_cast<std::int64_t>(ids(i, 0));
    r.X = unstack_row(X, i, T, F);
    r.M = unstack_row(M, i, T, F);
    r.A = unstack_row(A, i, T, K);
    r.d = d.row(i).transpose();
    r.y = static_cast<int>(y(i, 0));
  }
  if (e.arrays.count("norm_min")) {
    data.normalization = NormalizationStats{store.array(name, "norm_min").row(0).transpose(),
                                            store.array(name, "norm_max").row(0).transpose()};
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(ArtifactStore& store, const std::string& name, const IgniteModel& model, bool force) {
  std::map<std::string, Matrix> arrays;
  for (std::size_t i = 0; i < model.generator().size(); ++i) {
    arrays["gen." + model.generator()[i].name] = model.generator()[i].value;
  }
  for (std::size_t i = 0; i < model.discriminator().size(); ++i) {
    arrays["disc." + model.discriminator()[i].name] = model.discriminator()[i].value;
  }
  const ModelShape& s = model.shape();
  nlohmann::json meta = {{"config", to_json(model.config())},
                         {"shape",
                          {{"steps", s.steps},
                           {"features", s.features},
                           {"treatments", s.treatments},
                           {"demographics", s.demographics}}},
                         {"feature_names", model.feature_names}};
  if (model.normalization) {
    arrays["norm_min"] = model.normalization->min.transpose();
    arrays["norm_max"] = model.normalization->max.transpose();
  }
  store.put(name, "checkpoint", arrays, meta, force);
}

IgniteModel load_checkpoint(const ArtifactStore& store, const std::string& name,
                            const std::optional<ModelShape>& expected) {
  const ManifestEntry& e = store.entry(name);
  if (e.kind != "checkpoint") throw InvalidArgument("artifact '" + name + "' is a " + e.kind + ", not a checkpoint");
  const auto& js = e.meta.at("shape");
  const ModelShape shape{js.at("steps"), js.at("features"), js.at("treatments"), js.at("demographics")};
  if (expected && !(*expected == shape)) {
    throw ShapeError("checkpoint '" + name + "' was trained for T=" + std::to_string(shape.steps) +
                     ", F=" + std::to_string(shape.features) + ", K=" + std::to_string(shape.treatments) +
                     " but the data has T=" + std::to_string(expected->steps) + ", F=" +
                     std::to_string(expected->features) + ", K=" + std::to_string(expected->treatments));
  }
  IgniteModel model(ignite_config_from_json(e.meta.at("config")), shape);
  auto load_set = [&](nn::ParameterSet& set, const std::string& prefix) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const std::string key = prefix + set[i].name;
      if (!e.arrays.count(key)) throw CorruptionError("checkpoint '" + name + "' lacks parameter " + set[i].name);
      Matrix v = store.array(name, key);
      if (v.rows() != set[i].value.rows() || v.cols() != set[i].value.cols()) {
        throw ShapeError("checkpoint parameter " + set[i].name + " has an unexpected shape");
      }
      set[i].value = std::move(v);
    }
  };
  load_set(model.generator(), "gen.");
  load_set(model.discriminator(), "disc.");
  model.feature_names = e.meta.value("feature_names", std::vector<std::string>{});
  if (e.arrays.count("norm_min")) {
    model.normalization = NormalizationStats{store.array(name, "norm_min").row(0).transpose(),
                                             store.array(name, "norm_max").row(0).transpose()};
  }
  return model;
}

// ---------------------------------------------------------------------------
// Imputations and reports

void save_imputations(ArtifactStore& store, const std::string& name, const StoredImputation& imp, bool force) {
  if (imp.results.size() != imp.record_ids.size()) throw ShapeError("imputation ids and results differ in count");
  const Index N = static_cast<Index>(imp.results.size());
  const Index T = N > 0 ? imp.results.front().X_hat.rows() : 0;
  const Index F = N > 0 ? imp.results.front().X_hat.cols() : 0;
  Matrix X(N, T * F), P(N, T * F), ids(N, 1);
  for (Index i = 0; i < N; ++i) {
    const auto& r = imp.results[static_cast<std::size_t>(i)];
    if (r.X_hat.rows() != T || r.X_hat.cols() != F) throw ShapeError("imputations differ in shape");
    for (Index t = 0; t < T; ++t) {
      X.block(i, t * F, 1, F) = r.X_hat.row(t);
      P.block(i, t * F, 1, F) = r.provenance.row(t);
    }
    ids(i, 0) = static_cast<double>(imp.record_ids[static_cast<std::size_t>(i)]);
  }
  store.put(name, "imputation", {{"X_hat", X}, {"provenance", P}, {"record_id", ids}},
            {{"method", imp.method}, {"steps", T}, {"features", F}}, force);
}

StoredImputation load_imputations(const ArtifactStore& store, const std::string& name) {
  const ManifestEntry& e = store.entry(name);
  if (e.kind != "imputation") throw InvalidArgument("artifact '" + name + "' is a " + e.kind + ", not an imputation");
  const Index T = e.meta.at("steps"), F = e.meta.at("features");
  const Matrix X = store.array(name, "X_hat"), P = store.array(name, "provenance"), ids = store.array(name, "record_id");
  StoredImputation out;
  out.method = e.meta.value("method", "");
  for (Index i = 0; i < X.rows(); ++i) {
    out.record_ids.push_back(static_cast<std::int64_t>(ids(i, 0)));
    out.results.push_back({unstack_row(X, i, T, F), unstack_row(P, i, T, F)});
  }
  return out;
}

void save_report(ArtifactStore& store, const std::string& name, const EvalReport& report, bool force) {
  report.validate();
  store.put(name, "report", {}, to_json(report), force);
}

EvalReport load_report(const ArtifactStore& store, const std::string& name) {
  const ManifestEntry& e = store.entry(name);
  if (e.kind != "report") throw InvalidArgument("artifact '" + name + "' is a " + e.kind + ", not a report");
  return eval_report_from_json(e.meta);
}

}  // namespace ignite
