#pragma once

// Directory-backed artifact store.
//
//   <root>/manifest.json           name -> entry (kind, created_at, arrays, meta)
//   <root>/<name>/<array>.f64      raw little-endian doubles, row-major
//
// Every array carries its shape and a SHA-256 of its bytes; loads verify the
// checksum. The manifest is rewritten atomically after the array files.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ignite/evaluation.hpp"
#include "ignite/ingest.hpp"
#include "ignite/model.hpp"

namespace ignite {

std::string sha256_hex(const void* data, std::size_t size);

struct ArrayInfo {
  std::string file;
  Index rows = 0;
  Index cols = 0;
  std::string dtype = "f64";
  std::string sha256;
};

struct ManifestEntry {
  std::string kind;  // dataset, checkpoint, imputation, report
  std::string created_at;
  std::map<std::string, ArrayInfo> arrays;
  nlohmann::json meta = nlohmann::json::object();
};

class ArtifactStore {
 public:
  // Opens (creating if needed) a store rooted at `root`.
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  bool contains(const std::string& name) const { return manifest_.count(name) > 0; }
  std::vector<std::string> names() const;
  // Throws NotFoundError for unknown names.
  const ManifestEntry& entry(const std::string& name) const;

  // Throws InvalidArgument when `name` exists and force is false.
  void put(const std::string& name, const std::string& kind, const std::map<std::string, Matrix>& arrays,
           const nlohmann::json& meta, bool force = false);
  // Verifies the checksum; throws CorruptionError on mismatch.
  Matrix array(const std::string& name, const std::string& array) const;
  void remove(const std::string& name);

 private:
  void load_manifest();
  void save_manifest() const;
  std::filesystem::path entry_dir(const std::string& name) const { return root_ / name; }

  std::filesystem::path root_;
  std::map<std::string, ManifestEntry> manifest_;
};

void save_dataset(ArtifactStore& store, const std::string& name, const Dataset& data, bool force = false);
Dataset load_dataset(const ArtifactStore& store, const std::string& name);

void save_checkpoint(ArtifactStore& store, const std::string& name, const IgniteModel& model, bool force = false);
// With `expected`, a checkpoint of a different shape raises ShapeError.
IgniteModel load_checkpoint(const ArtifactStore& store, const std::string& name,
                            const std::optional<ModelShape>& expected = std::nullopt);

struct StoredImputation {
  std::vector<std::int64_t> record_ids;
  std::vector<ImputationResult> results;
  std::string method;
};
void save_imputations(ArtifactStore& store, const std::string& name, const StoredImputation& imputation,
                      bool force = false);
StoredImputation load_imputations(const ArtifactStore& store, const std::string& name);

void save_report(ArtifactStore& store, const std::string& name, const EvalReport& report, bool force = false);
EvalReport load_report(const ArtifactStore& store, const std::string& name);

}  // namespace ignite
