#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "prognos/domain.hpp"

namespace prognos::io {

// Canonical shortest-roundtrip text form of a double.
std::string fmt_double(double v);

// --- cohort tables -----------------------------------------------------
//
// Delimited text, one row per subject. Header names every clinical field,
// the outcome columns (lrr_time, distant_time, death_time, followup_time;
// empty means absent) and a `slides` column of semicolon-separated slide ids.
// The dataset id is the file stem.

Cohort read_cohort_csv(const std::filesystem::path& file);
Cohort read_cohort_csv(const std::filesystem::path& file, const std::string& dataset_id);
CohortSet read_cohort_dir(const std::filesystem::path& dir);
void write_cohort_csv(const Cohort& cohort, const std::filesystem::path& file);

// Per-field unknown/missing counts, one block per dataset.
std::string cohort_summary_tsv(const CohortSet& cohorts);

// --- embedding files ----------------------------------------------------
//
// One binary file per slide, named exactly by slide id: 8-byte magic,
// u32 version, u32 n_patches, u32 dim, then row-major 32-bit reals.

void write_embedding_file(const EmbeddingBag& bag, const std::filesystem::path& dir);
EmbeddingBag read_embedding_file(const std::filesystem::path& file);

class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  static EmbeddingStore load(const std::filesystem::path& dir,
                             const std::set<std::string>& slide_ids);
  void add(EmbeddingBag bag);
  const EmbeddingBag* find(const std::string& slide_id) const;
  const EmbeddingBag& get(const std::string& slide_id) const;
  std::size_t size() const { return bags_.size(); }
  const std::map<std::string, EmbeddingBag>& all() const { return bags_; }

 private:
  std::map<std::string, EmbeddingBag> bags_;
};

// --- configuration ------------------------------------------------------
//
// Flat `key = value` document; '#' starts a comment. Later keys override
// earlier ones. Path-valued keys resolve relative paths against
// PROGNOS_DATA_DIR when that variable is set.

class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::filesystem::path& file);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma-separated
  std::filesystem::path get_path(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  // Sorted key=value lines; the hash of this string identifies the run config.
  // The `out` key is excluded so runs into different directories compare equal.
  std::string canonical() const;
  std::string canonical_without(const std::vector<std::string>& excluded_keys) const;

 private:
  std::map<std::string, std::string> values_;
};

std::filesystem::path resolve_path(const std::string& value);

// --- hashing and run manifests -------------------------------------------

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex_file(const std::filesystem::path& file);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // label -> content hash
  std::vector<std::string> outputs;
};

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& out_dir);

// Refuses to reuse an output directory whose previous run of the same command
// had a different config hash.
void check_out_dir(const std::filesystem::path& out_dir, const std::string& command,
                   const std::string& config_hash);

}  // namespace prognos::io
