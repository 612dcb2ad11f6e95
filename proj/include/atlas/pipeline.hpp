#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atlas/corpus.hpp"
#include "atlas/kmeans.hpp"
#include "atlas/tsne.hpp"
#include "json.hpp"

namespace atlas {

struct PipelineConfig {
  std::vector<std::string> input_paths;
  InputFormat input_format = InputFormat::kJsonl;
  std::optional<std::string> stoplist_path;  // built-in defaults when absent
  double language_threshold = kDefaultLanguageThreshold;
  std::size_t max_features = 4096;
  double variance_target = 0.95;
  std::optional<std::size_t> k;  // overrides the elbow choice
  std::size_t elbow_k_min = 2;
  std::size_t elbow_k_max = 40;
  std::size_t elbow_step = 2;
  double elbow_flat_ratio = 2.0;
  int kmeans_n_init = 10;
  int kmeans_max_iter = 300;
  double kmeans_tol = 1e-4;
  KMeansInit kmeans_init = KMeansInit::kPlusPlus;
  TsneConfig tsne;  // tsne.seed and tsne.threads are derived, not read
  bool tsne_pre_reduce = false;  // embed the leading PCA axes instead of tf-idf rows
  std::size_t pre_reduce_dims = 50;
  std::uint64_t seed = 0;
  std::string output_dir = "atlas_out";
  int threads = 1;

  // Relative input, stoplist and output paths resolve against this.
  std::filesystem::path base_dir = ".";

  std::filesystem::path resolve(const std::string& path) const;
  std::filesystem::path output_path() const { return resolve(output_dir); }
};

/// Keys mirror the struct fields; see README for the layout. Throws
/// ConfigError on unknown keys, wrong types or out-of-range values.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const PipelineConfig& config);

/// Throws ConfigError describing the first out-of-range parameter.
void validate(const PipelineConfig& config);

// Per-stage seeds fanned out from the global seed.
std::uint64_t elbow_seed(const PipelineConfig& c);
std::uint64_t cluster_seed(const PipelineConfig& c);
std::uint64_t embed_seed(const PipelineConfig& c);

enum class Stage { kIngest, kVectorize, kReduce, kElbow, kCluster, kEmbed, kExport, kAll };

Stage parse_stage(std::string_view name);
std::string_view to_string(Stage stage);

/// 16 hex digits of FNV-1a over the canonical (sorted-key) JSON text.
std::string fnv1a_hex(std::string_view text);

/// Hash of every parameter that affects results (output_dir and threads
/// excluded).
std::string config_hash(const PipelineConfig& config);

/// Hash of the parameters consumed by `stage` and by every stage it reads.
std::string stage_hash(const PipelineConfig& config, Stage stage);

/// Cache file written by each stage inside the output directory.
std::filesystem::path cache_path(const PipelineConfig& config, Stage stage);

/// Runs one stage (or the whole chain for kAll), loading predecessor caches
/// from the output directory. Missing or stale caches throw DataError naming
/// the stage to run.
void run_stage(Stage stage, const PipelineConfig& config, std::ostream& log);

}  // namespace atlas
