#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "atlas/corpus.hpp"
#include "atlas/matrix.hpp"
#include "atlas/vectorize.hpp"
#include "json.hpp"

namespace atlas {

inline constexpr const char* kAtlasSchemaVersion = "1";

/// For each cluster in [0, n_clusters), the terms with the highest mean
/// tf-idf weight over its member rows, descending, ties lexicographic.
/// Terms with zero mean are never listed; an empty cluster gets no terms.
std::vector<std::vector<std::string>> cluster_top_terms(const SparseMatrix& x1, std::span<const std::uint32_t> labels,
                                                        const Vocabulary& vocab, std::size_t n_clusters,
                                                        std::size_t top_n = 10);

/// "A, B, C et al." for more than three authors, otherwise a comma list.
std::string format_authors(std::span<const std::string> authors);

/// Rounds to six decimal places.
double round_coordinate(double v);

struct AtlasProvenance {
  std::string config_hash;
  CorpusStats corpus_stats;
  std::size_t chosen_k = 0;
  double final_kl = 0.0;
};

/// Atlas document with fields in schema order.
nlohmann::ordered_json build_atlas(std::span<const DocumentRecord> docs, const DenseMatrix& coordinates,
                                   std::span<const std::uint32_t> labels,
                                   const std::vector<std::vector<std::string>>& top_terms,
                                   const AtlasProvenance& provenance);

/// Serialized atlas text: two-space indent, trailing newline.
std::string serialize_atlas(const nlohmann::ordered_json& atlas);

/// Writes the atlas as UTF-8 JSON. Throws DataError if the path cannot be
/// written.
void write_atlas(std::span<const DocumentRecord> docs, const DenseMatrix& coordinates,
                 std::span<const std::uint32_t> labels, const std::vector<std::vector<std::string>>& top_terms,
                 const AtlasProvenance& provenance, const std::filesystem::path& path);

}  // namespace atlas
