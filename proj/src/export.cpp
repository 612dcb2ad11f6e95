#include "atlas/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "atlas/error.hpp"

namespace atlas {

std::vector<std::vector<std::string>> cluster_top_terms(const SparseMatrix& x1, std::span<const std::uint32_t> labels,
                                                        const Vocabulary& vocab, std::size_t n_clusters,
                                                        std::size_t top_n) {
  if (labels.size() != x1.rows()) throw std::invalid_argument("cluster_top_terms: one label per row required");
  if (x1.cols() != vocab.size()) throw std::invalid_argument("cluster_top_terms: vocabulary does not match matrix");
  std::vector<std::vector<double>> sums(n_clusters, std::vector<double>(x1.cols(), 0.0));
  std::vector<std::size_t> sizes(n_clusters, 0);
  for (std::size_t r = 0; r < x1.rows(); ++r) {
    if (labels[r] >= n_clusters) throw std::invalid_argument("cluster_top_terms: label out of range");
    const SparseRow row = x1.row(r);
    auto& s = sums[labels[r]];
    for (std::size_t p = 0; p < row.size(); ++p) s[row.indices[p]] += row.values[p];
    ++sizes[labels[r]];
  }
  std::vector<std::vector<std::string>> out(n_clusters);
  std::vector<std::uint32_t> order;
  for (std::size_t c = 0; c < n_clusters; ++c) {
    if (sizes[c] == 0) continue;
    std::vector<double> mean(x1.cols());
    for (std::size_t t = 0; t < x1.cols(); ++t) mean[t] = sums[c][t] / static_cast<double>(sizes[c]);
    order.clear();
    for (std::uint32_t t = 0; t < x1.cols(); ++t) {
      if (mean[t] > 0.0) order.push_back(t);
    }
    const std::size_t keep = std::min(top_n, order.size());
    // Vocabulary indices are lexicographic, so index order breaks ties.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) { return mean[a] > mean[b] || (mean[a] == mean[b] && a < b); });
    for (std::size_t i = 0; i < keep; ++i) out[c].push_back(vocab.term(order[i]));
  }
  return out;
}

std::string format_authors(std::span<const std::string> authors) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(3, authors.size());
  for (std::size_t i = 0; i < shown; ++i) {
    if (i > 0) out += ", ";
    out += authors[i];
  }
  if (authors.size() > 3) out += " et al.";
  return out;
}

double round_coordinate(double v) {
  const double r = std::round(v * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;  // no "-0.0" in the output
}

nlohmann::ordered_json build_atlas(std::span<const DocumentRecord> docs, const DenseMatrix& coordinates,
                                   std::span<const std::uint32_t> labels,
                                   const std::vector<std::vector<std::string>>& top_terms,
                                   const AtlasProvenance& provenance) {
  using nlohmann::ordered_json;
  const std::size_t n = docs.size();
  if (coordinates.rows() != n || coordinates.cols() != 2 || labels.size() != n) {
    throw std::invalid_argument("build_atlas: documents, coordinates and labels must align");
  }
  const std::size_t k = top_terms.size();
  std::vector<std::size_t> sizes(k, 0);
  for (auto l : labels) {
    if (l >= k) throw std::invalid_argument("build_atlas: label without a cluster entry");
    ++sizes[l];
  }

  ordered_json atlas;
  atlas["schema_version"] = kAtlasSchemaVersion;
  ordered_json points = ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = coordinates(i, 0), y = coordinates(i, 1);
    if (!std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("build_atlas: non-finite coordinate");
    ordered_json p;
    p["id"] = docs[i].doc_id;
    p["title"] = docs[i].title;
    p["authors"] = format_authors(docs[i].authors);
    p["journal"] = docs[i].journal;
    p["url"] = docs[i].url;
    p["x"] = round_coordinate(x);
    p["y"] = round_coordinate(y);
    p["cluster"] = labels[i];
    points.push_back(std::move(p));
  }
  atlas["points"] = std::move(points);

  ordered_json clusters = ordered_json::array();
  for (std::size_t c = 0; c < k; ++c) {
    ordered_json entry;
    entry["id"] = c;
    entry["size"] = sizes[c];
    entry["top_terms"] = top_terms[c];
    clusters.push_back(std::move(entry));
  }
  atlas["clusters"] = std::move(clusters);

  ordered_json stats;
  stats["n_raw"] = provenance.corpus_stats.n_raw;
  stats["n_after_dedup"] = provenance.corpus_stats.n_after_dedup;
  stats["n_after_abstract_filter"] = provenance.corpus_stats.n_after_abstract_filter;
  stats["n_after_language_filter"] = provenance.corpus_stats.n_after_language_filter;
  ordered_json prov;
  prov["config_hash"] = provenance.config_hash;
  prov["corpus_stats"] = std::move(stats);
  prov["chosen_k"] = provenance.chosen_k;
  prov["final_kl"] = provenance.final_kl;
  atlas["provenance"] = std::move(prov);
  return atlas;
}

std::string serialize_atlas(const nlohmann::ordered_json& atlas) {
  return atlas.dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
}

void write_atlas(std::span<const DocumentRecord> docs, const DenseMatrix& coordinates,
                 std::span<const std::uint32_t> labels, const std::vector<std::vector<std::string>>& top_terms,
                 const AtlasProvenance& provenance, const std::filesystem::path& path) {
  const std::string text = serialize_atlas(build_atlas(docs, coordinates, labels, top_terms, provenance));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write atlas file: " + path.string());
  out << text;
  if (!out) throw DataError("error while writing atlas file: " + path.string());
}

}  // namespace atlas
