#include <string>
#include <vector>

#include "atlas/error.hpp"
#include "atlas/export.hpp"
#include "doctest.h"
#include "test_util.hpp"

using atlas::DenseMatrix;
using atlas::SparseMatrix;
using Terms = std::vector<std::string>;

namespace {

atlas::Vocabulary vocab(std::vector<std::string> terms) {
  const std::size_t n = terms.size();
  return atlas::Vocabulary(std::move(terms), std::vector<std::uint32_t>(n, 1), std::vector<std::uint64_t>(n, 1), 3);
}

SparseMatrix matrix(const std::vector<std::vector<double>>& rows) {
  DenseMatrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) m(i, j) = rows[i][j];
  return SparseMatrix::from_dense(m);
}

atlas::DocumentRecord doc(std::string id, std::string title, std::vector<std::string> authors, std::string url) {
  atlas::DocumentRecord r;
  r.doc_id = std::move(id);
  r.title = std::move(title);
  r.authors = std::move(authors);
  r.journal = "J";
  r.url = std::move(url);
  r.body_text = "body";
  return r;
}

}  // namespace

TEST_CASE("top terms follow the mean weight") {
  const auto v = vocab({"bat", "cell", "virus"});
  SUBCASE("dominant shared term ranks first") {
    const auto x = matrix({{0.1, 0.2, 0.9}, {0.3, 0.0, 0.8}, {0.9, 0.1, 0.0}});
    const std::vector<std::uint32_t> labels{0, 0, 1};
    const auto t = atlas::cluster_top_terms(x, labels, v, 2);
    CHECK(t[0].front() == "virus");
    CHECK(t[1].front() == "bat");
  }
  SUBCASE("hand-computed three document fixture") {
    // Cluster 0 = rows 0..2: means bat 0.4, cell 0.5, virus 0.4 (tie -> bat first).
    const auto x = matrix({{0.6, 0.3, 0.6}, {0.6, 0.6, 0.0}, {0.0, 0.6, 0.6}});
    const std::vector<std::uint32_t> labels{0, 0, 0};
    const auto t = atlas::cluster_top_terms(x, labels, v, 1);
    CHECK(t[0] == Terms{"cell", "bat", "virus"});
    CHECK(atlas::cluster_top_terms(x, labels, v, 1, 2)[0] == Terms{"cell", "bat"});
  }
  SUBCASE("identical singleton clusters get identical lists") {
    const auto x = matrix({{0.2, 0.7, 0.1}, {0.2, 0.7, 0.1}});
    const std::vector<std::uint32_t> labels{0, 1};
    const auto t = atlas::cluster_top_terms(x, labels, v, 2);
    CHECK(t[0] == t[1]);
    CHECK(t[0] == Terms{"cell", "bat", "virus"});
  }
  SUBCASE("zero means are omitted and empty clusters have no terms") {
    const auto x = matrix({{0.0, 1.0, 0.0}});
    const std::vector<std::uint32_t> labels{0};
    const auto t = atlas::cluster_top_terms(x, labels, v, 2);
    CHECK(t[0] == Terms{"cell"});
    CHECK(t[1].empty());
  }
}

TEST_CASE("author formatting and coordinate rounding") {
  CHECK(atlas::format_authors(std::vector<std::string>{}) == "");
  CHECK(atlas::format_authors(std::vector<std::string>{"A"}) == "A");
  CHECK(atlas::format_authors(std::vector<std::string>{"A", "B", "C"}) == "A, B, C");
  CHECK(atlas::format_authors(std::vector<std::string>{"A", "B", "C", "D"}) == "A, B, C et al.");
  CHECK(atlas::round_coordinate(1.23456749) == 1.234567);
  CHECK(atlas::round_coordinate(-2.0000005001) == -2.000001);
  CHECK_FALSE(std::signbit(atlas::round_coordinate(-1e-9)));
}

TEST_CASE("atlas document layout and round trip") {
  const std::vector docs{doc("p1", "First \"quoted\" title", {"Ann", "Bo"}, "https://x/1"),
                         doc("p2", "Second caf\xC3\xA9", {}, "")};
  DenseMatrix y(2, 2, std::vector<double>{0.1234567, -1.0, 2.5, 3.0000001});
  const std::vector<std::uint32_t> labels{1, 0};
  const std::vector<Terms> terms{{"bat"}, {"cell", "virus"}};
  const atlas::AtlasProvenance prov{"00ff00ff00ff00ff", {4, 3, 3, 2}, 2, 0.75};
  const auto atlas_json = atlas::build_atlas(docs, y, labels, terms, prov);

  std::vector<std::string> keys;
  for (const auto& [k, v] : atlas_json.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"schema_version", "points", "clusters", "provenance"});
  keys.clear();
  for (const auto& [k, v] : atlas_json["points"][0].items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"id", "title", "authors", "journal", "url", "x", "y", "cluster"});

  CHECK(atlas_json["schema_version"] == atlas::kAtlasSchemaVersion);
  CHECK(atlas_json["points"][0]["x"] == 0.123457);
  CHECK(atlas_json["points"][1]["y"] == 3.0);
  CHECK(atlas_json["points"][0]["authors"] == "Ann, Bo");
  CHECK(atlas_json["points"][1]["cluster"] == 0);
  CHECK(atlas_json["clusters"][1]["top_terms"] == nlohmann::json(Terms{"cell", "virus"}));
  CHECK(atlas_json["provenance"]["corpus_stats"]["n_after_language_filter"] == 2);
  CHECK(atlas_json["provenance"]["chosen_k"] == 2);

  std::size_t total = 0;
  for (const auto& c : atlas_json["clusters"]) total += c["size"].get<std::size_t>();
  CHECK(total == docs.size());

  const std::string text = atlas::serialize_atlas(atlas_json);
  CHECK(text.back() == '\n');
  CHECK(atlas::serialize_atlas(nlohmann::ordered_json::parse(text)) == text);

  testutil::TempDir dir("export");
  atlas::write_atlas(docs, y, labels, terms, prov, dir / "atlas.json");
  CHECK(testutil::read_file(dir / "atlas.json") == text);
  CHECK_THROWS_AS(atlas::write_atlas(docs, y, labels, terms, prov, dir / "no" / "such" / "atlas.json"),
                  atlas::DataError);
}
