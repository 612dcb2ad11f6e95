// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any
// line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "atlas/kmeans.hpp"
#include "atlas/pca.hpp"
#include "atlas/pipeline.hpp"
#include "atlas/text.hpp"
#include "atlas/tsne.hpp"
#include "atlas/vectorize.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using atlas::DenseMatrix;
using atlas::SparseMatrix;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

SparseMatrix from_rows(const oracle::Dense& rows) {
  DenseMatrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) m(i, j) = rows[i][j];
  return SparseMatrix::from_dense(m);
}

DenseMatrix dense_from_rows(const oracle::Dense& rows) { return from_rows(rows).to_dense(); }

oracle::Dense random_rows(std::size_t n, std::size_t d, std::uint64_t seed, double density = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  oracle::Dense rows(n, std::vector<double>(d, 0.0));
  for (auto& r : rows)
    for (double& e : r)
      if (unif(gen) < density) e = normal(gen);
  return rows;
}

std::string letters(std::size_t v) {
  std::string s;
  do {
    s += static_cast<char>('a' + v % 26);
    v /= 26;
  } while (v > 0);
  return s;
}

// 5 topics x 100 documents. Each document has 200 content tokens: 90% drawn
// from its topic's private vocabulary, 10% from a shared background list.
// An English function word follows every content token.
std::vector<int> write_planted_corpus(const std::filesystem::path& path) {
  constexpr int kTopics = 5, kDocsPerTopic = 100, kTokens = 200, kTopicWords = 40, kBackgroundWords = 40;
  const char* glue[] = {"the", "of", "and", "in", "with", "for", "is", "to"};
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unif;
  std::uniform_int_distribution<int> topic_word(0, kTopicWords - 1), bg_word(0, kBackgroundWords - 1), glue_word(0, 7);
  std::vector<int> truth;
  std::ofstream out(path);
  int id = 0;
  for (int d = 0; d < kDocsPerTopic; ++d) {
    for (int t = 0; t < kTopics; ++t) {
      std::string body;
      for (int k = 0; k < kTokens; ++k) {
        const std::string w = unif(gen) < 0.1 ? "common" + letters(bg_word(gen))
                                              : "topic" + letters(t) + "x" + letters(topic_word(gen));
        body += w + " " + glue[glue_word(gen)] + " ";
      }
      json rec{{"doc_id", "planted-" + std::to_string(id)},
               {"title", "Planted document " + std::to_string(id)},
               {"abstract", "Abstract " + std::to_string(id)},
               {"body_text", body},
               {"authors", {"Author One", "Author Two"}},
               {"journal", "Synthetic"},
               {"url", "https://example.org/" + std::to_string(id)}};
      out << rec.dump() << "\n";
      truth.push_back(t);
      ++id;
    }
  }
  return truth;
}

atlas::PipelineConfig planted_config(const std::filesystem::path& dir, const std::string& out) {
  json j{{"input", {{"paths", {"planted.jsonl"}}}}, {"k", 5}, {"seed", 11}, {"output_dir", out}};
  auto c = atlas::config_from_json(j, dir);
  c.threads = 1;
  return c;
}

void planted_topics(const testutil::TempDir& dir) {
  const auto truth = write_planted_corpus(dir / "planted.jsonl");
  const auto config = planted_config(dir.path(), "run1");
  std::ostringstream log;
  const auto start = std::chrono::steady_clock::now();
  atlas::run_stage(atlas::Stage::kAll, config, log);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json atlas_json = json::parse(testutil::read_file(dir / "run1" / "atlas.json"));
  std::vector<int> labels;
  for (const auto& p : atlas_json["points"]) labels.push_back(p["cluster"].get<int>());
  const double ari = labels.size() == truth.size() ? oracle::adjusted_rand_index(truth, labels) : 0.0;
  report(ari >= 0.9 && seconds < 60.0, "planted-topic recovery",
         fmt("500 docs, k=5, ARI %.4f (>= 0.9), %.1f s single-threaded (< 60 s)", ari, seconds));
}

void elbow_blobs() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto blobs = oracle::gaussian_blobs(20, 50, 10, 1.0, 10.0, 15.0, seed);
    atlas::ElbowOptions opt;
    opt.seed = seed;
    const auto curve = atlas::elbow_sweep(dense_from_rows(blobs.points), opt);
    int inversions = 0;
    for (std::size_t i = 1; i < curve.entries.size(); ++i)
      if (curve.entries[i].distortion > curve.entries[i - 1].distortion) ++inversions;
    const bool run_ok = curve.chosen_k >= 18 && curve.chosen_k <= 22 && inversions <= 1;
    ok = ok && run_ok;
    detail += fmt("seed %.0f: k=%.0f, %.0f inversions; ", static_cast<double>(seed),
                  static_cast<double>(curve.chosen_k), inversions);
  }
  report(ok, "elbow on 20 blobs", detail + "want k in [18,22], <= 1 inversion");
}

void pca_contract() {
  bool ok = true;
  double worst_orth = 0.0, worst_var = 0.0;
  int cases = 0;
  const std::pair<std::size_t, std::size_t> shapes[] = {{100, 50}, {50, 20}, {30, 50}, {80, 12}, {10, 4}};
  std::uint64_t seed = 500;
  for (const auto& [n, d] : shapes) {
    for (double target : {0.5, 0.9, 0.95, 0.99}) {
      for (double density : {1.0, 0.3}) {
        for (std::size_t budget : {std::size_t{1} << 25, std::size_t{0}}) {
          const auto rows = random_rows(n, d, seed++, density);
          atlas::PcaOptions opt;
          opt.variance_target = target;
          opt.dense_budget = budget;
          const auto m = atlas::fit_pca(from_rows(rows), opt);
          const std::size_t k = m.n_components();
          double cum = 0.0, cum_prev = 0.0;
          for (std::size_t i = 0; i < k; ++i) {
            cum_prev = cum;
            cum += m.explained_variance_ratio[i];
          }
          ok = ok && k >= 1 && cum >= target && cum_prev < target;
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              double dot = 0.0;
              for (std::size_t j = 0; j < d; ++j) dot += m.components(a, j) * m.components(b, j);
              worst_orth = std::max(worst_orth, std::abs(dot - (a == b ? 1.0 : 0.0)));
            }
          const auto eig = oracle::jacobi_eigen(oracle::covariance(rows));
          for (std::size_t i = 0; i < k; ++i)
            worst_var = std::max(worst_var, std::abs(m.explained_variance[i] - eig.values[i]));
          ++cases;
        }
      }
    }
  }
  ok = ok && worst_orth <= 1e-8 && worst_var <= 1e-8;
  report(ok, "PCA variance contract",
         fmt("%.0f matrices <= 100x50; max orthonormality error %.2e, max eigenvalue error %.2e (<= 1e-8)", cases,
             worst_orth, worst_var));
}

void kmeans_correctness() {
  bool ok = true;
  double worst_gap = 0.0;
  int fixtures = 0;
  std::mt19937_64 gen(77);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t n = 3; n <= 8; ++n) {
      oracle::Dense rows(n, std::vector<double>(2));
      for (auto& r : rows)
        for (double& e : r) e = normal(gen) * (trial % 2 == 0 ? 1.0 : 5.0);
      for (int k = 1; k <= std::min<int>(3, static_cast<int>(n)); ++k) {
        atlas::KMeansOptions opt;
        opt.k = static_cast<std::size_t>(k);
        opt.init = atlas::KMeansInit::kExhaustive;
        opt.tol = 0.0;
        const auto m = atlas::kmeans_fit(dense_from_rows(rows), opt);
        worst_gap = std::max(worst_gap, std::abs(m.inertia - oracle::brute_force_inertia(rows, k)));
        for (std::size_t i = 1; i < m.inertia_trace.size(); ++i)
          ok = ok && m.inertia_trace[i] <= m.inertia_trace[i - 1];
        ++fixtures;
      }
    }
  }
  // Monotone traces on a larger problem with the production initializers.
  const auto blobs = oracle::gaussian_blobs(8, 60, 6, 1.5, 4.0, 8.0, 9);
  for (auto init : {atlas::KMeansInit::kPlusPlus, atlas::KMeansInit::kRandom}) {
    for (std::size_t k : {3u, 8u, 15u}) {
      atlas::KMeansOptions opt;
      opt.k = k;
      opt.init = init;
      opt.tol = 0.0;
      const auto m = atlas::kmeans_fit(dense_from_rows(blobs.points), opt);
      for (std::size_t i = 1; i < m.inertia_trace.size(); ++i) ok = ok && m.inertia_trace[i] <= m.inertia_trace[i - 1];
    }
  }
  ok = ok && worst_gap <= 1e-9;
  report(ok, "k-means correctness",
         fmt("%.0f fixtures n<=8, k<=3: max gap to brute force %.2e (<= 1e-9); inertia traces non-increasing",
             fixtures, worst_gap));
}

double row_entropy(const atlas::AffinityMatrix& c, std::size_t i) {
  double h = 0.0;
  for (std::size_t e = c.row_offsets[i]; e < c.row_offsets[i + 1]; ++e)
    if (c.values[e] > 0.0) h -= c.values[e] * std::log2(c.values[e]);
  return h;
}

void tsne_checks() {
  // Calibration.
  double worst_cal = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = from_rows(random_rows(10, 5, 900 + seed));
    for (double perp : {2.0, 3.0}) {
      const auto g = atlas::gaussian_conditionals(x, perp);
      for (std::size_t i = 0; i < 10; ++i)
        worst_cal = std::max(worst_cal, std::abs(std::pow(2.0, row_entropy(g.conditional, i)) - perp));
    }
  }
  const auto big = from_rows(random_rows(300, 10, 950));
  const auto gb = atlas::gaussian_conditionals(big, 30.0, 90);
  for (std::size_t i = 0; i < 300; ++i)
    worst_cal = std::max(worst_cal, std::abs(std::pow(2.0, row_entropy(gb.conditional, i)) - 30.0));

  // Finite differences at n = 6.
  double worst_fd = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = atlas::conditional_affinities(from_rows(random_rows(6, 4, 700 + seed)), 2.0, 0.0);
    oracle::Dense pd(6, std::vector<double>(6, 0.0));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t e = p.row_offsets[i]; e < p.row_offsets[i + 1]; ++e) pd[i][p.columns[e]] = p.values[e];
    std::mt19937_64 gen(800 + seed);
    std::normal_distribution<double> normal;
    DenseMatrix y(6, 2);
    for (double& v : y.values()) v = normal(gen);
    const auto g = atlas::exact_gradient(p, y);
    const double h = 1e-6;
    for (std::size_t k = 0; k < 12; ++k) {
      auto plus = y.values(), minus = y.values();
      plus[k] += h;
      minus[k] -= h;
      const double fd = (oracle::dense_kl(pd, plus) - oracle::dense_kl(pd, minus)) / (2 * h);
      worst_fd = std::max(worst_fd, std::abs(g.values()[k] - fd) / std::max(std::abs(g.values()[k]), std::abs(fd)));
    }
  }

  // Barnes-Hut against exact at n = 200.
  double worst_bh = 0.0;
  const auto blobs = oracle::gaussian_blobs(4, 50, 10, 1.0, 8.0, 10.0, 31);
  const auto pb = atlas::conditional_affinities(from_rows(blobs.points), 30.0, 0.5);
  for (double scale : {1e-4, 1.0, 10.0, 30.0}) {
    std::mt19937_64 gen(static_cast<std::uint64_t>(scale * 1e4));
    std::normal_distribution<double> normal(0.0, scale);
    DenseMatrix y(200, 2);
    for (double& v : y.values()) v = normal(gen);
    const auto ex = atlas::exact_gradient(pb, y);
    const auto bh = atlas::barnes_hut_gradient(pb, y, 0.5);
    for (std::size_t i = 0; i < 200; ++i) {
      const double diff = std::hypot(ex(i, 0) - bh(i, 0), ex(i, 1) - bh(i, 1));
      worst_bh = std::max(worst_bh, diff / std::hypot(ex(i, 0), ex(i, 1)));
    }
  }

  // KL progress after exaggeration, exact and Barnes-Hut.
  bool kl_ok = true;
  double last_final = 0.0, last_exag = 0.0;
  for (double theta : {0.0, 0.5}) {
    atlas::TsneConfig cfg;
    cfg.perplexity = 30;
    cfg.theta = theta;
    cfg.seed = 5;
    const auto e = atlas::embed(from_rows(blobs.points), cfg);
    kl_ok = kl_ok && e.kl_at_exaggeration_end && e.final_kl < *e.kl_at_exaggeration_end;
    last_final = e.final_kl;
    last_exag = e.kl_at_exaggeration_end.value_or(0.0);
  }

  const bool ok = worst_cal <= 1e-4 && worst_fd <= 1e-4 && worst_bh <= 0.05 && kl_ok;
  report(ok, "t-SNE numerical checks",
         fmt("max |2^H - perplexity| %.2e (<= 1e-4); FD max rel error %.2e (<= 1e-4); ", worst_cal, worst_fd) +
             fmt("BH max per-point rel error %.4f (<= 0.05); final KL %.4f < %.4f at end of exaggeration", worst_bh,
                 last_final, last_exag));
}

void tfidf_oracle() {
  using atlas::TokenizedDocument;
  double worst = 0.0;
  {
    const std::vector<TokenizedDocument> docs{{"d", {"alpha", "alpha", "beta"}}};
    const auto x = atlas::tfidf(docs, atlas::build_vocabulary(docs));
    worst = std::max({worst, std::abs(x.at(0, 0) - 2.0 / std::sqrt(5.0)), std::abs(x.at(0, 1) - 1.0 / std::sqrt(5.0)),
                      std::abs(x.at(0, 0) - 0.894427191), std::abs(x.at(0, 1) - 0.447213595)});
  }
  {
    const std::vector<TokenizedDocument> docs{
        {"a", {"virus", "virus", "cell"}}, {"b", {"cell", "bat"}}, {"c", {"virus"}}};
    const auto x = atlas::tfidf(docs, atlas::build_vocabulary(docs));
    const double expect[3][3] = {{0.0, 1.0 / std::sqrt(5.0), 2.0 / std::sqrt(5.0)},
                                 {0.7959605415681652, 0.6053485081062916, 0.0},
                                 {0.0, 0.0, 1.0}};
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(x.at(r, c) - expect[r][c]));
  }
  double worst_norm = 0.0;
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> w(0, 300), len(0, 120);
  std::vector<TokenizedDocument> docs(400);
  for (auto& d : docs) {
    const int n = len(gen);
    for (int i = 0; i < n; ++i) d.tokens.push_back("w" + letters(static_cast<std::size_t>(w(gen) * w(gen) / 300)));
  }
  const auto x = atlas::tfidf(docs, atlas::build_vocabulary(docs, 150));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    if (row.size() > 0) worst_norm = std::max(worst_norm, std::abs(std::sqrt(row.squared_norm()) - 1.0));
  }
  report(worst <= 1e-9 && worst_norm <= 1e-9, "tf-idf oracle",
         fmt("max fixture error %.2e (<= 1e-9); max |row norm - 1| %.2e over 400 docs (<= 1e-9)", worst, worst_norm));
}

void determinism(const testutil::TempDir& dir) {
  std::ostringstream log;
  const std::string first = testutil::read_file(dir / "run1" / "atlas.json");

  const auto again = planted_config(dir.path(), "run2");
  atlas::run_stage(atlas::Stage::kAll, again, log);
  const bool repeat_ok = testutil::read_file(dir / "run2" / "atlas.json") == first;

  const auto staged = planted_config(dir.path(), "run3");
  for (auto s : {atlas::Stage::kIngest, atlas::Stage::kVectorize, atlas::Stage::kReduce, atlas::Stage::kCluster,
                 atlas::Stage::kEmbed, atlas::Stage::kExport})
    atlas::run_stage(s, staged, log);
  const bool staged_ok = testutil::read_file(dir / "run3" / "atlas.json") == first;

  // Elbow-driven k through separate stages as well.
  std::filesystem::copy_file(testutil::data_path("fixture15.jsonl"), dir / "fixture15.jsonl");
  json j = json::parse(testutil::read_file(testutil::data_path("fixture15.json")));
  j.erase("k");
  j["output_dir"] = "fx_all";
  const auto fx_all = atlas::config_from_json(j, dir.path());
  atlas::run_stage(atlas::Stage::kAll, fx_all, log);
  j["output_dir"] = "fx_staged";
  const auto fx_staged = atlas::config_from_json(j, dir.path());
  for (auto s : {atlas::Stage::kIngest, atlas::Stage::kVectorize, atlas::Stage::kReduce, atlas::Stage::kElbow,
                 atlas::Stage::kCluster, atlas::Stage::kEmbed, atlas::Stage::kExport})
    atlas::run_stage(s, fx_staged, log);
  const bool fx_ok = testutil::read_file(dir / "fx_all" / "atlas.json") ==
                     testutil::read_file(dir / "fx_staged" / "atlas.json");

  report(repeat_ok && staged_ok && fx_ok, "determinism",
         std::string("repeat `all` identical: ") + (repeat_ok ? "yes" : "no") +
             "; stage-by-stage equals `all` (k fixed): " + (staged_ok ? "yes" : "no") +
             "; stage-by-stage equals `all` (elbow k): " + (fx_ok ? "yes" : "no"));
}

}  // namespace

int main() {
  testutil::TempDir dir("acceptance");
  auto guarded = [](const char* name, auto fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(false, name, std::string("threw: ") + e.what());
    }
  };
  guarded("planted-topic recovery", [&] { planted_topics(dir); });
  guarded("elbow on 20 blobs", elbow_blobs);
  guarded("PCA variance contract", pca_contract);
  guarded("k-means correctness", kmeans_correctness);
  guarded("t-SNE numerical checks", tsne_checks);
  guarded("tf-idf oracle", tfidf_oracle);
  guarded("determinism", [&] { determinism(dir); });
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
