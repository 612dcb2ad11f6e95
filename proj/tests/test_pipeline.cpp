#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "atlas/error.hpp"
#include "atlas/pipeline.hpp"
#include "doctest.h"
#include "test_util.hpp"

#ifndef ATLAS_CLI_PATH
#error "ATLAS_CLI_PATH must be defined"
#endif

using atlas::PipelineConfig;
using atlas::Stage;
using nlohmann::json;

namespace {

// Copies the 15-document fixture and its config into a scratch directory.
void stage_fixture(const testutil::TempDir& dir) {
  std::filesystem::copy_file(testutil::data_path("fixture15.jsonl"), dir / "fixture15.jsonl");
  std::filesystem::copy_file(testutil::data_path("fixture15.json"), dir / "fixture15.json");
}

int run_cli(const std::string& args, const testutil::TempDir& dir) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" + ATLAS_CLI_PATH + "' " + args + " 2> '" +
                          (dir / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json base_config() { return json{{"input", {{"paths", {"docs.jsonl"}}}}}; }

}  // namespace

TEST_CASE("config defaults and overrides") {
  const auto c = atlas::config_from_json(base_config());
  CHECK(c.max_features == 4096);
  CHECK(c.variance_target == 0.95);
  CHECK_FALSE(c.k.has_value());
  CHECK(c.elbow_k_min == 2);
  CHECK(c.elbow_k_max == 40);
  CHECK(c.tsne.perplexity == 30.0);
  CHECK(c.output_dir == "atlas_out");

  json j = base_config();
  j["k"] = 7;
  j["tsne"] = {{"perplexity", 12.5}, {"init", "pca-2d"}};
  j["kmeans"] = {{"init", "random"}};
  const auto d = atlas::config_from_json(j, "/base");
  CHECK(d.k == 7u);
  CHECK(d.tsne.perplexity == 12.5);
  CHECK(d.tsne.init == atlas::TsneInit::kPca);
  CHECK(d.kmeans_init == atlas::KMeansInit::kRandom);
  CHECK(d.resolve("docs.jsonl") == std::filesystem::path("/base/docs.jsonl"));
  CHECK(atlas::config_from_json(atlas::config_to_json(d), "/base").k == 7u);
}

TEST_CASE("invalid configs are rejected") {
  auto bad = [](auto mutate) {
    json j = base_config();
    mutate(j);
    CHECK_THROWS_AS(atlas::config_from_json(j), atlas::ConfigError);
  };
  bad([](json& j) { j["unknown"] = 1; });
  bad([](json& j) { j["tsne"] = {{"perplxity", 5}}; });
  bad([](json& j) { j["max_features"] = -3; });
  bad([](json& j) { j["max_features"] = "many"; });
  bad([](json& j) { j["variance_target"] = 1.5; });
  bad([](json& j) { j["k"] = 0; });
  bad([](json& j) { j["elbow"] = {{"k_min", 10}, {"k_max", 5}}; });
  bad([](json& j) { j["tsne"] = {{"theta", 1.0}}; });
  bad([](json& j) { j["input"]["format"] = "parquet"; });
  bad([](json& j) { j["input"]["paths"] = json::array(); });
  bad([](json& j) { j["threads"] = 0; });
}

TEST_CASE("config hash reacts to every result-affecting field") {
  const auto base = atlas::config_from_json(base_config());
  const std::string h = atlas::config_hash(base);
  CHECK(h.size() == 16);
  auto differs = [&](auto mutate) {
    PipelineConfig c = base;
    mutate(c);
    CHECK(atlas::config_hash(c) != h);
  };
  differs([](PipelineConfig& c) { c.input_paths.push_back("more.jsonl"); });
  differs([](PipelineConfig& c) { c.input_format = atlas::InputFormat::kCsv; });
  differs([](PipelineConfig& c) { c.stoplist_path = "words.txt"; });
  differs([](PipelineConfig& c) { c.language_threshold = 0.3; });
  differs([](PipelineConfig& c) { c.max_features = 100; });
  differs([](PipelineConfig& c) { c.variance_target = 0.9; });
  differs([](PipelineConfig& c) { c.k = 5; });
  differs([](PipelineConfig& c) { c.elbow_k_min = 3; });
  differs([](PipelineConfig& c) { c.elbow_k_max = 30; });
  differs([](PipelineConfig& c) { c.elbow_step = 1; });
  differs([](PipelineConfig& c) { c.elbow_flat_ratio = 3.0; });
  differs([](PipelineConfig& c) { c.kmeans_n_init = 3; });
  differs([](PipelineConfig& c) { c.kmeans_max_iter = 50; });
  differs([](PipelineConfig& c) { c.kmeans_tol = 1e-6; });
  differs([](PipelineConfig& c) { c.kmeans_init = atlas::KMeansInit::kRandom; });
  differs([](PipelineConfig& c) { c.tsne.perplexity = 20; });
  differs([](PipelineConfig& c) { c.tsne.n_iter = 500; });
  differs([](PipelineConfig& c) { c.tsne.early_exaggeration = 4; });
  differs([](PipelineConfig& c) { c.tsne.learning_rate = 100; });
  differs([](PipelineConfig& c) { c.tsne.theta = 0.3; });
  differs([](PipelineConfig& c) { c.tsne.init = atlas::TsneInit::kPca; });
  differs([](PipelineConfig& c) { c.tsne_pre_reduce = true; });
  differs([](PipelineConfig& c) { c.seed = 1; });

  PipelineConfig same = base;
  same.threads = 8;
  same.output_dir = "elsewhere";
  CHECK(atlas::config_hash(same) == h);
}

TEST_CASE("stage hashes only cover upstream parameters") {
  const auto base = atlas::config_from_json(base_config());
  PipelineConfig other = base;
  other.k = 4;
  CHECK(atlas::stage_hash(base, Stage::kReduce) == atlas::stage_hash(other, Stage::kReduce));
  CHECK(atlas::stage_hash(base, Stage::kEmbed) == atlas::stage_hash(other, Stage::kEmbed));
  CHECK(atlas::stage_hash(base, Stage::kCluster) != atlas::stage_hash(other, Stage::kCluster));
  other = base;
  other.max_features = 10;
  for (Stage s : {Stage::kVectorize, Stage::kReduce, Stage::kElbow, Stage::kCluster, Stage::kEmbed, Stage::kExport})
    CHECK(atlas::stage_hash(base, s) != atlas::stage_hash(other, s));
  CHECK(atlas::stage_hash(base, Stage::kIngest) == atlas::stage_hash(other, Stage::kIngest));
}

TEST_CASE("seeds fan out by fixed offsets") {
  PipelineConfig c = atlas::config_from_json(base_config());
  c.seed = 100;
  CHECK(atlas::elbow_seed(c) == 101);
  CHECK(atlas::cluster_seed(c) == 102);
  CHECK(atlas::embed_seed(c) == 103);
  CHECK(atlas::parse_stage("embed") == Stage::kEmbed);
  CHECK_THROWS_AS(atlas::parse_stage("plot"), atlas::ConfigError);
}

TEST_CASE("run_stage reports missing and stale caches") {
  testutil::TempDir dir("stages");
  stage_fixture(dir);
  auto c = atlas::load_config(dir / "fixture15.json");
  std::ostringstream log;
  try {
    atlas::run_stage(Stage::kCluster, c, log);
    FAIL("expected a missing-cache error");
  } catch (const atlas::DataError& e) {
    CHECK(std::string(e.what()).find("'reduce'") != std::string::npos);
  }
  atlas::run_stage(Stage::kIngest, c, log);
  atlas::run_stage(Stage::kVectorize, c, log);
  c.max_features = 50;
  try {
    atlas::run_stage(Stage::kReduce, c, log);
    FAIL("expected a stale-cache error");
  } catch (const atlas::DataError& e) {
    CHECK(std::string(e.what()).find("stale") != std::string::npos);
    CHECK(std::string(e.what()).find("vectorize") != std::string::npos);
  }
}

TEST_CASE("cli: all on the fixture, determinism and stage composition") {
  testutil::TempDir dir("cli");
  stage_fixture(dir);
  REQUIRE(run_cli("all --config fixture15.json", dir) == 0);
  const auto atlas_path = dir / "out15" / "atlas.json";
  const std::string first = testutil::read_file(atlas_path);
  const auto parsed = json::parse(first);
  CHECK(parsed["points"].size() == 15);
  CHECK(parsed["provenance"]["chosen_k"] == 3);
  CHECK(std::filesystem::exists(dir / "out15" / "elbow.csv") == false);

  REQUIRE(run_cli("all --config fixture15.json", dir) == 0);
  CHECK(testutil::read_file(atlas_path) == first);

  std::filesystem::remove_all(dir / "out15");
  for (const char* s : {"ingest", "vectorize", "reduce", "cluster", "embed", "export"}) {
    CAPTURE(s);
    REQUIRE(run_cli(std::string(s) + " --config fixture15.json", dir) == 0);
  }
  CHECK(testutil::read_file(atlas_path) == first);

  REQUIRE(run_cli("all --config fixture15.json --threads 3 --out threaded", dir) == 0);
  CHECK(testutil::read_file(dir / "threaded" / "atlas.json") == first);
}

TEST_CASE("cli: elbow stage writes the distortion csv") {
  testutil::TempDir dir("cli_elbow");
  stage_fixture(dir);
  for (const char* s : {"ingest", "vectorize", "reduce", "elbow"}) REQUIRE(run_cli(std::string(s) + " --config fixture15.json", dir) == 0);
  const std::string csv = testutil::read_file(dir / "out15" / "elbow.csv");
  CHECK(csv.rfind("k,distortion\n2,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
}

TEST_CASE("cli: exit codes") {
  testutil::TempDir dir("cli_errors");
  stage_fixture(dir);
  CHECK(run_cli("cluster --config fixture15.json", dir) == 2);
  CHECK(testutil::read_file(dir / "stderr.txt").find("reduce") != std::string::npos);
  CHECK(run_cli("all --config missing.json", dir) == 1);
  CHECK(run_cli("all", dir) == 1);
  CHECK(run_cli("frobnicate --config fixture15.json", dir) == 1);
  testutil::write_file(dir / "bad.json", R"({"input": {"paths": ["fixture15.jsonl"]}, "tsne": {"perplexity": 20}})");
  CHECK(run_cli("all --config bad.json --k 3", dir) == 1);
  testutil::write_file(dir / "nodata.json", R"({"input": {"paths": ["absent.jsonl"]}})");
  CHECK(run_cli("ingest --config nodata.json", dir) == 2);
  CHECK(run_cli("all --config fixture15.json --k 99", dir) == 1);
}
