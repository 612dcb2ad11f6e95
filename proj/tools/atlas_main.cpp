// atlas: command-line driver for the paper-atlas pipeline.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "atlas/error.hpp"
#include "atlas/pipeline.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster and map a corpus of papers"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;

  const char* stages[] = {"ingest", "vectorize", "reduce", "elbow", "cluster", "embed", "export", "all"};
  const char* help[] = {"load, deduplicate and filter the corpus",
                        "tokenize and build the tf-idf matrix",
                        "PCA down to the variance target",
                        "sweep k and write the distortion curve",
                        "run k-means",
                        "run t-SNE",
                        "write the atlas JSON",
                        "run every stage in order"};
  for (std::size_t i = 0; i < std::size(stages); ++i) {
    CLI::App* sub = app.add_subcommand(stages[i], help[i]);
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required();
    sub->add_option("--k", k, "number of clusters, skipping the elbow choice");
    sub->add_option("--seed", seed, "global seed");
    sub->add_option("--threads", threads, "worker threads");
    sub->add_option("--out", out, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    atlas::PipelineConfig config = atlas::load_config(config_path);
    if (k) config.k = *k;
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    if (out) config.output_dir = std::filesystem::absolute(*out).string();
    atlas::validate(config);
    const atlas::Stage stage = atlas::parse_stage(app.get_subcommands().front()->get_name());
    atlas::run_stage(stage, config, std::cerr);
  } catch (const atlas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const atlas::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
