#include "atlas/pipeline.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "atlas/error.hpp"
#include "atlas/export.hpp"
#include "atlas/pca.hpp"
#include "atlas/text.hpp"
#include "atlas/vectorize.hpp"

namespace atlas {

using nlohmann::json;

namespace {

constexpr std::uint64_t kElbowSeedOffset = 1;
constexpr std::uint64_t kClusterSeedOffset = 2;
constexpr std::uint64_t kEmbedSeedOffset = 3;

// ---- config parsing -------------------------------------------------------

class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string scope) : obj_(obj), scope_(std::move(scope)) {
    if (!obj_.is_object()) throw ConfigError(scope_ + " must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.push_back(key);
    const auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if (std::is_unsigned_v<T> && it->is_number_integer() && it->get<std::int64_t>() < 0) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + name(key) + "' has the wrong type or sign");
    }
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    const auto it = obj_.find(key);
    return (it == obj_.end() || it->is_null()) ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ConfigError("unknown config key '" + name(key) + "'");
      }
    }
  }

  std::string name(const std::string& key) const { return scope_.empty() ? key : scope_ + "." + key; }

 private:
  const json& obj_;
  std::string scope_;
  std::vector<std::string> seen_;
};

// ---- cache (de)serialization ---------------------------------------------

json to_json(const SparseMatrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"row_offsets", m.row_offsets()},
          {"col_indices", m.col_indices()},
          {"values", m.values()}};
}

SparseMatrix sparse_from_json(const json& j) {
  return SparseMatrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                      j.at("row_offsets").get<std::vector<std::size_t>>(),
                      j.at("col_indices").get<std::vector<std::uint32_t>>(), j.at("values").get<std::vector<double>>());
}

json to_json(const DenseMatrix& m) { return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", m.values()}}; }

DenseMatrix dense_from_json(const json& j) {
  return DenseMatrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                     j.at("values").get<std::vector<double>>());
}

json to_json(const DocumentRecord& r) {
  return {{"doc_id", r.doc_id},     {"title", r.title},     {"abstract", r.abstract}, {"body_text", r.body_text},
          {"authors", r.authors},   {"journal", r.journal}, {"url", r.url},           {"source_file", r.source_file}};
}

DocumentRecord record_from_json(const json& j) {
  DocumentRecord r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.title = j.at("title").get<std::string>();
  r.abstract = j.at("abstract").get<std::string>();
  r.body_text = j.at("body_text").get<std::string>();
  r.authors = j.at("authors").get<std::vector<std::string>>();
  r.journal = j.at("journal").get<std::string>();
  r.url = j.at("url").get<std::string>();
  r.source_file = j.at("source_file").get<std::string>();
  return r;
}

json to_json(const CorpusStats& s) {
  return {{"n_raw", s.n_raw},
          {"n_after_dedup", s.n_after_dedup},
          {"n_after_abstract_filter", s.n_after_abstract_filter},
          {"n_after_language_filter", s.n_after_language_filter}};
}

CorpusStats stats_from_json(const json& j) {
  return {j.at("n_raw").get<std::size_t>(), j.at("n_after_dedup").get<std::size_t>(),
          j.at("n_after_abstract_filter").get<std::size_t>(), j.at("n_after_language_filter").get<std::size_t>()};
}

json tsne_to_json(const TsneConfig& t) {
  return {{"perplexity", t.perplexity},
          {"n_iter", t.n_iter},
          {"early_exaggeration", t.early_exaggeration},
          {"exaggeration_iters", t.exaggeration_iters},
          {"learning_rate", t.learning_rate},
          {"initial_momentum", t.initial_momentum},
          {"final_momentum", t.final_momentum},
          {"momentum_switch_iter", t.momentum_switch_iter},
          {"theta", t.theta},
          {"init", std::string(to_string(t.init))},
          {"exact_knn_max", t.exact_knn_max}};
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("error while writing " + path.string());
}

struct Vectors {
  SparseMatrix x1;
  Vocabulary vocab;
};

struct Reduced {
  PcaModel model;
  DenseMatrix x2;
};

class Runner {
 public:
  Runner(const PipelineConfig& config, std::ostream& log) : config_(config), log_(log) {
    std::filesystem::create_directories(config_.output_path());
  }

  void run(Stage stage) {
    switch (stage) {
      case Stage::kIngest:
        return ingest();
      case Stage::kVectorize:
        return vectorize();
      case Stage::kReduce:
        return reduce();
      case Stage::kElbow:
        return elbow();
      case Stage::kCluster:
        return cluster();
      case Stage::kEmbed:
        return embed_stage();
      case Stage::kExport:
        return export_stage();
      case Stage::kAll:
        ingest();
        vectorize();
        reduce();
        if (!config_.k) elbow();
        cluster();
        embed_stage();
        export_stage();
        return;
    }
  }

 private:
  void ingest() {
    std::vector<std::filesystem::path> paths;
    for (const auto& p : config_.input_paths) paths.push_back(config_.resolve(p));
    LoadResult loaded = load_corpus(paths, config_.input_format);
    for (const auto& w : loaded.warnings) {
      log_ << "warning: " << w.path << ":" << w.line << ": " << w.message << ", record skipped\n";
    }
    CleanCorpus clean = clean_corpus(loaded.records, config_.language_threshold);
    if (clean.records.empty()) throw DataError("no documents left after filtering");
    log_ << "[ingest] " << clean.stats.n_raw << " raw, " << clean.stats.n_after_dedup << " after dedup, "
         << clean.stats.n_after_abstract_filter << " with body text, " << clean.stats.n_after_language_filter
         << " English\n";

    json records = json::array();
    for (const auto& r : clean.records) records.push_back(to_json(r));
    const std::string hash = stage_hash(config_, Stage::kIngest);
    write_text(cache_path(config_, Stage::kIngest),
               dump({{"stage", "ingest"}, {"config_hash", hash}, {"stats", to_json(clean.stats)}, {"records", records}}));
    write_text(config_.output_path() / "corpus_stats.json",
               json{{"config_hash", hash}, {"stats", to_json(clean.stats)}}.dump(2) + "\n");
    corpus_ = std::move(clean);
  }

  void vectorize() {
    const CleanCorpus& corpus = need_corpus();
    Stoplist stoplist = Stoplist::standard();
    if (config_.stoplist_path) stoplist.load_domain_file(config_.resolve(*config_.stoplist_path));
    std::vector<TokenizedDocument> docs;
    docs.reserve(corpus.records.size());
    for (const auto& r : corpus.records) docs.push_back(normalize_document(r, stoplist));
    Vectors v;
    v.vocab = build_vocabulary(docs, config_.max_features, config_.threads);
    v.x1 = tfidf(docs, v.vocab, config_.threads);
    log_ << "[vectorize] " << v.x1.rows() << " x " << v.x1.cols() << " tf-idf matrix, " << v.x1.nnz()
         << " non-zeros\n";

    json vocab = json::array();
    for (std::size_t t = 0; t < v.vocab.size(); ++t) {
      vocab.push_back({{"term", v.vocab.term(t)},
                       {"index", t},
                       {"df", v.vocab.document_frequency()[t]},
                       {"cf", v.vocab.corpus_frequency()[t]}});
    }
    write_text(cache_path(config_, Stage::kVectorize), dump({{"stage", "vectorize"},
                                                              {"config_hash", stage_hash(config_, Stage::kVectorize)},
                                                              {"n_docs", v.vocab.n_docs()},
                                                              {"matrix", to_json(v.x1)},
                                                              {"vocabulary", vocab}}));
    vectors_ = std::move(v);
  }

  void reduce() {
    const Vectors& v = need_vectors();
    PcaOptions opt;
    opt.variance_target = config_.variance_target;
    Reduced r;
    r.model = fit_pca(v.x1, opt);
    r.x2 = transform(v.x1, r.model);
    double kept = 0.0;
    for (double ratio : r.model.explained_variance_ratio) kept += ratio;
    log_ << "[reduce] " << r.model.n_components() << " components keep " << kept * 100.0 << "% of variance\n";

    const auto& m = r.model;
    write_text(cache_path(config_, Stage::kReduce), dump({{"stage", "reduce"},
                                                           {"config_hash", stage_hash(config_, Stage::kReduce)},
                                                           {"variance_target", m.variance_target},
                                                           {"n_components", m.n_components()},
                                                           {"rank", m.rank},
                                                           {"n_samples", m.n_samples},
                                                           {"mean", m.mean},
                                                           {"components", to_json(m.components)},
                                                           {"explained_variance", m.explained_variance},
                                                           {"explained_variance_ratio", m.explained_variance_ratio},
                                                           {"x2", to_json(r.x2)}}));
    reduced_ = std::move(r);
  }

  void elbow() {
    const Reduced& r = need_reduced();
    ElbowOptions opt;
    opt.k_min = config_.elbow_k_min;
    opt.k_max = config_.elbow_k_max;
    opt.step = config_.elbow_step;
    opt.flat_ratio = config_.elbow_flat_ratio;
    opt.seed = elbow_seed(config_);
    opt.n_init = config_.kmeans_n_init;
    opt.max_iter = config_.kmeans_max_iter;
    opt.tol = config_.kmeans_tol;
    opt.init = config_.kmeans_init;
    opt.threads = config_.threads;
    if (opt.k_max > r.x2.rows()) {
      throw ConfigError("elbow.k_max = " + std::to_string(opt.k_max) + " exceeds the " +
                        std::to_string(r.x2.rows()) + " documents");
    }
    ElbowCurve curve = elbow_sweep(r.x2, opt);
    log_ << "[elbow] " << curve.entries.size() << " values of k, knee at k = " << curve.chosen_k << "\n";

    std::string csv = "k,distortion\n";
    json entries = json::array();
    for (const auto& e : curve.entries) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e.k, e.distortion);
      csv += buf;
      entries.push_back({{"k", e.k}, {"distortion", e.distortion}});
    }
    write_text(config_.output_path() / "elbow.csv", csv);
    write_text(cache_path(config_, Stage::kElbow),
               json{{"stage", "elbow"},
                    {"config_hash", stage_hash(config_, Stage::kElbow)},
                    {"chosen_k", curve.chosen_k},
                    {"entries", entries}}
                       .dump(2) +
                   "\n");
    elbow_ = std::move(curve);
  }

  void cluster() {
    const Reduced& r = need_reduced();
    const std::size_t k = config_.k ? *config_.k : need_elbow().chosen_k;
    if (k > r.x2.rows()) {
      throw ConfigError("k = " + std::to_string(k) + " exceeds the " + std::to_string(r.x2.rows()) + " documents");
    }
    KMeansOptions opt;
    opt.k = k;
    opt.seed = cluster_seed(config_);
    opt.n_init = config_.kmeans_n_init;
    opt.max_iter = config_.kmeans_max_iter;
    opt.tol = config_.kmeans_tol;
    opt.init = config_.kmeans_init;
    opt.threads = config_.threads;
    KMeansModel model = kmeans_fit(r.x2, opt);
    log_ << "[cluster] k = " << k << ", inertia " << model.inertia << " after " << model.n_iter_run
         << " iterations\n";

    write_text(cache_path(config_, Stage::kCluster), dump({{"stage", "cluster"},
                                                            {"config_hash", stage_hash(config_, Stage::kCluster)},
                                                            {"k", model.k},
                                                            {"seed", model.seed},
                                                            {"inertia", model.inertia},
                                                            {"n_iter_run", model.n_iter_run},
                                                            {"labels", model.labels},
                                                            {"centroids", to_json(model.centroids)},
                                                            {"inertia_trace", model.inertia_trace}}));
    kmeans_ = std::move(model);
  }

  void embed_stage() {
    TsneConfig tc = config_.tsne;
    tc.seed = embed_seed(config_);
    tc.threads = config_.threads;
    Embedding2D e;
    const Vectors& v = need_vectors();
    try {
      validate(tc, v.x1.rows());
    } catch (const std::invalid_argument& err) {
      throw ConfigError(err.what());
    }
    if (config_.tsne_pre_reduce) {
      const Reduced& r = need_reduced();
      const std::size_t dims = std::min(config_.pre_reduce_dims, r.x2.cols());
      DenseMatrix lead(r.x2.rows(), dims);
      for (std::size_t i = 0; i < lead.rows(); ++i) {
        for (std::size_t c = 0; c < dims; ++c) lead(i, c) = r.x2(i, c);
      }
      e = embed(SparseMatrix::from_dense(lead), tc);
    } else {
      e = embed(v.x1, tc);
    }
    log_ << "[embed] " << e.y.rows() << " points, final KL " << e.final_kl << "\n";

    json trace = json::array();
    for (const auto& [it, kl] : e.kl_trace) trace.push_back({{"iteration", it}, {"kl", kl}});
    json tsne = tsne_to_json(tc);
    tsne["seed"] = tc.seed;
    tsne["pre_reduce"] = config_.tsne_pre_reduce;
    write_text(cache_path(config_, Stage::kEmbed),
               dump({{"stage", "embed"},
                     {"config_hash", stage_hash(config_, Stage::kEmbed)},
                     {"tsne", tsne},
                     {"y", to_json(e.y)},
                     {"final_kl", e.final_kl},
                     {"kl_at_exaggeration_end", e.kl_at_exaggeration_end ? json(*e.kl_at_exaggeration_end) : json()},
                     {"n_distinct", e.n_distinct},
                     {"kl_trace", trace}}));
    embedding_ = std::move(e);
  }

  void export_stage() {
    const CleanCorpus& corpus = need_corpus();
    const Vectors& v = need_vectors();
    const KMeansModel& km = need_kmeans();
    const Embedding2D& e = need_embedding();
    if (km.labels.size() != corpus.records.size() || e.y.rows() != corpus.records.size()) {
      throw DataError("cached stages disagree on the number of documents; re-run the pipeline");
    }
    const auto terms = cluster_top_terms(v.x1, km.labels, v.vocab, km.k);
    AtlasProvenance prov{config_hash(config_), corpus.stats, km.k, e.final_kl};
    const auto path = cache_path(config_, Stage::kExport);
    write_atlas(corpus.records, e.y, km.labels, terms, prov, path);
    log_ << "[export] wrote " << path.string() << "\n";
  }

  json read_cache(Stage stage) const {
    const auto path = cache_path(config_, stage);
    const std::string name(to_string(stage));
    if (!std::filesystem::exists(path)) {
      throw DataError("missing cache for stage '" + name + "' (" + path.string() + "); run `atlas " + name +
                      "` first");
    }
    std::ifstream in(path, std::ios::binary);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError("corrupt cache for stage '" + name + "': " + path.string());
    const auto hash = j.value("config_hash", std::string());
    if (hash != stage_hash(config_, stage)) {
      throw DataError("stale cache for stage '" + name + "' (" + path.string() +
                      "): configuration changed since it was written; re-run `atlas " + name + "`");
    }
    return j;
  }

  template <typename Fn>
  auto parse_cache(Stage stage, Fn&& fn) const {
    json j = read_cache(stage);
    try {
      return fn(j);
    } catch (const json::exception& e) {
      throw DataError("corrupt cache for stage '" + std::string(to_string(stage)) + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError("corrupt cache for stage '" + std::string(to_string(stage)) + "': " + e.what());
    }
  }

  const CleanCorpus& need_corpus() {
    if (!corpus_) {
      corpus_ = parse_cache(Stage::kIngest, [](const json& j) {
        CleanCorpus c;
        c.stats = stats_from_json(j.at("stats"));
        for (const auto& r : j.at("records")) c.records.push_back(record_from_json(r));
        return c;
      });
    }
    return *corpus_;
  }

  const Vectors& need_vectors() {
    if (!vectors_) {
      vectors_ = parse_cache(Stage::kVectorize, [](const json& j) {
        std::vector<std::string> terms;
        std::vector<std::uint32_t> df;
        std::vector<std::uint64_t> cf;
        for (const auto& t : j.at("vocabulary")) {
          terms.push_back(t.at("term").get<std::string>());
          df.push_back(t.at("df").get<std::uint32_t>());
          cf.push_back(t.at("cf").get<std::uint64_t>());
        }
        return Vectors{sparse_from_json(j.at("matrix")),
                       Vocabulary(std::move(terms), std::move(df), std::move(cf), j.at("n_docs").get<std::size_t>())};
      });
    }
    return *vectors_;
  }

  const Reduced& need_reduced() {
    if (!reduced_) {
      reduced_ = parse_cache(Stage::kReduce, [](const json& j) {
        Reduced r;
        r.model.variance_target = j.at("variance_target").get<double>();
        r.model.rank = j.at("rank").get<std::size_t>();
        r.model.n_samples = j.at("n_samples").get<std::size_t>();
        r.model.mean = j.at("mean").get<std::vector<double>>();
        r.model.components = dense_from_json(j.at("components"));
        r.model.explained_variance = j.at("explained_variance").get<std::vector<double>>();
        r.model.explained_variance_ratio = j.at("explained_variance_ratio").get<std::vector<double>>();
        r.x2 = dense_from_json(j.at("x2"));
        return r;
      });
    }
    return *reduced_;
  }

  const ElbowCurve& need_elbow() {
    if (!elbow_) {
      elbow_ = parse_cache(Stage::kElbow, [](const json& j) {
        ElbowCurve c;
        c.chosen_k = j.at("chosen_k").get<std::size_t>();
        for (const auto& e : j.at("entries")) {
          c.entries.push_back({e.at("k").get<std::size_t>(), e.at("distortion").get<double>()});
        }
        return c;
      });
    }
    return *elbow_;
  }

  const KMeansModel& need_kmeans() {
    if (!kmeans_) {
      kmeans_ = parse_cache(Stage::kCluster, [](const json& j) {
        KMeansModel m;
        m.k = j.at("k").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.inertia = j.at("inertia").get<double>();
        m.n_iter_run = j.at("n_iter_run").get<int>();
        m.labels = j.at("labels").get<std::vector<std::uint32_t>>();
        m.centroids = dense_from_json(j.at("centroids"));
        m.inertia_trace = j.at("inertia_trace").get<std::vector<double>>();
        return m;
      });
    }
    return *kmeans_;
  }

  const Embedding2D& need_embedding() {
    if (!embedding_) {
      embedding_ = parse_cache(Stage::kEmbed, [](const json& j) {
        Embedding2D e;
        e.y = dense_from_json(j.at("y"));
        e.final_kl = j.at("final_kl").get<double>();
        if (!j.at("kl_at_exaggeration_end").is_null()) {
          e.kl_at_exaggeration_end = j.at("kl_at_exaggeration_end").get<double>();
        }
        e.n_distinct = j.at("n_distinct").get<std::size_t>();
        for (const auto& t : j.at("kl_trace")) {
          e.kl_trace.emplace_back(t.at("iteration").get<int>(), t.at("kl").get<double>());
        }
        return e;
      });
    }
    return *embedding_;
  }

  const PipelineConfig& config_;
  std::ostream& log_;
  std::optional<CleanCorpus> corpus_;
  std::optional<Vectors> vectors_;
  std::optional<Reduced> reduced_;
  std::optional<ElbowCurve> elbow_;
  std::optional<KMeansModel> kmeans_;
  std::optional<Embedding2D> embedding_;
};

}  // namespace

std::filesystem::path PipelineConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

PipelineConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  ObjectReader root(j, "");
  if (const json* input = root.child("input")) {
    ObjectReader in(*input, "input");
    if (const json* paths = in.child("paths")) {
      if (!paths->is_array()) throw ConfigError("input.paths must be an array of strings");
      for (const auto& p : *paths) {
        if (!p.is_string()) throw ConfigError("input.paths must be an array of strings");
        c.input_paths.push_back(p.get<std::string>());
      }
    }
    std::string format(to_string(c.input_format));
    in.read("format", format);
    c.input_format = parse_input_format(format);
    in.finish();
  }
  std::string stoplist;
  root.read("stoplist", stoplist);
  if (!stoplist.empty()) c.stoplist_path = stoplist;
  root.read("language_threshold", c.language_threshold);
  root.read("max_features", c.max_features);
  root.read("variance_target", c.variance_target);
  std::size_t k = 0;
  root.read("k", k);
  if (j.contains("k") && !j.at("k").is_null()) c.k = k;
  if (const json* elbow = root.child("elbow")) {
    ObjectReader e(*elbow, "elbow");
    e.read("k_min", c.elbow_k_min);
    e.read("k_max", c.elbow_k_max);
    e.read("step", c.elbow_step);
    e.read("flat_ratio", c.elbow_flat_ratio);
    e.finish();
  }
  if (const json* km = root.child("kmeans")) {
    ObjectReader r(*km, "kmeans");
    r.read("n_init", c.kmeans_n_init);
    r.read("max_iter", c.kmeans_max_iter);
    r.read("tol", c.kmeans_tol);
    std::string init(to_string(c.kmeans_init));
    r.read("init", init);
    c.kmeans_init = parse_kmeans_init(init);
    r.finish();
  }
  if (const json* ts = root.child("tsne")) {
    ObjectReader t(*ts, "tsne");
    t.read("perplexity", c.tsne.perplexity);
    t.read("n_iter", c.tsne.n_iter);
    t.read("early_exaggeration", c.tsne.early_exaggeration);
    t.read("exaggeration_iters", c.tsne.exaggeration_iters);
    t.read("learning_rate", c.tsne.learning_rate);
    t.read("initial_momentum", c.tsne.initial_momentum);
    t.read("final_momentum", c.tsne.final_momentum);
    t.read("momentum_switch_iter", c.tsne.momentum_switch_iter);
    t.read("theta", c.tsne.theta);
    std::string init(to_string(c.tsne.init));
    t.read("init", init);
    c.tsne.init = parse_tsne_init(init);
    t.read("exact_knn_max", c.tsne.exact_knn_max);
    t.read("pre_reduce", c.tsne_pre_reduce);
    t.read("pre_reduce_dims", c.pre_reduce_dims);
    t.finish();
  }
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);
  root.read("threads", c.threads);
  root.finish();
  validate(c);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return config_from_json(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

json config_to_json(const PipelineConfig& c) {
  json tsne = tsne_to_json(c.tsne);
  tsne["pre_reduce"] = c.tsne_pre_reduce;
  tsne["pre_reduce_dims"] = c.pre_reduce_dims;
  return {{"input", {{"paths", c.input_paths}, {"format", std::string(to_string(c.input_format))}}},
          {"stoplist", c.stoplist_path ? json(*c.stoplist_path) : json()},
          {"language_threshold", c.language_threshold},
          {"max_features", c.max_features},
          {"variance_target", c.variance_target},
          {"k", c.k ? json(*c.k) : json()},
          {"elbow",
           {{"k_min", c.elbow_k_min}, {"k_max", c.elbow_k_max}, {"step", c.elbow_step}, {"flat_ratio", c.elbow_flat_ratio}}},
          {"kmeans",
           {{"n_init", c.kmeans_n_init},
            {"max_iter", c.kmeans_max_iter},
            {"tol", c.kmeans_tol},
            {"init", std::string(to_string(c.kmeans_init))}}},
          {"tsne", tsne},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"threads", c.threads}};
}

void validate(const PipelineConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  if (c.input_paths.empty()) fail("input.paths must list at least one file");
  if (!(c.language_threshold >= 0.0 && c.language_threshold <= 1.0)) fail("language_threshold must be in [0, 1]");
  if (c.max_features == 0) fail("max_features must be positive");
  if (!(c.variance_target > 0.0 && c.variance_target <= 1.0)) fail("variance_target must be in (0, 1]");
  if (c.k && *c.k == 0) fail("k must be at least 1");
  if (c.elbow_k_min < 1 || c.elbow_k_min >= c.elbow_k_max) fail("elbow needs 1 <= k_min < k_max");
  if (c.elbow_step == 0) fail("elbow.step must be positive");
  if (!(c.elbow_flat_ratio >= 1.0)) fail("elbow.flat_ratio must be at least 1");
  if (c.kmeans_n_init < 1) fail("kmeans.n_init must be positive");
  if (c.kmeans_max_iter < 1) fail("kmeans.max_iter must be positive");
  if (!(c.kmeans_tol >= 0.0)) fail("kmeans.tol must be non-negative");
  if (c.kmeans_init == KMeansInit::kExhaustive) fail("kmeans.init 'exhaustive' is for tests only");
  // The perplexity bound depends on the corpus size and is checked at embed.
  try {
    validate(c.tsne, std::numeric_limits<std::size_t>::max() / 2);
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (c.pre_reduce_dims == 0) fail("tsne.pre_reduce_dims must be positive");
  if (c.threads < 1) fail("threads must be positive");
}

std::uint64_t elbow_seed(const PipelineConfig& c) { return c.seed + kElbowSeedOffset; }
std::uint64_t cluster_seed(const PipelineConfig& c) { return c.seed + kClusterSeedOffset; }
std::uint64_t embed_seed(const PipelineConfig& c) { return c.seed + kEmbedSeedOffset; }

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::kIngest, Stage::kVectorize, Stage::kReduce, Stage::kElbow, Stage::kCluster, Stage::kEmbed,
                  Stage::kExport, Stage::kAll}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kIngest:
      return "ingest";
    case Stage::kVectorize:
      return "vectorize";
    case Stage::kReduce:
      return "reduce";
    case Stage::kElbow:
      return "elbow";
    case Stage::kCluster:
      return "cluster";
    case Stage::kEmbed:
      return "embed";
    case Stage::kExport:
      return "export";
    case Stage::kAll:
      return "all";
  }
  return "all";
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string config_hash(const PipelineConfig& config) {
  json j = config_to_json(config);
  j.erase("output_dir");
  j.erase("threads");
  return fnv1a_hex(dump(j));
}

std::string stage_hash(const PipelineConfig& c, Stage stage) {
  const json full = config_to_json(c);
  json params;
  json inputs = json::array();
  switch (stage) {
    case Stage::kIngest:
      params = {{"input", full["input"]}, {"language_threshold", c.language_threshold}};
      break;
    case Stage::kVectorize:
      params = {{"stoplist", full["stoplist"]}, {"max_features", c.max_features}};
      inputs.push_back(stage_hash(c, Stage::kIngest));
      break;
    case Stage::kReduce:
      params = {{"variance_target", c.variance_target}};
      inputs.push_back(stage_hash(c, Stage::kVectorize));
      break;
    case Stage::kElbow:
      params = {{"elbow", full["elbow"]}, {"kmeans", full["kmeans"]}, {"seed", elbow_seed(c)}};
      inputs.push_back(stage_hash(c, Stage::kReduce));
      break;
    case Stage::kCluster:
      params = {{"k", full["k"]}, {"kmeans", full["kmeans"]}, {"seed", cluster_seed(c)}};
      inputs.push_back(stage_hash(c, Stage::kReduce));
      if (!c.k) inputs.push_back(stage_hash(c, Stage::kElbow));
      break;
    case Stage::kEmbed:
      params = {{"tsne", full["tsne"]}, {"seed", embed_seed(c)}};
      inputs.push_back(stage_hash(c, Stage::kVectorize));
      if (c.tsne_pre_reduce) inputs.push_back(stage_hash(c, Stage::kReduce));
      break;
    case Stage::kExport:
    case Stage::kAll:
      inputs.push_back(stage_hash(c, Stage::kCluster));
      inputs.push_back(stage_hash(c, Stage::kEmbed));
      break;
  }
  return fnv1a_hex(dump({{"stage", std::string(to_string(stage))}, {"params", params}, {"inputs", inputs}}));
}

std::filesystem::path cache_path(const PipelineConfig& config, Stage stage) {
  const char* name = "atlas.json";
  switch (stage) {
    case Stage::kIngest:
      name = "corpus.json";
      break;
    case Stage::kVectorize:
      name = "vectors.json";
      break;
    case Stage::kReduce:
      name = "pca.json";
      break;
    case Stage::kElbow:
      name = "elbow.json";
      break;
    case Stage::kCluster:
      name = "kmeans.json";
      break;
    case Stage::kEmbed:
      name = "embedding.json";
      break;
    case Stage::kExport:
    case Stage::kAll:
      break;
  }
  return config.output_path() / name;
}

void run_stage(Stage stage, const PipelineConfig& config, std::ostream& log) {
  validate(config);
  Runner(config, log).run(stage);
}

}  // namespace atlas
