#include "atlas/vectorize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "atlas/error.hpp"
#include "atlas/parallel.hpp"

namespace atlas {
namespace {

struct TermCounts {
  std::uint64_t corpus = 0;
  std::uint32_t docs = 0;
};

using CountMap = std::map<std::string, TermCounts, std::less<>>;

CountMap count_range(std::span<const TokenizedDocument> docs) {
  CountMap counts;
  std::map<std::string_view, std::uint64_t> local;
  for (const auto& d : docs) {
    local.clear();
    for (const auto& t : d.tokens) ++local[t];
    for (const auto& [term, n] : local) {
      auto it = counts.find(term);
      if (it == counts.end()) it = counts.emplace(std::string(term), TermCounts{}).first;
      it->second.corpus += n;
      it->second.docs += 1;
    }
  }
  return counts;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> document_frequency,
                       std::vector<std::uint64_t> corpus_frequency, std::size_t n_docs)
    : terms_(std::move(terms)),
      document_frequency_(std::move(document_frequency)),
      corpus_frequency_(std::move(corpus_frequency)),
      n_docs_(n_docs) {
  if (document_frequency_.size() != terms_.size() || corpus_frequency_.size() != terms_.size()) {
    throw std::invalid_argument("Vocabulary: per-term arrays must match the term count");
  }
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i > 0 && !(terms_[i - 1] < terms_[i])) {
      throw std::invalid_argument("Vocabulary: terms must be strictly increasing");
    }
    if (document_frequency_[i] < 1 || document_frequency_[i] > n_docs_) {
      throw std::invalid_argument("Vocabulary: document frequency out of range for '" + terms_[i] + "'");
    }
    index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
  }
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(std::span<const TokenizedDocument> docs, std::size_t max_features, int threads) {
  if (docs.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  if (max_features == 0) throw ConfigError("max_features must be positive");

  // Per-chunk counts merged in chunk order; map merge is order-independent
  // for integer counts, so the result does not depend on `threads`.
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, docs.size());
  std::vector<CountMap> partial(workers);
  const std::size_t chunk = (docs.size() + workers - 1) / workers;
  parallel_for(workers, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t w = begin; w < end; ++w) {
      const std::size_t lo = std::min(docs.size(), w * chunk);
      const std::size_t hi = std::min(docs.size(), lo + chunk);
      partial[w] = count_range(docs.subspan(lo, hi - lo));
    }
  });
  CountMap counts = std::move(partial[0]);
  for (std::size_t w = 1; w < workers; ++w) {
    for (auto& [term, c] : partial[w]) {
      auto& dst = counts[term];
      dst.corpus += c.corpus;
      dst.docs += c.docs;
    }
  }
  if (counts.empty()) throw DataError("empty vocabulary: no document contains any token");

  std::vector<const CountMap::value_type*> ranked;
  ranked.reserve(counts.size());
  for (const auto& entry : counts) ranked.push_back(&entry);
  // counts is already lexicographic, so a stable sort on frequency breaks
  // ties toward the smaller term.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto* a, const auto* b) { return a->second.corpus > b->second.corpus; });
  ranked.resize(std::min(ranked.size(), max_features));
  std::sort(ranked.begin(), ranked.end(), [](const auto* a, const auto* b) { return a->first < b->first; });

  std::vector<std::string> terms;
  std::vector<std::uint32_t> df;
  std::vector<std::uint64_t> cf;
  for (const auto* e : ranked) {
    terms.push_back(e->first);
    df.push_back(e->second.docs);
    cf.push_back(e->second.corpus);
  }
  return Vocabulary(std::move(terms), std::move(df), std::move(cf), docs.size());
}

double smoothed_idf(std::size_t n_docs, std::size_t df) {
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df))) + 1.0;
}

SparseMatrix tfidf(std::span<const TokenizedDocument> docs, const Vocabulary& vocab, int threads) {
  std::vector<double> idf(vocab.size());
  for (std::size_t t = 0; t < vocab.size(); ++t) idf[t] = smoothed_idf(docs.size(), vocab.document_frequency()[t]);

  std::vector<std::vector<std::uint32_t>> row_idx(docs.size());
  std::vector<std::vector<double>> row_val(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::map<std::uint32_t, std::uint64_t> counts;
    for (std::size_t d = begin; d < end; ++d) {
      counts.clear();
      for (const auto& tok : docs[d].tokens) {
        if (auto idx = vocab.find(tok)) ++counts[*idx];
      }
      auto& idx = row_idx[d];
      auto& val = row_val[d];
      double norm2 = 0.0;
      for (const auto& [term, n] : counts) {
        const double w = static_cast<double>(n) * idf[term];
        idx.push_back(term);
        val.push_back(w);
        norm2 += w * w;
      }
      if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : val) v *= inv;
      }
    }
  });

  SparseMatrix out(vocab.size());
  for (std::size_t d = 0; d < docs.size(); ++d) out.push_row(row_idx[d], row_val[d]);
  return out;
}

}  // namespace atlas
