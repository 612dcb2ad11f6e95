#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atlas/matrix.hpp"
#include "atlas/text.hpp"

namespace atlas {

inline constexpr std::size_t kDefaultMaxFeatures = 4096;

/// Capped term dictionary. Terms are stored in index order, which is
/// lexicographic.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> document_frequency,
             std::vector<std::uint64_t> corpus_frequency, std::size_t n_docs);

  std::size_t size() const { return terms_.size(); }
  std::size_t n_docs() const { return n_docs_; }

  std::optional<std::uint32_t> find(std::string_view term) const;

  const std::vector<std::string>& terms() const { return terms_; }
  const std::string& term(std::size_t index) const { return terms_[index]; }
  const std::vector<std::uint32_t>& document_frequency() const { return document_frequency_; }
  const std::vector<std::uint64_t>& corpus_frequency() const { return corpus_frequency_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.terms_ == b.terms_ && a.document_frequency_ == b.document_frequency_ &&
           a.corpus_frequency_ == b.corpus_frequency_ && a.n_docs_ == b.n_docs_;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint32_t> document_frequency_;
  std::vector<std::uint64_t> corpus_frequency_;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Keeps the `max_features` terms with the highest corpus frequency (ties to
/// the lexicographically smaller term) and indexes them lexicographically.
/// Throws DataError when no document has any token.
Vocabulary build_vocabulary(std::span<const TokenizedDocument> docs, std::size_t max_features = kDefaultMaxFeatures,
                            int threads = 1);

/// Smoothed inverse document frequency ln((1 + n) / (1 + df)) + 1.
double smoothed_idf(std::size_t n_docs, std::size_t df);

/// Raw-count tf times smoothed idf, each row scaled to unit l2 norm. Rows
/// with no in-vocabulary token stay empty.
SparseMatrix tfidf(std::span<const TokenizedDocument> docs, const Vocabulary& vocab, int threads = 1);

}  // namespace atlas
