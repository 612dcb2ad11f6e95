#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atlas {

struct DocumentRecord;

struct TokenizedDocument {
  std::string doc_id;
  std::vector<std::string> tokens;
};

/// Splits UTF-8 text on whitespace and punctuation, lowercases, and keeps
/// tokens of at least two code points that contain a letter. Digits count
/// as word characters but not as letters, so pure numbers are dropped.
///
/// Case folding covers ASCII, Latin-1, Latin Extended-A, Greek and
/// Cyrillic; other scripts pass through unchanged.
std::vector<std::string> tokenize(std::string_view text);

/// Lowercases with the same case folding as tokenize(); bytes that are not
/// valid UTF-8 are copied through.
std::string fold_case(std::string_view text);

/// Built-in English function words, lowercase and sorted.
std::span<const std::string_view> english_function_words();

/// Domain stopwords shipped by default; the file form lives in
/// data/domain_stopwords.txt.
std::span<const std::string_view> default_domain_stopwords();

class Stoplist {
 public:
  using WordSet = std::set<std::string, std::less<>>;

  /// Base English words plus the default domain words.
  static Stoplist standard();
  /// Base English words only.
  static Stoplist english_only();

  /// Adds domain words. Entries are lowercased; words already in the base
  /// set are not duplicated into the domain set.
  void add_domain_word(std::string_view word);

  /// Replaces the domain words with the contents of `path`: one word per
  /// line, '#' starts a comment. Throws DataError if unreadable.
  void load_domain_file(const std::filesystem::path& path);

  bool contains(std::string_view token) const;

  const WordSet& base_words() const { return base_; }
  const WordSet& domain_words() const { return domain_; }

 private:
  WordSet base_;
  WordSet domain_;
};

/// Tokens not in the stoplist, in their original order.
std::vector<std::string> remove_stopwords(std::span<const std::string> tokens, const Stoplist& stoplist);

/// tokenize + remove_stopwords over a record's body text.
TokenizedDocument normalize_document(const DocumentRecord& record, const Stoplist& stoplist);

}  // namespace atlas
