#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atlas {

struct DocumentRecord {
  std::string doc_id;
  std::string title;
  std::string abstract;
  std::string body_text;
  std::vector<std::string> authors;
  std::string journal;
  std::string url;
  std::string source_file;

  friend bool operator==(const DocumentRecord&, const DocumentRecord&) = default;
};

struct CorpusStats {
  std::size_t n_raw = 0;
  std::size_t n_after_dedup = 0;
  std::size_t n_after_abstract_filter = 0;
  std::size_t n_after_language_filter = 0;

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

enum class InputFormat { kJsonl, kJsonArray, kCsv };

InputFormat parse_input_format(std::string_view name);
std::string_view to_string(InputFormat format);

/// A skipped or malformed input record. `line` is the 1-based line of the
/// record in JSONL and CSV files, and the 1-based element position in a
/// JSON array.
struct LoadWarning {
  std::string path;
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<DocumentRecord> records;
  std::vector<LoadWarning> warnings;
};

/// Reads records from each file in order. Records without a doc_id or a
/// body_text field are skipped with a warning; an unreadable file throws
/// DataError naming the path.
///
/// `authors` may be a JSON array of strings or a ';'-separated string (the
/// only form available in CSV).
LoadResult load_corpus(std::span<const std::filesystem::path> paths, InputFormat format);

/// Keeps the first record of every duplicate group. Two records are
/// duplicates when their doc_ids match or when their lowercased,
/// whitespace-collapsed title + abstract match (records whose title and
/// abstract are both blank never match on content).
std::vector<DocumentRecord> deduplicate(std::span<const DocumentRecord> records);

/// Drops records whose body text is empty or whitespace.
std::vector<DocumentRecord> filter_abstract_only(std::span<const DocumentRecord> records);

struct LanguageGuess {
  std::string code;   // "en" or "other"
  double confidence;  // English function-word hit rate
};

inline constexpr double kDefaultLanguageThreshold = 0.20;
inline constexpr std::size_t kLanguageSampleTokens = 2000;

/// Fraction of the first 2,000 tokens that are English function words;
/// "en" when the rate reaches `threshold`. Throws std::invalid_argument on
/// empty text.
LanguageGuess detect_language(std::string_view text, double threshold = kDefaultLanguageThreshold);

/// Keeps records whose body text is detected as English.
std::vector<DocumentRecord> filter_language(std::span<const DocumentRecord> records,
                                            double threshold = kDefaultLanguageThreshold);

struct CleanCorpus {
  std::vector<DocumentRecord> records;
  CorpusStats stats;
};

/// deduplicate → filter_abstract_only → filter_language, with counts.
CleanCorpus clean_corpus(std::span<const DocumentRecord> raw,
                         double language_threshold = kDefaultLanguageThreshold);

}  // namespace atlas
