#include "atlas/text.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>

#include "atlas/corpus.hpp"
#include "atlas/error.hpp"

namespace atlas {
namespace {

// Sorted. Entries with apostrophes are omitted because the tokenizer splits
// on them.
constexpr std::array<std::string_view, 165> kEnglishFunctionWords = {
    "about",   "above",      "after",   "again",    "against",  "ain",      "all",      "also",
    "although", "am",        "among",   "an",       "and",      "any",      "are",      "aren",
    "as",      "at",         "be",      "because",  "been",     "before",   "being",    "below",
    "between", "both",       "but",     "by",       "can",      "could",    "couldn",   "did",
    "didn",    "do",         "does",    "doesn",    "doing",    "don",      "down",     "during",
    "each",    "either",     "every",   "few",      "for",      "from",     "further",  "had",
    "hadn",    "has",        "hasn",    "have",     "haven",    "having",   "he",       "hence",
    "her",     "here",       "hers",    "herself",  "him",      "himself",  "his",      "how",
    "however", "if",         "in",      "into",     "is",       "isn",      "it",       "its",
    "itself",  "just",       "ll",      "ma",       "may",      "me",       "might",    "mightn",
    "more",    "most",       "must",    "mustn",    "my",       "myself",   "needn",    "neither",
    "no",      "nor",        "not",     "now",      "of",       "off",      "on",       "once",
    "only",    "or",         "other",   "our",      "ours",     "ourselves", "out",     "over",
    "own",     "re",         "same",    "shall",    "shan",     "she",      "should",   "shouldn",
    "so",      "some",       "such",    "than",     "that",     "the",      "their",    "theirs",
    "them",    "themselves", "then",    "there",    "these",    "they",     "this",     "those",
    "though",  "through",    "thus",    "to",       "too",      "under",    "until",    "up",
    "upon",    "us",         "ve",      "very",     "was",      "wasn",     "we",       "were",
    "weren",   "what",       "when",    "where",    "whether",  "which",    "while",    "who",
    "whom",    "why",        "will",    "with",     "within",   "without",  "won",      "would",
    "wouldn",  "yet",        "you",     "your",     "yours",
};

constexpr std::array<std::string_view, 8> kDefaultDomainStopwords = {
    "al", "copyright", "doi", "et", "fig", "license", "medrxiv", "preprint",
};

// Decodes one code point starting at text[pos]; advances pos. Invalid
// sequences decode to U+FFFD consuming one byte.
char32_t decode_utf8(std::string_view text, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(text[pos]);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return 0xFFFD;
  }
  if (pos + len > text.size()) {
    ++pos;
    return 0xFFFD;
  }
  for (int i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(text[pos + i]);
    if ((b & 0xC0) != 0x80) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  pos += len;
  return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

enum class CharClass { kSeparator, kDigit, kLetter };

CharClass classify(char32_t cp) {
  if (cp < 0x80) {
    if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return CharClass::kLetter;
    if (cp >= '0' && cp <= '9') return CharClass::kDigit;
    return CharClass::kSeparator;
  }
  if (cp < 0xA0) return CharClass::kSeparator;  // C1 controls
  if (cp <= 0xBF) {
    return (cp == 0xAA || cp == 0xB5 || cp == 0xBA) ? CharClass::kLetter : CharClass::kSeparator;
  }
  if (cp == 0xD7 || cp == 0xF7) return CharClass::kSeparator;
  if (cp >= 0x2000 && cp <= 0x20CF) return CharClass::kSeparator;  // punctuation, sub/superscripts, currency
  if (cp >= 0x2190 && cp <= 0x2BFF) return CharClass::kSeparator;  // arrows, math, box drawing, symbols
  if (cp >= 0x3000 && cp <= 0x303F) return CharClass::kSeparator;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return CharClass::kSeparator;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return CharClass::kSeparator;
  if (cp >= 0xFF1A && cp <= 0xFF20) return CharClass::kSeparator;
  if (cp == 0xFEFF || cp == 0xFFFD || cp == 0x1680) return CharClass::kSeparator;
  return CharClass::kLetter;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp < 0x80) return cp;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return U'i';
    if (cp == 0x178) return 0xFF;
    const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
    if (odd_upper) return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t length = 0;
  bool has_letter = false;

  auto flush = [&] {
    if (length >= 2 && has_letter) tokens.push_back(current);
    current.clear();
    length = 0;
    has_letter = false;
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = decode_utf8(text, pos);
    const CharClass cls = classify(cp);
    if (cls == CharClass::kSeparator) {
      flush();
      continue;
    }
    has_letter = has_letter || cls == CharClass::kLetter;
    encode_utf8(to_lower(cp), current);
    ++length;
  }
  flush();
  return tokens;
}

std::string fold_case(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = decode_utf8(text, pos);
    if (cp == 0xFFFD) {
      out.append(text.substr(start, pos - start));
    } else {
      encode_utf8(to_lower(cp), out);
    }
  }
  return out;
}

std::span<const std::string_view> english_function_words() { return kEnglishFunctionWords; }

std::span<const std::string_view> default_domain_stopwords() { return kDefaultDomainStopwords; }

Stoplist Stoplist::english_only() {
  Stoplist s;
  for (auto w : kEnglishFunctionWords) s.base_.emplace(w);
  return s;
}

Stoplist Stoplist::standard() {
  Stoplist s = english_only();
  for (auto w : kDefaultDomainStopwords) s.add_domain_word(w);
  return s;
}

void Stoplist::add_domain_word(std::string_view word) {
  std::string lowered = fold_case(word);
  if (lowered.empty() || base_.contains(lowered)) return;
  domain_.insert(std::move(lowered));
}

void Stoplist::load_domain_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read stoplist file: " + path.string());
  domain_.clear();
  std::string line;
  while (std::getline(in, line)) {
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (!view.empty()) add_domain_word(view);
  }
}

bool Stoplist::contains(std::string_view token) const {
  return base_.find(token) != base_.end() || domain_.find(token) != domain_.end();
}

std::vector<std::string> remove_stopwords(std::span<const std::string> tokens, const Stoplist& stoplist) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (!stoplist.contains(t)) out.push_back(t);
  }
  return out;
}

TokenizedDocument normalize_document(const DocumentRecord& record, const Stoplist& stoplist) {
  const auto tokens = tokenize(record.body_text);
  return {record.doc_id, remove_stopwords(tokens, stoplist)};
}

}  // namespace atlas
