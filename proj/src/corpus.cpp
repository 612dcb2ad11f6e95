#include "atlas/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "atlas/error.hpp"
#include "atlas/text.hpp"
#include "json.hpp"

namespace atlas {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read input file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw DataError("error while reading input file: " + path.string());
  std::string text = std::move(buf).str();
  if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);
  return text;
}

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

std::vector<std::string> split_authors(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(';', start);
    if (end == std::string_view::npos) end = s.size();
    auto piece = s.substr(start, end - start);
    const auto first = piece.find_first_not_of(" \t");
    if (first != std::string_view::npos) {
      const auto last = piece.find_last_not_of(" \t");
      out.emplace_back(piece.substr(first, last - first + 1));
    }
    start = end + 1;
  }
  return out;
}

// Field accessors return nullopt for a missing or null key and throw
// std::invalid_argument for a present value of the wrong type.
std::optional<std::string> string_field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return it->dump();
  throw std::invalid_argument(std::string("field '") + key + "' is not a string");
}

std::vector<std::string> authors_field(const json& obj) {
  const auto it = obj.find("authors");
  if (it == obj.end() || it->is_null()) return {};
  if (it->is_string()) return split_authors(it->get_ref<const std::string&>());
  if (it->is_array()) {
    std::vector<std::string> out;
    for (const auto& a : *it) {
      if (!a.is_string()) throw std::invalid_argument("field 'authors' contains a non-string entry");
      out.push_back(a.get<std::string>());
    }
    return out;
  }
  throw std::invalid_argument("field 'authors' must be a string or an array of strings");
}

// Converts one JSON object; returns nullopt after recording a warning.
std::optional<DocumentRecord> record_from_json(const json& obj, const std::string& path, std::size_t line,
                                               std::vector<LoadWarning>& warnings) {
  if (!obj.is_object()) {
    warnings.push_back({path, line, "record is not a JSON object"});
    return std::nullopt;
  }
  try {
    DocumentRecord rec;
    auto id = string_field(obj, "doc_id");
    if (!id || is_blank(*id)) {
      warnings.push_back({path, line, "missing doc_id"});
      return std::nullopt;
    }
    auto body = string_field(obj, "body_text");
    if (!body) {
      warnings.push_back({path, line, "missing body_text"});
      return std::nullopt;
    }
    rec.doc_id = std::move(*id);
    rec.body_text = std::move(*body);
    rec.title = string_field(obj, "title").value_or("");
    rec.abstract = string_field(obj, "abstract").value_or("");
    rec.journal = string_field(obj, "journal").value_or("");
    rec.url = string_field(obj, "url").value_or("");
    rec.authors = authors_field(obj);
    rec.source_file = path;
    return rec;
  } catch (const std::invalid_argument& e) {
    warnings.push_back({path, line, e.what()});
    return std::nullopt;
  }
}

void load_jsonl(const std::string& text, const std::string& path, LoadResult& out) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + start, end - start);
    ++line_no;
    start = end + 1;
    if (is_blank(line)) continue;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) {
      out.warnings.push_back({path, line_no, "malformed JSON"});
      continue;
    }
    if (auto rec = record_from_json(obj, path, line_no, out.warnings)) out.records.push_back(std::move(*rec));
  }
}

void load_json_array(const std::string& text, const std::string& path, LoadResult& out) {
  if (is_blank(text)) return;
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw DataError("input file is not a JSON array: " + path);
  }
  std::size_t position = 0;
  for (const auto& element : doc) {
    ++position;
    if (auto rec = record_from_json(element, path, position, out.warnings)) out.records.push_back(std::move(*rec));
  }
}

// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
// newlines. Each row carries the line on which it starts.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
  bool unterminated = false;
};

std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool in_quotes = false;
    bool row_done = false;
    while (i < text.size() && !row_done) {
      const char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            in_quotes = false;
            ++i;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        continue;
      }
      switch (c) {
        case '"':
          in_quotes = true;
          ++i;
          break;
        case ',':
          row.fields.push_back(std::move(field));
          field.clear();
          ++i;
          break;
        case '\r':
          ++i;
          break;
        case '\n':
          ++line;
          ++i;
          row_done = true;
          break;
        default:
          field.push_back(c);
          ++i;
      }
    }
    row.unterminated = in_quotes;
    row.fields.push_back(std::move(field));
    const bool blank = row.fields.size() == 1 && is_blank(row.fields[0]);
    if (!blank) rows.push_back(std::move(row));
  }
  return rows;
}

void load_csv(const std::string& text, const std::string& path, LoadResult& out) {
  auto rows = parse_csv(text);
  if (rows.empty()) return;
  const auto header = rows.front().fields;
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = header[c];
    const auto first = name.find_first_not_of(" \t");
    const auto last = name.find_last_not_of(" \t");
    column.emplace(first == std::string::npos ? std::string() : name.substr(first, last - first + 1), c);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.unterminated) {
      out.warnings.push_back({path, row.line, "unterminated quoted field"});
      continue;
    }
    if (row.fields.size() != header.size()) {
      out.warnings.push_back({path, row.line,
                              "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(row.fields.size())});
      continue;
    }
    json obj = json::object();
    for (const auto& [name, c] : column) {
      if (!name.empty()) obj[name] = row.fields[c];
    }
    if (auto rec = record_from_json(obj, path, row.line, out.warnings)) out.records.push_back(std::move(*rec));
  }
}

std::string normalized_content_key(const DocumentRecord& r) {
  const std::string folded = fold_case(r.title + " " + r.abstract);
  std::string key;
  bool pending_space = false;
  for (char c : folded) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !key.empty();
      continue;
    }
    if (pending_space) key.push_back(' ');
    pending_space = false;
    key.push_back(c);
  }
  return key;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

InputFormat parse_input_format(std::string_view name) {
  if (name == "jsonl") return InputFormat::kJsonl;
  if (name == "json-array" || name == "json") return InputFormat::kJsonArray;
  if (name == "csv") return InputFormat::kCsv;
  throw ConfigError("unknown input format '" + std::string(name) + "' (expected jsonl, json-array or csv)");
}

std::string_view to_string(InputFormat format) {
  switch (format) {
    case InputFormat::kJsonl:
      return "jsonl";
    case InputFormat::kJsonArray:
      return "json-array";
    case InputFormat::kCsv:
      return "csv";
  }
  return "jsonl";
}

LoadResult load_corpus(std::span<const std::filesystem::path> paths, InputFormat format) {
  LoadResult out;
  for (const auto& p : paths) {
    const std::string text = read_file(p);
    const std::string name = p.string();
    switch (format) {
      case InputFormat::kJsonl:
        load_jsonl(text, name, out);
        break;
      case InputFormat::kJsonArray:
        load_json_array(text, name, out);
        break;
      case InputFormat::kCsv:
        load_csv(text, name, out);
        break;
    }
  }
  return out;
}

std::vector<DocumentRecord> deduplicate(std::span<const DocumentRecord> records) {
  // Duplicate groups are the connected components of "same id or same
  // content"; the lowest index of each component survives.
  std::vector<std::size_t> parent(records.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  };

  std::unordered_map<std::string, std::size_t> by_id;
  std::unordered_map<std::string, std::size_t> by_content;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto [it, inserted] = by_id.try_emplace(records[i].doc_id, i); !inserted) unite(it->second, i);
    std::string key = normalized_content_key(records[i]);
    if (key.empty()) continue;
    if (auto [it, inserted] = by_content.try_emplace(std::move(key), i); !inserted) unite(it->second, i);
  }

  std::vector<DocumentRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (find_root(parent, i) == i) out.push_back(records[i]);
  }
  return out;
}

std::vector<DocumentRecord> filter_abstract_only(std::span<const DocumentRecord> records) {
  std::vector<DocumentRecord> out;
  for (const auto& r : records) {
    if (!is_blank(r.body_text)) out.push_back(r);
  }
  return out;
}

LanguageGuess detect_language(std::string_view text, double threshold) {
  if (text.empty()) throw std::invalid_argument("detect_language: empty text is undecidable");
  const auto tokens = tokenize(text);
  const std::size_t sample = std::min(tokens.size(), kLanguageSampleTokens);
  if (sample == 0) return {"other", 0.0};
  const auto words = english_function_words();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sample; ++i) {
    if (std::binary_search(words.begin(), words.end(), std::string_view(tokens[i]))) ++hits;
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(sample);
  return {rate >= threshold ? "en" : "other", rate};
}

std::vector<DocumentRecord> filter_language(std::span<const DocumentRecord> records, double threshold) {
  std::vector<DocumentRecord> out;
  for (const auto& r : records) {
    if (r.body_text.empty()) continue;
    if (detect_language(r.body_text, threshold).code == "en") out.push_back(r);
  }
  return out;
}

CleanCorpus clean_corpus(std::span<const DocumentRecord> raw, double language_threshold) {
  CleanCorpus out;
  out.stats.n_raw = raw.size();
  auto deduped = deduplicate(raw);
  out.stats.n_after_dedup = deduped.size();
  auto with_body = filter_abstract_only(deduped);
  out.stats.n_after_abstract_filter = with_body.size();
  out.records = filter_language(with_body, language_threshold);
  out.stats.n_after_language_filter = out.records.size();
  return out;
}

}  // namespace atlas
