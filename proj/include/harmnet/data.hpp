#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "harmnet/error.hpp"
#include "harmnet/io.hpp"

namespace harmnet {

using json = nlohmann::json;

// ---- severity taxonomy ----

// AHRQ harm codes in increasing severity; E..I are harm events.
inline const std::vector<std::string>& severity_codes() {
  static const std::vector<std::string> codes = {"A", "B1", "B2", "C", "D",
                                                 "E", "F", "G", "H", "I"};
  return codes;
}

inline bool is_severity_code(const std::string& code) {
  const auto& c = severity_codes();
  return std::find(c.begin(), c.end(), code) != c.end();
}

inline bool is_harm_code(const std::string& code) {
  return code == "E" || code == "F" || code == "G" || code == "H" ||
         code == "I";
}

// ---- reports ----

struct Report {
  std::string text;
  std::string severity;  // empty = unlabeled
  std::string category;  // empty = uncategorized
  json extras;           // unknown JSONL keys, preserved on round-trip

  bool labeled() const { return !severity.empty(); }

  bool operator==(const Report& other) const {
    return text == other.text && severity == other.severity &&
           category == other.category && extras == other.extras;
  }
};

// ---- label schemas ----

struct LabelSchema {
  std::string name;
  std::map<std::string, int> mapping;  // total over the 10 codes
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }

  int map_code(const std::string& severity) const {
    auto it = mapping.find(severity);
    if (it == mapping.end())
      throw DataError("data: unknown severity code '" + severity + "'");
    return it->second;
  }

  static LabelSchema binary() {
    LabelSchema s;
    s.name = "binary";
    s.class_names = {"no_harm", "harm"};
    for (const auto& c : severity_codes()) s.mapping[c] = is_harm_code(c);
    return s;
  }

  // Default four-way grouping; the code-to-group assignment is a
  // configurable choice, not taxonomy ground truth (see custom()).
  static LabelSchema four_level() {
    LabelSchema s;
    s.name = "four_level";
    s.class_names = {"unsafe", "near_miss", "reached_no_harm", "harm"};
    s.mapping = {{"A", 0}, {"B1", 1}, {"B2", 1}, {"C", 2}, {"D", 2},
                 {"E", 3}, {"F", 3},  {"G", 3},  {"H", 3}, {"I", 3}};
    return s;
  }

  static LabelSchema full() {
    LabelSchema s;
    s.name = "full";
    s.class_names = severity_codes();
    for (std::size_t i = 0; i < s.class_names.size(); ++i)
      s.mapping[s.class_names[i]] = static_cast<int>(i);
    return s;
  }

  static LabelSchema custom(std::string name, std::map<std::string, int> map,
                            std::vector<std::string> class_names) {
    LabelSchema s{std::move(name), std::move(map), std::move(class_names)};
    std::vector<bool> used(s.class_names.size(), false);
    for (const auto& code : severity_codes()) {
      auto it = s.mapping.find(code);
      if (it == s.mapping.end())
        throw ConfigError("data: schema '" + s.name + "' does not map code " +
                          code);
      if (it->second < 0 || it->second >= s.num_classes())
        throw ConfigError("data: schema '" + s.name +
                          "' maps to out-of-range class");
      used[static_cast<std::size_t>(it->second)] = true;
    }
    for (std::size_t i = 0; i < used.size(); ++i)
      if (!used[i])
        throw ConfigError("data: schema '" + s.name + "' class '" +
                          s.class_names[i] + "' is unreachable");
    return s;
  }

  static LabelSchema by_name(const std::string& name) {
    if (name == "binary") return binary();
    if (name == "four_level") return four_level();
    if (name == "full") return full();
    throw ConfigError("data: unknown schema '" + name +
                      "' (expected binary, four_level, or full)");
  }
};

inline int map_label(const std::string& severity, const LabelSchema& schema) {
  return schema.map_code(severity);
}

// ---- tokenization ----

// Whitespace split plus lowercasing; no other normalization.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---- vocabulary ----

constexpr std::int64_t kPadId = 0;
constexpr std::int64_t kUnkId = 1;

struct Vocabulary {
  std::vector<std::string> tokens;  // id -> token; [0]=<pad>, [1]=<unk>
  std::vector<std::int64_t> counts; // id -> training-split frequency
  std::unordered_map<std::string, std::int64_t> ids;
  std::int64_t min_count = 1;

  std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }

  std::int64_t id_of(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? kUnkId : it->second;
  }

  std::string content_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < tokens.size(); ++i)
      h = fnv1a64(tokens[i] + "\t" + std::to_string(i) + "\t" +
                      std::to_string(counts[i]) + "\n",
                  h);
    return hex64(h);
  }
};

// Ids 2.. are assigned by descending frequency, ties broken
// lexicographically, so the map depends only on the training multiset.
inline Vocabulary build_vocab(const std::vector<Report>& train_reports,
                              std::int64_t min_count = 1) {
  if (train_reports.empty())
    throw DataError("data: cannot build vocabulary from an empty corpus");
  std::map<std::string, std::int64_t> freq;
  for (const auto& r : train_reports)
    for (auto& tok : tokenize(r.text)) ++freq[tok];
  std::vector<std::pair<std::string, std::int64_t>> entries(freq.begin(),
                                                            freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  v.min_count = min_count;
  v.tokens = {"<pad>", "<unk>"};
  v.counts = {0, 0};
  for (const auto& [tok, n] : entries) {
    if (n < min_count) {
      v.counts[static_cast<std::size_t>(kUnkId)] += n;
      continue;
    }
    v.ids[tok] = v.size();
    v.tokens.push_back(tok);
    v.counts.push_back(n);
  }
  return v;
}

inline std::string vocab_to_json(const Vocabulary& v) {
  json entries = json::array();
  for (std::size_t i = 0; i < v.tokens.size(); ++i)
    entries.push_back({v.tokens[i], i, v.counts[i]});
  json j = {{"format", "harmnet-vocab"},
            {"version", 1},
            {"min_count", v.min_count},
            {"hash", v.content_hash()},
            {"entries", entries}};
  return j.dump(2) + "\n";
}

inline Vocabulary vocab_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("data: bad vocabulary file: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "harmnet-vocab")
    throw DataError("data: not a vocabulary file");
  Vocabulary v;
  v.min_count = j.value("min_count", 1);
  for (const auto& e : j.at("entries")) {
    const std::string tok = e.at(0).get<std::string>();
    const std::int64_t id = e.at(1).get<std::int64_t>();
    const std::int64_t count = e.at(2).get<std::int64_t>();
    if (id != v.size())
      throw DataError("data: vocabulary ids not contiguous at id " +
                      std::to_string(id));
    v.tokens.push_back(tok);
    v.counts.push_back(count);
    if (id >= 2) v.ids[tok] = id;
  }
  if (v.size() < 2 || v.tokens[0] != "<pad>" || v.tokens[1] != "<unk>")
    throw DataError("data: vocabulary missing <pad>/<unk> rows");
  return v;
}

// ---- encoding ----

struct EncodedReport {
  std::vector<std::int64_t> ids;   // exactly n_max, zero-padded
  std::vector<std::uint8_t> mask;  // 1 at real-token positions
  int label = -1;
};

// Head-crop to n_max tokens, zero-pad on the right.
inline EncodedReport encode(const Report& report, const Vocabulary& vocab,
                            const LabelSchema& schema, std::int64_t n_max) {
  if (!report.labeled())
    throw DataError("data: cannot encode unlabeled report under schema " +
                    schema.name);
  EncodedReport enc;
  enc.label = schema.map_code(report.severity);
  enc.ids.assign(static_cast<std::size_t>(n_max), kPadId);
  enc.mask.assign(static_cast<std::size_t>(n_max), 0);
  const auto toks = tokenize(report.text);
  const std::size_t keep =
      std::min(toks.size(), static_cast<std::size_t>(n_max));
  for (std::size_t t = 0; t < keep; ++t) {
    enc.ids[t] = vocab.id_of(toks[t]);
    enc.mask[t] = 1;
  }
  return enc;
}

// ---- JSONL dataset I/O ----

inline Report report_from_json_line(const std::string& line,
                                    std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("data: malformed JSON at line " + std::to_string(line_no) +
                    ": " + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
    throw DataError("data: missing text field at line " +
                    std::to_string(line_no));
  Report r;
  r.text = j["text"].get<std::string>();
  if (j.contains("severity")) {
    if (!j["severity"].is_string() ||
        !is_severity_code(j["severity"].get<std::string>()))
      throw DataError("data: invalid severity at line " +
                      std::to_string(line_no));
    r.severity = j["severity"].get<std::string>();
  }
  if (j.contains("category")) {
    if (!j["category"].is_string())
      throw DataError("data: invalid category at line " +
                      std::to_string(line_no));
    r.category = j["category"].get<std::string>();
  }
  for (auto& [key, value] : j.items())
    if (key != "text" && key != "severity" && key != "category")
      r.extras[key] = value;
  return r;
}

inline json report_to_json(const Report& r) {
  json j;
  if (r.extras.is_object()) j = r.extras;
  j["text"] = r.text;
  if (!r.severity.empty()) j["severity"] = r.severity;
  if (!r.category.empty()) j["category"] = r.category;
  return j;
}

inline std::vector<Report> parse_jsonl(const std::string& content) {
  std::vector<Report> out;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(report_from_json_line(line, line_no));
  }
  return out;
}

inline std::vector<Report> load_jsonl(const std::string& path) {
  return parse_jsonl(read_file(path));
}

inline std::string to_jsonl(const std::vector<Report>& reports) {
  std::string out;
  for (const auto& r : reports) {
    out += report_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void save_jsonl(const std::vector<Report>& reports,
                       const std::string& path) {
  write_file_atomic(path, to_jsonl(reports));
}

}  // namespace harmnet
