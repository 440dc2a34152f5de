#include "nestor/data/io.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "nestor/error.h"

namespace nestor::data {

using nlohmann::json;

void validate_example(const SentenceExample& ex) {
  const int L = static_cast<int>(ex.tokens.size());
  if (!ex.pos.empty() && static_cast<int>(ex.pos.size()) != L) {
    throw DataError("sentence '" + ex.id + "': " + std::to_string(ex.pos.size()) + " POS tags for " +
                    std::to_string(L) + " tokens");
  }
  std::set<std::tuple<int, int, std::string>> seen;
  for (const auto& e : ex.entities) {
    const std::string span = "(" + std::to_string(e.start) + ", " + std::to_string(e.end) + ", " + e.type + ")";
    if (e.start < 0 || e.end < e.start || e.end >= L) {
      throw DataError("sentence '" + ex.id + "': entity " + span + " outside [0, " + std::to_string(L) + ")");
    }
    if (e.type.empty()) throw DataError("sentence '" + ex.id + "': entity with empty type");
    if (!seen.emplace(e.start, e.end, e.type).second) {
      throw DataError("sentence '" + ex.id + "': duplicate entity " + span);
    }
  }
}

json example_to_json(const SentenceExample& ex) {
  json entities = json::array();
  for (const auto& e : ex.entities) entities.push_back({{"start", e.start}, {"end", e.end}, {"type", e.type}});
  json j = {{"id", ex.id}, {"tokens", ex.tokens}};
  if (!ex.pos.empty()) j["pos"] = ex.pos;
  j["entities"] = entities;
  return j;
}

SentenceExample example_from_json(const json& j, const std::string& where) {
  SentenceExample ex;
  try {
    if (!j.is_object()) throw DataError(where + "expected a JSON object");
    ex.id = j.at("id").get<std::string>();
    ex.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("pos") && !j["pos"].is_null()) ex.pos = j["pos"].get<std::vector<std::string>>();
    if (j.contains("entities")) {
      for (const auto& e : j.at("entities")) {
        ex.entities.push_back({e.at("start").get<int>(), e.at("end").get<int>(), e.at("type").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw DataError(where + "schema error: " + e.what());
  }
  validate_example(ex);
  return ex;
}

std::vector<SentenceExample> parse_jsonl(std::istream& in, const std::string& source) {
  std::vector<SentenceExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    }
    out.push_back(example_from_json(j, where));
  }
  return out;
}

std::vector<SentenceExample> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_jsonl(in, path);
}

void save_jsonl(const std::string& path, const std::vector<SentenceExample>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
}

std::vector<EntitySpan> bio_to_spans(const std::vector<std::string>& tags, BioStats* stats) {
  std::vector<EntitySpan> spans;
  bool open = false;
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const std::string& tag = tags[i];
    const bool begin = tag.rfind("B-", 0) == 0;
    const bool inside = tag.rfind("I-", 0) == 0;
    if (!begin && !inside) {
      if (tag != "O") throw DataError("unrecognized BIO tag '" + tag + "' at position " + std::to_string(i));
      open = false;
      continue;
    }
    const std::string type = tag.substr(2);
    if (type.empty()) throw DataError("BIO tag '" + tag + "' lacks a type");
    if (inside && open && spans.back().type == type) {
      spans.back().end = i;
      continue;
    }
    if (inside && stats != nullptr) ++stats->orphan_inside;
    spans.push_back({i, i, type});
    open = true;
  }
  return spans;
}

std::vector<std::string> spans_to_bio(const std::vector<EntitySpan>& spans, int length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& s : spans) {
    if (s.start < 0 || s.end < s.start || s.end >= length) {
      throw DataError("span (" + std::to_string(s.start) + ", " + std::to_string(s.end) + ") outside length " +
                      std::to_string(length));
    }
    for (int i = s.start; i <= s.end; ++i) {
      if (tags[i] != "O") throw DataError("overlapping spans cannot be written as BIO");
      tags[i] = (i == s.start ? "B-" : "I-") + s.type;
    }
  }
  return tags;
}

std::vector<SentenceExample> load_conll(const std::string& path, BioStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  const std::string stem = std::filesystem::path(path).stem().string();
  std::vector<SentenceExample> out;
  SentenceExample cur;
  std::vector<std::string> tags;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    cur.id = stem + "-" + std::to_string(out.size());
    cur.entities = bio_to_spans(tags, stats);
    validate_example(cur);
    out.push_back(std::move(cur));
    cur = SentenceExample{};
    tags.clear();
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields_in(line);
    std::vector<std::string> fields;
    std::string f;
    while (fields_in >> f) fields.push_back(f);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields[0] == "-DOCSTART-") continue;
    if (fields.size() < 2) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected '<token> ... <tag>'");
    }
    cur.tokens.push_back(fields.front());
    if (fields.size() >= 3) cur.pos.push_back(fields[1]);
    tags.push_back(fields.back());
    if (!cur.pos.empty() && cur.pos.size() != cur.tokens.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": inconsistent column count");
    }
  }
  flush();
  return out;
}

void save_conll(const std::string& path, const std::vector<SentenceExample>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& ex : examples) {
    const auto tags = spans_to_bio(ex.entities, static_cast<int>(ex.tokens.size()));
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      out << ex.tokens[i];
      if (!ex.pos.empty()) out << ' ' << ex.pos[i];
      out << ' ' << tags[i] << '\n';
    }
    out << '\n';
  }
}

std::vector<SentenceExample> load_dataset(const std::string& path, const std::string& format) {
  if (format == "jsonl") return load_jsonl(path);
  if (format == "conll") return load_conll(path);
  throw ConfigError("data.format", "unknown format '" + format + "' (expected jsonl or conll)");
}

}  // namespace nestor::data
