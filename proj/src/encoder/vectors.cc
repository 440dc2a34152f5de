#include "nestor/encoder/vectors.h"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "nestor/error.h"

namespace nestor::encoder {

namespace {

std::vector<std::string> split_spaces(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (in >> field) out.push_back(field);
  return out;
}

double parse_real(const std::string& s, const std::string& path, std::size_t line) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(path + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

long parse_count(const std::string& s, const std::string& path) {
  long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || v < 0) {
    throw DataError(path + ":1: header must be '<count> <dim>'");
  }
  return v;
}

}  // namespace

StaticVectors load_word2vec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vectors '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ":1: missing header");
  const auto header = split_spaces(line);
  if (header.size() != 2) throw DataError(path + ":1: header must be '<count> <dim>'");
  const long count = parse_count(header[0], path);
  const long dim = parse_count(header[1], path);

  StaticVectors v;
  v.vectors.resize(count, dim);
  std::size_t line_no = 1;
  long row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_spaces(line);
    if (static_cast<long>(fields.size()) != dim + 1) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                      " fields, found " + std::to_string(fields.size()));
    }
    if (row >= count) {
      throw DataError(path + ":" + std::to_string(line_no) + ": more rows than the header count " +
                      std::to_string(count));
    }
    v.words.push_back(fields[0]);
    for (long c = 0; c < dim; ++c) v.vectors(row, c) = parse_real(fields[c + 1], path, line_no);
    ++row;
  }
  if (row != count) {
    throw DataError(path + ": header announces " + std::to_string(count) + " rows, found " +
                    std::to_string(row));
  }
  return v;
}

void save_word2vec(const std::string& path, const StaticVectors& v) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write word vectors '" + path + "'");
  out << v.words.size() << ' ' << v.dim() << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < v.words.size(); ++i) {
    out << v.words[i];
    for (Index c = 0; c < v.dim(); ++c) out << ' ' << v.vectors(static_cast<Index>(i), c);
    out << '\n';
  }
}

ContextualStore ContextualStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open contextual vectors '" + path + "'");
  ContextualStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("vectors") ||
        !j["vectors"].is_array()) {
      throw DataError(where + "expected {\"id\": string, \"vectors\": [[...], ...]}");
    }
    const auto& rows = j["vectors"];
    const Index dim = rows.empty() ? 0 : static_cast<Index>(rows[0].size());
    Matrix m(static_cast<Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].is_array() || static_cast<Index>(rows[r].size()) != dim) {
        throw DataError(where + "ragged vector rows");
      }
      for (Index c = 0; c < dim; ++c) {
        const auto& x = rows[r][static_cast<std::size_t>(c)];
        if (!x.is_number()) throw DataError(where + "non-numeric vector entry");
        m(static_cast<Index>(r), c) = x.get<double>();
      }
    }
    try {
      store.insert(j["id"].get<std::string>(), std::move(m));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return store;
}

void ContextualStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write contextual vectors '" + path + "'");
  for (const auto& [id, m] : entries_) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
      rows.push_back(row);
    }
    out << nlohmann::json{{"id", id}, {"vectors", rows}}.dump() << '\n';
  }
}

void ContextualStore::insert(const std::string& id, Matrix vectors) {
  if (entries_.count(id)) throw DataError("duplicate contextual entry '" + id + "'");
  if (vectors.rows() > 0) {
    if (dim_ == 0) dim_ = vectors.cols();
    if (vectors.cols() != dim_) {
      throw DataError("contextual entry '" + id + "' has width " + std::to_string(vectors.cols()) +
                      ", expected " + std::to_string(dim_));
    }
  }
  entries_.emplace(id, std::move(vectors));
}

const Matrix* ContextualStore::find(const std::string& id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

}  // namespace nestor::encoder
