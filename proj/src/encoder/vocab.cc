#include "nestor/encoder/vocab.h"

#include <algorithm>
#include <set>

#include "nestor/error.h"

namespace nestor::encoder {

Vocab::Vocab() { add(kUnknownToken); }

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnknown : it->second;
}

std::vector<std::string> utf8_chars(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t n = 1;
    if (lead >= 0xF0 && lead < 0xF8) {
      n = 4;
    } else if (lead >= 0xE0) {
      n = 3;
    } else if (lead >= 0xC0) {
      n = 2;
    }
    if (lead >= 0xF8 || i + n > text.size()) n = 1;
    for (std::size_t k = 1; k < n; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        n = 1;
        break;
      }
    }
    out.push_back(text.substr(i, n));
    i += n;
  }
  return out;
}

int Vocabularies::type_id(const std::string& type) const {
  auto it = std::find(types.begin(), types.end(), type);
  if (it == types.end()) throw CompatibilityError("unknown entity type '" + type + "'");
  return static_cast<int>(it - types.begin());
}

const std::string& Vocabularies::type_name(int id) const {
  if (id < 0 || id >= num_types()) {
    throw InvariantError("type id " + std::to_string(id) + " outside [0, " +
                         std::to_string(num_types()) + ")");
  }
  return types[id];
}

Vocabularies Vocabularies::build(const std::vector<SentenceExample>& examples) {
  Vocabularies v;
  std::set<std::string> types;
  for (const auto& ex : examples) {
    for (const auto& tok : ex.tokens) {
      v.words.add(tok);
      for (const auto& ch : utf8_chars(tok)) v.chars.add(ch);
    }
    for (const auto& tag : ex.pos) v.pos.add(tag);
    for (const auto& e : ex.entities) types.insert(e.type);
  }
  v.types.assign(types.begin(), types.end());
  return v;
}

nlohmann::json Vocabularies::to_json() const {
  return {{"words", words.tokens()}, {"chars", chars.tokens()}, {"pos", pos.tokens()}, {"types", types}};
}

Vocabularies Vocabularies::from_json(const nlohmann::json& j) {
  Vocabularies v;
  auto fill = [&](Vocab& vocab, const char* key) {
    const auto tokens = j.at(key).get<std::vector<std::string>>();
    if (tokens.empty() || tokens.front() != Vocab::kUnknownToken) {
      throw CompatibilityError(std::string("vocabulary '") + key + "' lacks the unknown entry");
    }
    for (const auto& t : tokens) vocab.add(t);
    if (vocab.size() != static_cast<int>(tokens.size())) {
      throw CompatibilityError(std::string("vocabulary '") + key + "' has duplicate entries");
    }
  };
  try {
    fill(v.words, "words");
    fill(v.chars, "chars");
    fill(v.pos, "pos");
    v.types = j.at("types").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CompatibilityError(std::string("malformed vocabulary: ") + e.what());
  }
  return v;
}

}  // namespace nestor::encoder
