#ifndef NESTOR_ENCODER_VOCAB_H_
#define NESTOR_ENCODER_VOCAB_H_

#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "nestor/data/example.h"

namespace nestor::encoder {

// Dense string -> id map. Id 0 is the unknown entry.
class Vocab {
 public:
  static constexpr int kUnknown = 0;
  static constexpr const char* kUnknownToken = "<unk>";

  Vocab();
  int add(const std::string& token);
  // Unknown id for absent tokens.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Splits a UTF-8 string into code points; invalid bytes become single
// one-byte units.
std::vector<std::string> utf8_chars(const std::string& text);

struct Vocabularies {
  Vocab words;
  Vocab chars;
  Vocab pos;
  // Entity types in id order. None is not listed; its id is types.size().
  std::vector<std::string> types;

  int num_types() const { return static_cast<int>(types.size()); }
  int none_id() const { return num_types(); }
  // Throws CompatibilityError for a type outside the label set.
  int type_id(const std::string& type) const;
  const std::string& type_name(int id) const;

  // Words, characters, tags and sorted entity types of `examples`.
  static Vocabularies build(const std::vector<SentenceExample>& examples);

  nlohmann::json to_json() const;
  static Vocabularies from_json(const nlohmann::json& j);
};

}  // namespace nestor::encoder

#endif  // NESTOR_ENCODER_VOCAB_H_
