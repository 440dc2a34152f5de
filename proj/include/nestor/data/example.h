#ifndef NESTOR_DATA_EXAMPLE_H_
#define NESTOR_DATA_EXAMPLE_H_

#include <compare>
#include <string>
#include <vector>

namespace nestor {

// Token-indexed entity with an inclusive end.
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string type;

  int length() const { return end - start + 1; }
  auto operator<=>(const EntitySpan&) const = default;
};

struct SentenceExample {
  std::string id;
  std::vector<std::string> tokens;
  // Empty or one tag per token.
  std::vector<std::string> pos;
  std::vector<EntitySpan> entities;

  bool operator==(const SentenceExample&) const = default;
};

}  // namespace nestor

#endif  // NESTOR_DATA_EXAMPLE_H_
