#include "nestor/data/synth.h"

#include <algorithm>
#include <string>

#include "nestor/error.h"
#include "nestor/numerics/rng.h"

namespace nestor::data {

namespace {

constexpr int kHeadsPerType = 4;
constexpr int kWrappersPerType = 2;
constexpr int kModifiers = 6;
constexpr int kFillers = 12;
constexpr int kMaxModifiers = 2;

std::string type_name(int t) { return "T" + std::to_string(t); }

}  // namespace

nlohmann::json CorpusStats::to_json() const {
  return {{"sentences", sentences},
          {"tokens", tokens},
          {"entities", entities},
          {"nesting", nesting},
          {"nesting_rate", nesting_rate()}};
}

CorpusStats corpus_stats(const std::vector<SentenceExample>& examples) {
  CorpusStats s;
  for (const auto& ex : examples) {
    ++s.sentences;
    s.tokens += static_cast<int>(ex.tokens.size());
    s.entities += static_cast<int>(ex.entities.size());
    for (const auto& outer : ex.entities) {
      for (const auto& inner : ex.entities) {
        if (&outer != &inner && outer.start <= inner.start && inner.end <= outer.end &&
            outer.length() > inner.length()) {
          ++s.nesting;
          break;
        }
      }
    }
  }
  return s;
}

SynthCorpus synth_nested_corpus(std::uint64_t seed, int n_sentences, int max_len, int n_types,
                                double nest_prob) {
  if (n_sentences < 1) throw ConfigError("n_sentences", "must be positive");
  if (max_len < 5) throw ConfigError("max_len", "must be at least 5");
  if (n_types < 1) throw ConfigError("n_types", "must be positive");
  if (!(nest_prob >= 0.0 && nest_prob <= 0.5)) throw ConfigError("nest_prob", "must lie in [0, 0.5]");
  const double item_nest_prob = nest_prob / (1.0 - nest_prob);

  numerics::Rng rng(seed);
  auto pick = [&](int n) { return static_cast<int>(rng.below(static_cast<std::uint64_t>(n))); };
  auto filler = [&] { return "fill" + std::to_string(pick(kFillers)); };

  std::vector<SentenceExample> all;
  for (int n = 0; n < n_sentences; ++n) {
    SentenceExample ex;
    ex.id = "synth-" + std::to_string(seed) + "-" + std::to_string(n);
    const int target = 5 + pick(max_len - 4);
    const int lead = pick(2);
    for (int i = 0; i < lead; ++i) ex.tokens.push_back(filler());
    while (true) {
      const int inner_type = pick(n_types);
      std::vector<std::string> item;
      const int mods = pick(kMaxModifiers + 1);
      for (int m = 0; m < mods; ++m) item.push_back("mod" + std::to_string(pick(kModifiers)));
      item.push_back("head" + std::to_string(inner_type) + "_" + std::to_string(pick(kHeadsPerType)));
      int outer_type = -1;
      if (rng.bernoulli(item_nest_prob)) {
        outer_type = pick(n_types);
        item.push_back("wrap" + std::to_string(outer_type) + "_" + std::to_string(pick(kWrappersPerType)));
      }
      const int sep = ex.tokens.empty() ? 0 : 1;
      if (static_cast<int>(ex.tokens.size() + item.size()) + sep > target) break;
      if (sep) ex.tokens.push_back(filler());
      const int start = static_cast<int>(ex.tokens.size());
      ex.tokens.insert(ex.tokens.end(), item.begin(), item.end());
      const int head = start + mods;
      ex.entities.push_back({start, head, type_name(inner_type)});
      if (outer_type >= 0) ex.entities.push_back({start, head + 1, type_name(outer_type)});
    }
    while (static_cast<int>(ex.tokens.size()) < target) ex.tokens.push_back(filler());
    all.push_back(std::move(ex));
  }

  SynthCorpus corpus;
  const int n_train = std::max(1, (3 * n_sentences) / 4);
  corpus.train.assign(all.begin(), all.begin() + n_train);
  corpus.dev.assign(all.begin() + n_train, all.end());
  corpus.stats = corpus_stats(all);
  return corpus;
}

}  // namespace nestor::data
