#ifndef NESTOR_DATA_SYNTH_H_
#define NESTOR_DATA_SYNTH_H_

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "nestor/data/example.h"

namespace nestor::data {

struct CorpusStats {
  int sentences = 0;
  int tokens = 0;
  int entities = 0;
  // Entities that strictly contain another entity of the same sentence.
  int nesting = 0;
  double nesting_rate() const { return entities == 0 ? 0.0 : static_cast<double>(nesting) / entities; }
  nlohmann::json to_json() const;
};

CorpusStats corpus_stats(const std::vector<SentenceExample>& examples);

struct SynthCorpus {
  std::vector<SentenceExample> train;
  std::vector<SentenceExample> dev;
  CorpusStats stats;  // over train and dev together
};

// Deterministic corpus whose entities are decidable from surface tokens.
// Entity: 0-2 shared modifiers followed by a head word of its type. A
// nested item is an inner entity followed by a wrapper word naming the
// outer type; items are separated by filler words. Items are nested with
// probability nest_prob / (1 - nest_prob), which puts the expected share of
// containing entities at nest_prob. The first three quarters of the
// sentences form the train split, the rest the dev split.
SynthCorpus synth_nested_corpus(std::uint64_t seed, int n_sentences, int max_len, int n_types,
                                double nest_prob);

}  // namespace nestor::data

#endif  // NESTOR_DATA_SYNTH_H_
