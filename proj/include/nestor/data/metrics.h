#ifndef NESTOR_DATA_METRICS_H_
#define NESTOR_DATA_METRICS_H_

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "nestor/data/example.h"

namespace nestor::data {

struct Counts {
  long gold = 0;
  long predicted = 0;
  long correct = 0;

  // 0 when the denominator is 0.
  double precision() const;
  double recall() const;
  // Harmonic mean; 0 when precision and recall are both 0.
  double f1() const;
  nlohmann::json to_json() const;
};

// Length buckets 1, 2, 3, 4 and >= 5.
constexpr int kLengthBuckets = 5;
int length_bucket(int span_length);
const char* bucket_label(int bucket);

struct MetricsReport {
  Counts overall;
  // Gold and correct entities bucket by gold length, predictions by their
  // own length.
  std::array<Counts, kLengthBuckets> buckets;
  // Gold (outer, inner) containment pairs with both members predicted.
  long nested_pairs_gold = 0;
  long nested_pairs_recovered = 0;

  nlohmann::json to_json() const;
  std::string table() const;
};

// Micro-averaged exact (start, end, type) match; predicted[i] and gold[i]
// belong to the same sentence. Duplicate predictions count once.
MetricsReport score(const std::vector<std::vector<EntitySpan>>& predicted,
                    const std::vector<std::vector<EntitySpan>>& gold);

}  // namespace nestor::data

#endif  // NESTOR_DATA_METRICS_H_
