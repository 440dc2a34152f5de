#include "nestor/data/metrics.h"

#include <algorithm>
#include <cstdio>
#include <set>

#include "nestor/error.h"

namespace nestor::data {

double Counts::precision() const { return predicted == 0 ? 0.0 : static_cast<double>(correct) / predicted; }

double Counts::recall() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / gold; }

double Counts::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

nlohmann::json Counts::to_json() const {
  return {{"gold", gold},           {"predicted", predicted}, {"correct", correct},
          {"precision", precision()}, {"recall", recall()},     {"f1", f1()}};
}

int length_bucket(int span_length) { return std::min(std::max(span_length, 1), kLengthBuckets) - 1; }

const char* bucket_label(int bucket) {
  static const char* kLabels[kLengthBuckets] = {"1", "2", "3", "4", ">=5"};
  return kLabels[bucket];
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json b = nlohmann::json::object();
  for (int i = 0; i < kLengthBuckets; ++i) b[bucket_label(i)] = buckets[i].to_json();
  return {{"overall", overall.to_json()},
          {"by_length", b},
          {"nested_pairs", {{"gold", nested_pairs_gold}, {"recovered", nested_pairs_recovered}}}};
}

std::string MetricsReport::table() const {
  std::string out = "length      gold   pred  correct   prec    rec     f1\n";
  char line[128];
  auto row = [&](const char* label, const Counts& c) {
    std::snprintf(line, sizeof line, "%-8s %7ld %6ld %8ld %6.4f %6.4f %6.4f\n", label, c.gold, c.predicted,
                  c.correct, c.precision(), c.recall(), c.f1());
    out += line;
  };
  for (int i = 0; i < kLengthBuckets; ++i) row(bucket_label(i), buckets[i]);
  row("all", overall);
  std::snprintf(line, sizeof line, "nested pairs recovered: %ld / %ld\n", nested_pairs_recovered,
                nested_pairs_gold);
  out += line;
  return out;
}

MetricsReport score(const std::vector<std::vector<EntitySpan>>& predicted,
                    const std::vector<std::vector<EntitySpan>>& gold) {
  if (predicted.size() != gold.size()) {
    throw DimensionError("score: " + std::to_string(predicted.size()) + " predicted sentences for " +
                         std::to_string(gold.size()) + " gold sentences");
  }
  MetricsReport r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const std::set<EntitySpan> p(predicted[s].begin(), predicted[s].end());
    const std::set<EntitySpan> g(gold[s].begin(), gold[s].end());
    for (const auto& e : g) {
      const int b = length_bucket(e.length());
      ++r.overall.gold;
      ++r.buckets[b].gold;
      if (p.count(e)) {
        ++r.overall.correct;
        ++r.buckets[b].correct;
      }
    }
    for (const auto& e : p) {
      ++r.overall.predicted;
      ++r.buckets[length_bucket(e.length())].predicted;
    }
    for (const auto& outer : g) {
      for (const auto& inner : g) {
        if (outer == inner || outer.start > inner.start || inner.end > outer.end) continue;
        if (outer.length() == inner.length()) continue;
        ++r.nested_pairs_gold;
        if (p.count(outer) && p.count(inner)) ++r.nested_pairs_recovered;
      }
    }
  }
  return r;
}

}  // namespace nestor::data
