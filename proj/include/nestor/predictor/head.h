#ifndef NESTOR_PREDICTOR_HEAD_H_
#define NESTOR_PREDICTOR_HEAD_H_

#include <utility>
#include <vector>

#include "nestor/cli/config.h"
#include "nestor/numerics/layers.h"
#include "nestor/regressor/regressor.h"

namespace nestor::predictor {

using numerics::Index;
using numerics::Matrix;
using numerics::ParamStore;
using numerics::Rng;
using numerics::Tape;
using numerics::Var;

// Candidate spans {(s, e) : 0 <= s <= e < L} in lexicographic order.
std::vector<std::pair<int, int>> span_support(int L);
// Position of (s, e) in span_support(L).
int support_index(int s, int e, int L);

class Head {
 public:
  Head() = default;
  Head(ParamStore& store, const ModelConfig& model, int num_types, Rng& rng);

  // log p_c = log_softmax(C + mlp(Q)); L x (T+1).
  Var category_distribution(Tape& tape, Var Q, Var C) const;

  // log p_n over span_support(L); L x L(L+1)/2. Pointer scores use the
  // start projection on both the query and the start token, and the end
  // projection on both the query and the end token:
  //   r(s, e) = log G(s, e) + (<P_s q, P_s h_s> + <P_e q, P_e h_e>) / sqrt(d).
  Var span_distribution(Tape& tape, Var Q, Var N, Var H, regressor::SpatialPrior* prior = nullptr) const;

 private:
  double eps_ = 1e-4;
  Index dim_ = 0;
  numerics::Mlp category_;
  numerics::Linear prior_query_;
  numerics::Mlp prior_;
  numerics::Linear start_;
  numerics::Linear end_;
};

struct PredictedEntity {
  int start = 0;
  int end = 0;
  int type = 0;
  double score = 0.0;

  bool operator==(const PredictedEntity&) const = default;
};

// p_c: L x (T+1) probabilities with None at column T; p_n: L x K over
// span_support(L). A proposal emits (s, e, t) when its most likely type t is
// not None and p_c(t) * p_n(s, e) >= p_c(None), with (s, e) its most likely
// span. Ties go to the lowest category and the first span in lexicographic
// order. Duplicates keep the highest score. Sorted by (start, end, type).
std::vector<PredictedEntity> decode(const Matrix& p_c, const Matrix& p_n, int L);

}  // namespace nestor::predictor

#endif  // NESTOR_PREDICTOR_HEAD_H_
