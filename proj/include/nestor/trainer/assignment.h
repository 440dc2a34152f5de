#ifndef NESTOR_TRAINER_ASSIGNMENT_H_
#define NESTOR_TRAINER_ASSIGNMENT_H_

#include <vector>

#include "nestor/numerics/matrix.h"

namespace nestor::trainer {

using numerics::Index;
using numerics::Matrix;

// Probabilities are clamped here before the logarithm.
constexpr double kProbabilityFloor = 1e-12;

struct TargetEntity {
  int start = 0;
  int end = 0;
  int type = 0;
};

// -log p_c(t) - log p_n(s, e).
double match_cost(double p_type, double p_span);
// -log p_c(None).
double padding_cost(double p_none);

// L x (N + 1) costs from L x (T+1) category and L x K span probabilities;
// the last column is the padding target.
Matrix cost_matrix(const Matrix& p_c, const Matrix& p_n, const std::vector<TargetEntity>& targets, int L);

// Minimum-cost one-to-one matching of size min(R, C) on an R x C matrix.
// Result maps each row to its column or -1. Throws NumericError on
// non-finite entries.
std::vector<int> hungarian(const Matrix& cost);

struct Assignment {
  // Target index per proposal; N means padding.
  std::vector<int> target;
  // True for pairs fixed by the one-to-one matching, false for pairs added
  // afterwards.
  std::vector<bool> core;
  double total_cost = 0.0;
};

// Optimal proposal -> target map for an L x (N + 1) cost matrix under:
//   L > N:  every entity receives at least one proposal;
//   L <= N: every proposal takes a distinct entity;
//   N = 0:  every proposal takes padding.
// For L > N the entity columns are matched on row-reduced costs
// C[i][j] - min_k C[i][k] (k over the full row, padding included); every
// other proposal then takes its row minimum, ties going to the lowest
// index. Any feasible map pays at least each row's minimum plus, for one
// representative proposal per entity, that entity's reduced cost, and the
// matching minimizes the latter sum, so the result is optimal.
Assignment assign(const Matrix& cost);

}  // namespace nestor::trainer

#endif  // NESTOR_TRAINER_ASSIGNMENT_H_
