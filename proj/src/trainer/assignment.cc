#include "nestor/trainer/assignment.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nestor/error.h"

namespace nestor::trainer {

double match_cost(double p_type, double p_span) {
  return -std::log(std::max(p_type, kProbabilityFloor)) - std::log(std::max(p_span, kProbabilityFloor));
}

double padding_cost(double p_none) { return -std::log(std::max(p_none, kProbabilityFloor)); }

Matrix cost_matrix(const Matrix& p_c, const Matrix& p_n, const std::vector<TargetEntity>& targets, int L) {
  const Index K = static_cast<Index>(L) * (L + 1) / 2;
  if (p_c.rows() != L || p_n.rows() != L || p_n.cols() != K) {
    throw DimensionError("cost_matrix: p_c " + numerics::shape_string(p_c) + ", p_n " +
                         numerics::shape_string(p_n) + " for length " + std::to_string(L));
  }
  const auto N = static_cast<Index>(targets.size());
  const Index none = p_c.cols() - 1;
  Matrix cost(L, N + 1);
  for (Index j = 0; j < N; ++j) {
    const auto& t = targets[j];
    if (t.type < 0 || t.type >= none || t.start < 0 || t.end < t.start || t.end >= L) {
      throw DimensionError("cost_matrix: target (" + std::to_string(t.start) + ", " + std::to_string(t.end) +
                           ", " + std::to_string(t.type) + ") out of range");
    }
    const Index k = static_cast<Index>(t.start) * L - static_cast<Index>(t.start) * (t.start - 1) / 2 +
                    (t.end - t.start);
    for (Index i = 0; i < L; ++i) cost(i, j) = match_cost(p_c(i, t.type), p_n(i, k));
  }
  for (Index i = 0; i < L; ++i) cost(i, N) = padding_cost(p_c(i, none));
  return cost;
}

std::vector<int> hungarian(const Matrix& cost) {
  if (!numerics::all_finite(cost)) throw NumericError("hungarian: non-finite cost entry");
  const Index R = cost.rows();
  const Index C = cost.cols();
  if (R == 0 || C == 0) return std::vector<int>(R, -1);
  // Shortest augmenting paths with potentials; rows (n) <= columns (m).
  const bool transposed = R > C;
  const Matrix a = transposed ? Matrix(cost.transpose()) : cost;
  const Index n = a.rows(), m = a.cols();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<Index> p(m + 1, 0), way(m + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(R, -1);
  for (Index j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) {
      row_to_col[j - 1] = static_cast<int>(p[j] - 1);
    } else {
      row_to_col[p[j] - 1] = static_cast<int>(j - 1);
    }
  }
  return row_to_col;
}

Assignment assign(const Matrix& cost) {
  const Index L = cost.rows();
  const Index N = cost.cols() - 1;
  if (L < 1 || N < 0) throw DimensionError("assign: cost matrix " + numerics::shape_string(cost));
  if (!numerics::all_finite(cost)) throw NumericError("assign: non-finite cost entry");
  Assignment a;
  a.target.assign(L, static_cast<int>(N));
  a.core.assign(L, false);

  if (N > 0) {
    Matrix entity = cost.leftCols(N);
    if (L > N) {
      for (Index i = 0; i < L; ++i) entity.row(i).array() -= cost.row(i).minCoeff();
    }
    const std::vector<int> matched = hungarian(entity);
    for (Index i = 0; i < L; ++i) {
      if (matched[i] < 0) continue;
      a.target[i] = matched[i];
      a.core[i] = true;
    }
  }
  for (Index i = 0; i < L; ++i) {
    if (a.core[i]) continue;
    Index best = 0;
    for (Index j = 1; j <= N; ++j) {
      if (cost(i, j) < cost(i, best)) best = j;
    }
    a.target[i] = static_cast<int>(best);
  }
  for (Index i = 0; i < L; ++i) a.total_cost += cost(i, a.target[i]);
  return a;
}

}  // namespace nestor::trainer
