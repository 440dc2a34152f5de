#include "nestor/predictor/head.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "nestor/error.h"

namespace nestor::predictor {

using namespace numerics;

std::vector<std::pair<int, int>> span_support(int L) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(L) * (L + 1) / 2);
  for (int s = 0; s < L; ++s) {
    for (int e = s; e < L; ++e) out.emplace_back(s, e);
  }
  return out;
}

int support_index(int s, int e, int L) {
  if (s < 0 || e < s || e >= L) {
    throw DimensionError("span (" + std::to_string(s) + ", " + std::to_string(e) + ") outside length " +
                         std::to_string(L));
  }
  return s * L - s * (s - 1) / 2 + (e - s);
}

Head::Head(ParamStore& store, const ModelConfig& model, int num_types, Rng& rng)
    : eps_(model.epsilon_psd), dim_(model.dim) {
  const Index d = model.dim;
  category_ = Mlp(store, "head.category", {d, model.hidden(), num_types + 1}, Activation::kGelu, rng);
  prior_query_ = Linear(store, "head.prior_query", d, d, rng);
  prior_ = Mlp(store, "head.prior", {d, model.hidden(), 5}, Activation::kGelu, rng);
  start_ = Linear(store, "head.start", d, d, rng);
  end_ = Linear(store, "head.end", d, d, rng);
}

Var Head::category_distribution(Tape& tape, Var Q, Var C) const {
  return log_softmax_lastdim(add(C, category_(tape, Q)));
}

Var Head::span_distribution(Tape& tape, Var Q, Var N, Var H, regressor::SpatialPrior* prior) const {
  const int L = static_cast<int>(H.rows());
  if (L < 1) throw DimensionError("span_distribution on an empty sentence");
  const auto support = span_support(L);
  std::vector<int> starts, ends;
  Matrix points(static_cast<Index>(support.size()), 2);
  for (std::size_t k = 0; k < support.size(); ++k) {
    starts.push_back(support[k].first);
    ends.push_back(support[k].second);
    points(static_cast<Index>(k), 0) = support[k].first;
    points(static_cast<Index>(k), 1) = support[k].second;
  }
  regressor::SpatialPrior p = regressor::spatial_params(tape, prior_query_(tape, Q), N, prior_, eps_);
  if (prior != nullptr) *prior = p;

  Var a = matmul_nt(start_(tape, Q), start_(tape, H));
  Var b = matmul_nt(end_(tape, Q), end_(tape, H));
  Var pointer = add(gather_cols(a, starts), gather_cols(b, ends));
  Var scores = add(log_gaussian_grid(p.mu, p.theta, tape.constant(points)),
                   scale(pointer, 1.0 / std::sqrt(static_cast<double>(dim_))));
  return log_softmax_lastdim(scores);
}

std::vector<PredictedEntity> decode(const Matrix& p_c, const Matrix& p_n, int L) {
  const Index K = static_cast<Index>(L) * (L + 1) / 2;
  if (p_c.rows() != p_n.rows() || p_n.cols() != K || p_c.cols() < 1) {
    throw DimensionError("decode: p_c " + shape_string(p_c) + ", p_n " + shape_string(p_n) + " for length " +
                         std::to_string(L));
  }
  const auto support = span_support(L);
  const Index none = p_c.cols() - 1;
  std::map<std::tuple<int, int, int>, double> best;
  for (Index i = 0; i < p_c.rows(); ++i) {
    Index t = 0;
    for (Index c = 1; c < p_c.cols(); ++c) {
      if (p_c(i, c) > p_c(i, t)) t = c;
    }
    if (t == none) continue;
    Index k = 0;
    for (Index j = 1; j < K; ++j) {
      if (p_n(i, j) > p_n(i, k)) k = j;
    }
    const double score = p_c(i, t) * p_n(i, k);
    if (score < p_c(i, none)) continue;
    const auto key = std::make_tuple(support[k].first, support[k].second, static_cast<int>(t));
    auto [it, inserted] = best.emplace(key, score);
    if (!inserted) it->second = std::max(it->second, score);
  }
  std::vector<PredictedEntity> out;
  for (const auto& [key, score] : best) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), score});
  }
  return out;
}

}  // namespace nestor::predictor
