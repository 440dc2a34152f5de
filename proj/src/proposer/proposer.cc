#include "nestor/proposer/proposer.h"

#include <string>

#include "nestor/error.h"

namespace nestor::proposer {

using namespace numerics;

int span_length(int level, const std::vector<int>& kernels) {
  if (level < 0 || level > static_cast<int>(kernels.size())) {
    throw DimensionError("pyramid level " + std::to_string(level) + " outside [0, " +
                         std::to_string(kernels.size()) + "]");
  }
  int v = 1 - level;
  for (int i = 0; i < level; ++i) v += kernels[i];
  return v;
}

int num_levels(int L, const std::vector<int>& kernels) {
  int n = 0;
  while (n <= static_cast<int>(kernels.size()) && L - span_length(n, kernels) + 1 >= 1) ++n;
  return n;
}

std::pair<int, int> span_of_feature(int i, int level, const std::vector<int>& kernels, int L) {
  if (level < 0 || level >= num_levels(L, kernels)) {
    throw DimensionError("pyramid level " + std::to_string(level) + " does not exist for length " +
                         std::to_string(L));
  }
  const int v = span_length(level, kernels);
  if (i < 0 || i > L - v) {
    throw DimensionError("feature " + std::to_string(i) + " outside level " + std::to_string(level) +
                         " of length " + std::to_string(L - v + 1));
  }
  return {i, i + v - 1};
}

Proposer::Proposer(ParamStore& store, const ModelConfig& model, int num_types,
                   const AblationConfig& ablation, Rng& rng)
    : kernels_(model.kernel_sizes),
      dim_(model.dim),
      gru_hidden_((model.dim + 1) / 2),
      backward_block_(ablation.backward_block) {
  for (int k : kernels_) {
    if (k < 1) throw ConfigError("model.kernel_sizes", "kernel sizes must be >= 1");
  }
  const Index d = dim_;
  const Index h = gru_hidden_;
  const int top = static_cast<int>(kernels_.size());
  for (int l = 0; l <= top; ++l) {
    const std::string p = "proposer.level" + std::to_string(l);
    LevelParams lp;
    lp.fwd_norm = LayerNorm(store, p + ".fwd_norm", d);
    lp.fwd_gru = BiGru(store, p + ".fwd_gru", d, h, rng);
    lp.fwd_out = Linear(store, p + ".fwd_out", 2 * h, d, rng);
    if (l < top) lp.up = Conv1d(store, p + ".up", kernels_[l], d, d, rng);
    if (backward_block_) {
      if (l < top) {
        lp.top_norm = LayerNorm(store, p + ".top_norm", d);
        lp.bwd_gru = BiGru(store, p + ".bwd_gru", d, h, rng);
      }
      lp.bwd_out = Linear(store, p + ".bwd_out", d + 2 * h, d, rng);
      lp.out_norm = LayerNorm(store, p + ".out_norm", d);
      if (l > 0) lp.down = TConv1d(store, p + ".down", kernels_[l - 1], d, d, rng);
    }
    levels_.push_back(std::move(lp));
  }
  boundary_ = Mlp(store, "proposer.boundary", {d, model.hidden(), 2}, Activation::kGelu, rng);
  category_ = Mlp(store, "proposer.category", {d, model.hidden(), num_types + 1}, Activation::kGelu, rng);
}

std::vector<PyramidLevel> Proposer::forward_pass(Tape& tape, Var H) const {
  const int L = static_cast<int>(H.rows());
  if (L < 1) throw DimensionError("proposer input is empty");
  const int n = num_levels(L, kernels_);
  std::vector<PyramidLevel> out;
  Var x = H;
  for (int l = 0; l < n; ++l) {
    const LevelParams& lp = levels_[l];
    PyramidLevel level;
    level.level = l;
    level.span_length = span_length(l, kernels_);
    level.length = x.rows();
    level.forward = lp.fwd_out(tape, lp.fwd_gru(tape, lp.fwd_norm(tape, x)));
    for (int i = 0; i < level.length; ++i) level.spans.push_back({i, i + level.span_length - 1});
    if (l + 1 < n) x = gelu(lp.up(tape, level.forward));
    out.push_back(std::move(level));
  }
  return out;
}

void Proposer::backward_pass(Tape& tape, Var H, std::vector<PyramidLevel>& levels) const {
  if (levels.empty()) throw InvariantError("backward pass without forward levels");
  if (!backward_block_) {
    for (auto& level : levels) level.refined = level.forward;
    return;
  }
  const int top = static_cast<int>(levels.size()) - 1;
  Var from_above;
  for (int l = top; l >= 0; --l) {
    const LevelParams& lp = levels_[l];
    PyramidLevel& level = levels[l];
    Var branch;
    if (l == top) {
      branch = tape.constant(Matrix::Zero(level.length, 2 * gru_hidden_));
    } else {
      if (from_above.rows() != level.length) {
        throw InvariantError("top-down features of length " + std::to_string(from_above.rows()) +
                             " do not match level " + std::to_string(l) + " of length " +
                             std::to_string(level.length));
      }
      branch = lp.bwd_gru(tape, lp.top_norm(tape, from_above));
    }
    Var residual = mean_pool(H, level.span_length);
    Var mixed = lp.bwd_out(tape, concat_cols({level.forward, branch}));
    level.refined = lp.out_norm(tape, add(residual, mixed));
    if (l > 0) from_above = gelu(lp.down(tape, level.refined));
  }
}

Proposals Proposer::fuse(Tape& tape, const std::vector<PyramidLevel>& levels) const {
  if (levels.empty()) throw InvariantError("fuse without pyramid levels");
  const Index L = levels.front().length;
  std::vector<Var> stacked;
  std::vector<std::pair<int, int>> spans;
  for (const auto& level : levels) {
    stacked.push_back(level.refined);
    spans.insert(spans.end(), level.spans.begin(), level.spans.end());
  }
  const auto F = static_cast<Index>(spans.size());
  Var scores = boundary_(tape, stacked.size() == 1 ? stacked.front() : concat_rows(stacked));

  std::vector<std::vector<bool>> member(L, std::vector<bool>(F, false));
  Matrix starts(F, 1), ends(F, 1);
  for (Index f = 0; f < F; ++f) {
    starts(f, 0) = spans[f].first;
    ends(f, 0) = spans[f].second;
    for (int j = spans[f].first; j <= spans[f].second; ++j) member[j][f] = true;
  }
  for (Index j = 0; j < L; ++j) {
    if (!member[j][j]) throw InvariantError("token " + std::to_string(j) + " has no member feature");
  }
  auto weights = [&](Index col) {
    return masked_softmax_lastdim(broadcast_rows(transpose(slice_cols(scores, col, 1)), L), member);
  };
  Var n_start = matmul(weights(0), tape.constant(starts));
  Var n_end = matmul(weights(1), tape.constant(ends));

  Proposals p;
  p.Q = levels.front().refined;
  p.C = category_(tape, p.Q);
  p.N = concat_cols({n_start, n_end});
  return p;
}

Proposals Proposer::operator()(Tape& tape, Var H, std::vector<PyramidLevel>* trace) const {
  auto levels = forward_pass(tape, H);
  backward_pass(tape, H, levels);
  Proposals p = fuse(tape, levels);
  if (trace != nullptr) *trace = std::move(levels);
  return p;
}

}  // namespace nestor::proposer
