#ifndef NESTOR_PROPOSER_PROPOSER_H_
#define NESTOR_PROPOSER_PROPOSER_H_

#include <utility>
#include <vector>

#include "nestor/cli/config.h"
#include "nestor/numerics/layers.h"

namespace nestor::proposer {

using numerics::Index;
using numerics::Matrix;
using numerics::ParamStore;
using numerics::Rng;
using numerics::Tape;
using numerics::Var;

// Token span covered by a single feature of level l:
//   v_0 = 1,  v_l = 1 - l + sum_{i <= l} k_i.
int span_length(int level, const std::vector<int>& kernels);
// Number of levels that exist for a sentence of length L: level l needs
// L - v_l + 1 >= 1 and l <= kernels.size().
int num_levels(int L, const std::vector<int>& kernels);
// (i, i + v_l - 1), end inclusive. Throws DimensionError when level l or
// feature i does not exist for length L.
std::pair<int, int> span_of_feature(int i, int level, const std::vector<int>& kernels, int L);

struct PyramidLevel {
  int level = 0;
  int span_length = 1;
  Index length = 0;
  Var forward;  // H^f_l
  Var refined;  // H_l
  std::vector<std::pair<int, int>> spans;
};

// One proposal per token: query rows Q (L x d), category logits C
// (L x T+1) and continuous locations N (L x 2, columns start and end).
struct Proposals {
  Var Q;
  Var C;
  Var N;
};

class Proposer {
 public:
  Proposer() = default;
  Proposer(ParamStore& store, const ModelConfig& model, int num_types, const AblationConfig& ablation,
           Rng& rng);

  // Levels 0..top. Each level: layer_norm -> BiGRU -> affine gives H^f_l;
  // gelu(conv(H^f_l)) is the next level's input.
  std::vector<PyramidLevel> forward_pass(Tape& tape, Var H) const;
  // Fills PyramidLevel::refined from the top level down. The top level
  // sees a zero top-down branch. With the backward block disabled,
  // refined = forward.
  void backward_pass(Tape& tape, Var H, std::vector<PyramidLevel>& levels) const;
  // Per-token membership softmax over every feature whose span covers the
  // token, separately for start and end scores.
  Proposals fuse(Tape& tape, const std::vector<PyramidLevel>& levels) const;

  Proposals operator()(Tape& tape, Var H, std::vector<PyramidLevel>* trace = nullptr) const;

  const std::vector<int>& kernels() const { return kernels_; }

 private:
  struct LevelParams {
    numerics::LayerNorm fwd_norm;
    numerics::BiGru fwd_gru;
    numerics::Linear fwd_out;
    numerics::Conv1d up;        // level l -> l + 1
    numerics::LayerNorm top_norm;  // applied to H^b_{l+1}
    numerics::BiGru bwd_gru;
    numerics::Linear bwd_out;
    numerics::LayerNorm out_norm;
    numerics::TConv1d down;     // level l -> l - 1
  };

  std::vector<int> kernels_;
  Index dim_ = 0;
  Index gru_hidden_ = 0;
  bool backward_block_ = true;
  std::vector<LevelParams> levels_;
  numerics::Mlp boundary_;
  numerics::Mlp category_;
};

}  // namespace nestor::proposer

#endif  // NESTOR_PROPOSER_PROPOSER_H_
