#ifndef NESTOR_REGRESSOR_REGRESSOR_H_
#define NESTOR_REGRESSOR_REGRESSOR_H_

#include <vector>

#include "nestor/cli/config.h"
#include "nestor/numerics/layers.h"
#include "nestor/proposer/proposer.h"

namespace nestor::regressor {

using numerics::Index;
using numerics::Matrix;
using numerics::ParamStore;
using numerics::Rng;
using numerics::Tape;
using numerics::Var;
using proposer::Proposals;

// Per-row Gaussian-like prior: centers mu (R x 2) and precisions theta
// (R x 3, entries theta00, theta01, theta11 of a symmetric 2 x 2 matrix).
struct SpatialPrior {
  Var mu;
  Var theta;
};

// h' = Q + softmax(C) Hc^T with Hc: d x (T+1).
Var category_embed(Var Q, Var C, Var Hc);

// The MLP maps each query row to (dn_s, dn_e, a, b, c); mu = N + dn and
// theta = F F^T + eps I with F = [[a, 0], [b, c]].
SpatialPrior spatial_params(Tape& tape, Var hq, Var N, const numerics::Mlp& mlp, double eps);

// -(x - mu)^T Theta (x - mu) for one prior row, Theta as (t00, t01, t11).
double log_gaussian_like(double mu_s, double mu_e, double t00, double t01, double t11, double x_s,
                         double x_e);

// Smallest eigenvalue of [[t00, t01], [t01, t11]].
double min_eigenvalue(double t00, double t01, double t11);

// n_i = sum_m softmax_m(scores)_i * mu_{i,m}, normalized over heads
// separately for the start and end columns. scores[m]: L x 2.
Var fuse_heads_location(const std::vector<Var>& scores, const std::vector<Var>& mus);
// Same, also returning the L x M head weights for start and end.
Var fuse_heads_location(const std::vector<Var>& scores, const std::vector<Var>& mus, Var* start_weights,
                        Var* end_weights);

// q'_i = sum_m (W_m o_{i,m} + b_m).
Var aggregate_heads_query(Tape& tape, const std::vector<Var>& outputs,
                          const std::vector<numerics::Linear>& maps);

// GRU gate with the attention result as input and h' as carried state.
Var gated_update(Tape& tape, Var h_prime, Var q_prime, const numerics::GruCell& cell);

// c + mlp(q_new).
Var iterate_logits(Tape& tape, Var q_new, Var C, const numerics::Mlp& mlp);

struct HeadRecord {
  Var query;      // L x d/M
  Var output;     // o: L x d/M
  Var attention;  // alpha: L x L
  SpatialPrior prior;
};

struct LayerTrace {
  Var h_prime;
  std::vector<HeadRecord> heads;
  Var head_weights_start;  // L x M
  Var head_weights_end;    // L x M
  Proposals out;
};

// One spatially modulated attention refinement layer.
class RegressorLayer {
 public:
  RegressorLayer() = default;
  RegressorLayer(ParamStore& store, const std::string& name, const ModelConfig& model, int num_types,
                 const AblationConfig& ablation, Rng& rng);

  // Per-head attention over h' rows with the spatial prior of each query
  // evaluated at every key's current location.
  std::vector<HeadRecord> sma_heads(Tape& tape, Var h_prime, Var N) const;

  Proposals operator()(Tape& tape, const Proposals& in, Var Hc, LayerTrace* trace = nullptr) const;

  int heads() const { return heads_; }

 private:
  int heads_ = 1;
  Index head_dim_ = 0;
  double eps_ = 1e-4;
  AblationConfig ablation_;
  numerics::Linear query_;
  numerics::Linear key_;
  numerics::Linear value_;
  numerics::Mlp spatial_;
  numerics::Mlp head_score_;
  std::vector<numerics::Linear> head_out_;
  numerics::GruCell gate_;
  numerics::Mlp logits_;
};

class Regressor {
 public:
  Regressor() = default;
  // Throws ConfigError when model.dim is not divisible by model.heads.
  Regressor(ParamStore& store, const ModelConfig& model, int num_types, const AblationConfig& ablation,
            Rng& rng);

  Proposals operator()(Tape& tape, const Proposals& in, std::vector<LayerTrace>* trace = nullptr) const;

  int layers() const { return static_cast<int>(layers_.size()); }

 private:
  numerics::Param* category_table_ = nullptr;
  std::vector<RegressorLayer> layers_;
};

}  // namespace nestor::regressor

#endif  // NESTOR_REGRESSOR_REGRESSOR_H_
