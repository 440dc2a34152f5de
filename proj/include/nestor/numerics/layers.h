#ifndef NESTOR_NUMERICS_LAYERS_H_
#define NESTOR_NUMERICS_LAYERS_H_

#include <string>
#include <vector>

#include "nestor/numerics/ops.h"
#include "nestor/numerics/param.h"
#include "nestor/numerics/rng.h"

// Parameterized building blocks. Each layer registers its parameters in a
// ParamStore under a dotted name prefix at construction, then binds them to
// a tape on every call.
namespace nestor::numerics {

enum class Activation { kGelu, kTanh, kSigmoid, kIdentity };

Var activate(Var x, Activation act);

class Linear {
 public:
  Linear() = default;
  // Xavier-uniform weight, zero bias.
  Linear(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng);

  Var operator()(Tape& tape, Var x) const;

  Index in() const { return w_->value.cols(); }
  Index out() const { return w_->value.rows(); }
  Param& weight() const { return *w_; }
  Param& bias() const { return *b_; }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
};

// Alternating affine maps and activations; the last layer is affine only.
// sizes = {in, hidden..., out}, so sizes.size() - 1 affine layers.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<Index>& sizes, Activation act,
      Rng& rng);

  Var operator()(Tape& tape, Var x) const;

  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kGelu;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Index dim, double eps = 1e-5);

  Var operator()(Tape& tape, Var x) const;

 private:
  Param* gamma_ = nullptr;
  Param* beta_ = nullptr;
  double eps_ = 1e-5;
};

// Parameters of one GRU direction.
class GruParams {
 public:
  GruParams() = default;
  // Uniform(-1/sqrt(h), 1/sqrt(h)) for every weight and bias.
  GruParams(ParamStore& store, const std::string& name, Index in, Index hidden, Rng& rng);

  GruWeights bind(Tape& tape) const;
  Index hidden() const { return w_hh_->value.cols(); }

 private:
  Param* w_ih_ = nullptr;
  Param* w_hh_ = nullptr;
  Param* b_ih_ = nullptr;
  Param* b_hh_ = nullptr;
};

// Bidirectional GRU: [forward states ; backward states], L x 2h.
class BiGru {
 public:
  BiGru() = default;
  BiGru(ParamStore& store, const std::string& name, Index in, Index hidden, Rng& rng);

  // Throws DimensionError on an empty sequence.
  Var operator()(Tape& tape, Var seq) const;

  Index out() const { return 2 * fwd_.hidden(); }

 private:
  GruParams fwd_;
  GruParams bwd_;
};

// Single GRU step applied row-wise: the input is the new information and
// the state is what gets carried.
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& name, Index in, Index hidden, Rng& rng);

  Var operator()(Tape& tape, Var input, Var state) const;

  GruParams& params() { return params_; }

 private:
  GruParams params_;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& name, Index k, Index in, Index out, Rng& rng);

  Var operator()(Tape& tape, Var seq) const;
  Index kernel() const { return k_; }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  Index k_ = 1;
};

class TConv1d {
 public:
  TConv1d() = default;
  TConv1d(ParamStore& store, const std::string& name, Index k, Index in, Index out, Rng& rng);

  Var operator()(Tape& tape, Var seq) const;
  Index kernel() const { return k_; }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  Index k_ = 1;
};

class Embedding {
 public:
  Embedding() = default;
  // Normal(0, stddev) initialization.
  Embedding(ParamStore& store, const std::string& name, Index vocab, Index dim, Rng& rng,
            double stddev = 0.1);

  Var operator()(Tape& tape, const std::vector<int>& ids) const;

  Param& table() const { return *table_; }
  Index dim() const { return table_->value.cols(); }

 private:
  Param* table_ = nullptr;
};

}  // namespace nestor::numerics

#endif  // NESTOR_NUMERICS_LAYERS_H_
