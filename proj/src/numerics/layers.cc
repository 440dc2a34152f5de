#include "nestor/numerics/layers.h"

#include <cmath>

#include "nestor/error.h"

namespace nestor::numerics {

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::kGelu:
      return gelu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

Linear::Linear(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  w_ = &store.add(name + ".w", rng.uniform_matrix(out, in, -a, a));
  b_ = &store.add(name + ".b", Matrix::Zero(1, out));
}

Var Linear::operator()(Tape& tape, Var x) const {
  return linear_affine(x, tape.param(*w_), tape.param(*b_));
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<Index>& sizes,
         Activation act, Rng& rng)
    : act_(act) {
  if (sizes.size() < 2) throw InvariantError("Mlp '" + name + "' needs at least in and out sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers_.emplace_back(store, name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng);
  }
}

Var Mlp::operator()(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](tape, x);
    if (i + 1 < layers_.size()) x = activate(x, act_);
  }
  return x;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Index dim, double eps)
    : eps_(eps) {
  gamma_ = &store.add(name + ".gamma", Matrix::Ones(1, dim));
  beta_ = &store.add(name + ".beta", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return layer_norm(x, tape.param(*gamma_), tape.param(*beta_), eps_);
}

GruParams::GruParams(ParamStore& store, const std::string& name, Index in, Index hidden, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_ih_ = &store.add(name + ".w_ih", rng.uniform_matrix(3 * hidden, in, -a, a));
  w_hh_ = &store.add(name + ".w_hh", rng.uniform_matrix(3 * hidden, hidden, -a, a));
  b_ih_ = &store.add(name + ".b_ih", rng.uniform_matrix(1, 3 * hidden, -a, a));
  b_hh_ = &store.add(name + ".b_hh", rng.uniform_matrix(1, 3 * hidden, -a, a));
}

GruWeights GruParams::bind(Tape& tape) const {
  return {tape.param(*w_ih_), tape.param(*w_hh_), tape.param(*b_ih_), tape.param(*b_hh_)};
}

BiGru::BiGru(ParamStore& store, const std::string& name, Index in, Index hidden, Rng& rng)
    : fwd_(store, name + ".fwd", in, hidden, rng), bwd_(store, name + ".bwd", in, hidden, rng) {}

Var BiGru::operator()(Tape& tape, Var seq) const {
  if (seq.rows() < 1) throw DimensionError("bigru_encode: empty input sequence");
  Var f = gru_sequence(seq, fwd_.bind(tape), false);
  Var b = gru_sequence(seq, bwd_.bind(tape), true);
  return concat_cols({f, b});
}

GruCell::GruCell(ParamStore& store, const std::string& name, Index in, Index hidden, Rng& rng)
    : params_(store, name, in, hidden, rng) {}

Var GruCell::operator()(Tape& tape, Var input, Var state) const {
  return gru_cell(input, state, params_.bind(tape));
}

Conv1d::Conv1d(ParamStore& store, const std::string& name, Index k, Index in, Index out, Rng& rng)
    : k_(k) {
  const double a = std::sqrt(6.0 / static_cast<double>(k * in + out));
  w_ = &store.add(name + ".w", rng.uniform_matrix(out, k * in, -a, a));
  b_ = &store.add(name + ".b", Matrix::Zero(1, out));
}

Var Conv1d::operator()(Tape& tape, Var seq) const {
  return conv1d_valid(seq, k_, tape.param(*w_), tape.param(*b_));
}

TConv1d::TConv1d(ParamStore& store, const std::string& name, Index k, Index in, Index out,
                 Rng& rng)
    : k_(k) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + k * out));
  w_ = &store.add(name + ".w", rng.uniform_matrix(in, k * out, -a, a));
  b_ = &store.add(name + ".b", Matrix::Zero(1, out));
}

Var TConv1d::operator()(Tape& tape, Var seq) const {
  return tconv1d(seq, k_, tape.param(*w_), tape.param(*b_));
}

Embedding::Embedding(ParamStore& store, const std::string& name, Index vocab, Index dim, Rng& rng,
                     double stddev) {
  table_ = &store.add(name, rng.normal_matrix(vocab, dim, stddev));
}

Var Embedding::operator()(Tape& tape, const std::vector<int>& ids) const {
  return gather_rows(tape.param(*table_), ids);
}

}  // namespace nestor::numerics
