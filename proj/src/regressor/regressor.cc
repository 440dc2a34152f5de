#include "nestor/regressor/regressor.h"

#include <cmath>
#include <string>

#include "nestor/error.h"

namespace nestor::regressor {

using namespace numerics;

Var category_embed(Var Q, Var C, Var Hc) { return add(Q, matmul_nt(softmax_lastdim(C), Hc)); }

SpatialPrior spatial_params(Tape& tape, Var hq, Var N, const Mlp& mlp, double eps) {
  Var out = mlp(tape, hq);
  if (out.cols() != 5) throw DimensionError("spatial MLP must emit 5 columns, got " + shape_string(out.value()));
  return {add(N, slice_cols(out, 0, 2)), psd_from_factor(slice_cols(out, 2, 3), eps)};
}

double log_gaussian_like(double mu_s, double mu_e, double t00, double t01, double t11, double x_s,
                         double x_e) {
  const double ds = x_s - mu_s;
  const double de = x_e - mu_e;
  return -(t00 * ds * ds + 2.0 * t01 * ds * de + t11 * de * de);
}

double min_eigenvalue(double t00, double t01, double t11) {
  const double mean = 0.5 * (t00 + t11);
  const double half_gap = std::hypot(0.5 * (t00 - t11), t01);
  return mean - half_gap;
}

Var fuse_heads_location(const std::vector<Var>& scores, const std::vector<Var>& mus) {
  return fuse_heads_location(scores, mus, nullptr, nullptr);
}

Var fuse_heads_location(const std::vector<Var>& scores, const std::vector<Var>& mus, Var* start_weights,
                        Var* end_weights) {
  if (scores.empty() || scores.size() != mus.size()) {
    throw DimensionError("fuse_heads_location: " + std::to_string(scores.size()) + " score sets for " +
                         std::to_string(mus.size()) + " centers");
  }
  auto column = [](const std::vector<Var>& parts, Index c) {
    std::vector<Var> cols;
    for (const Var& p : parts) cols.push_back(slice_cols(p, c, 1));
    return concat_cols(cols);
  };
  Var ws = softmax_lastdim(column(scores, 0));
  Var we = softmax_lastdim(column(scores, 1));
  if (start_weights != nullptr) *start_weights = ws;
  if (end_weights != nullptr) *end_weights = we;
  return concat_cols({row_sum(mul(ws, column(mus, 0))), row_sum(mul(we, column(mus, 1)))});
}

Var aggregate_heads_query(Tape& tape, const std::vector<Var>& outputs, const std::vector<Linear>& maps) {
  if (outputs.empty() || outputs.size() != maps.size()) {
    throw DimensionError("aggregate_heads_query: " + std::to_string(outputs.size()) + " heads for " +
                         std::to_string(maps.size()) + " maps");
  }
  Var sum = maps[0](tape, outputs[0]);
  for (std::size_t m = 1; m < outputs.size(); ++m) sum = add(sum, maps[m](tape, outputs[m]));
  return sum;
}

Var gated_update(Tape& tape, Var h_prime, Var q_prime, const GruCell& cell) {
  return cell(tape, q_prime, h_prime);
}

Var iterate_logits(Tape& tape, Var q_new, Var C, const Mlp& mlp) { return add(C, mlp(tape, q_new)); }

RegressorLayer::RegressorLayer(ParamStore& store, const std::string& name, const ModelConfig& model,
                               int num_types, const AblationConfig& ablation, Rng& rng)
    : heads_(model.heads), head_dim_(model.dim / model.heads), eps_(model.epsilon_psd), ablation_(ablation) {
  const Index d = model.dim;
  const Index hidden = model.hidden();
  query_ = Linear(store, name + ".query", d, d, rng);
  key_ = Linear(store, name + ".key", d, d, rng);
  value_ = Linear(store, name + ".value", d, d, rng);
  spatial_ = Mlp(store, name + ".spatial", {head_dim_, hidden, 5}, Activation::kGelu, rng);
  if (ablation_.location_iteration) {
    head_score_ = Mlp(store, name + ".head_score", {head_dim_, hidden, 2}, Activation::kGelu, rng);
  }
  for (int m = 0; m < heads_; ++m) {
    head_out_.emplace_back(store, name + ".head_out" + std::to_string(m), head_dim_, d, rng);
  }
  if (ablation_.gated_update) gate_ = GruCell(store, name + ".gate", d, d, rng);
  if (ablation_.logits_iteration) {
    logits_ = Mlp(store, name + ".logits", {d, hidden, num_types + 1}, Activation::kGelu, rng);
  }
}

std::vector<HeadRecord> RegressorLayer::sma_heads(Tape& tape, Var h_prime, Var N) const {
  Var q = query_(tape, h_prime);
  Var k = key_(tape, h_prime);
  Var v = value_(tape, h_prime);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  std::vector<HeadRecord> heads;
  for (int m = 0; m < heads_; ++m) {
    HeadRecord r;
    r.query = slice_cols(q, m * head_dim_, head_dim_);
    r.prior = spatial_params(tape, r.query, N, spatial_, eps_);
    Var scores = scale(matmul_nt(r.query, slice_cols(k, m * head_dim_, head_dim_)), inv_sqrt);
    if (ablation_.spatial_modulation) scores = add(scores, log_gaussian_grid(r.prior.mu, r.prior.theta, N));
    r.attention = softmax_lastdim(scores);
    r.output = matmul(r.attention, slice_cols(v, m * head_dim_, head_dim_));
    heads.push_back(std::move(r));
  }
  return heads;
}

Proposals RegressorLayer::operator()(Tape& tape, const Proposals& in, Var Hc, LayerTrace* trace) const {
  Var h_prime = ablation_.category_embedding ? category_embed(in.Q, in.C, Hc) : in.Q;
  std::vector<HeadRecord> heads = sma_heads(tape, h_prime, in.N);

  std::vector<Var> outputs, mus;
  for (const auto& h : heads) {
    outputs.push_back(h.output);
    mus.push_back(h.prior.mu);
  }

  Proposals out;
  Var ws, we;
  if (ablation_.location_iteration) {
    std::vector<Var> scores;
    for (const Var& o : outputs) scores.push_back(head_score_(tape, o));
    out.N = fuse_heads_location(scores, mus, &ws, &we);
  } else {
    out.N = in.N;
  }
  Var q_prime = aggregate_heads_query(tape, outputs, head_out_);
  out.Q = ablation_.gated_update ? gated_update(tape, h_prime, q_prime, gate_) : q_prime;
  out.C = ablation_.logits_iteration ? iterate_logits(tape, out.Q, in.C, logits_) : in.C;

  if (trace != nullptr) {
    trace->h_prime = h_prime;
    trace->heads = std::move(heads);
    trace->head_weights_start = ws;
    trace->head_weights_end = we;
    trace->out = out;
  }
  return out;
}

Regressor::Regressor(ParamStore& store, const ModelConfig& model, int num_types,
                     const AblationConfig& ablation, Rng& rng) {
  if (model.heads < 1) throw ConfigError("model.heads", "must be >= 1");
  if (model.dim % model.heads != 0) {
    throw ConfigError("model.heads", "model.dim " + std::to_string(model.dim) + " is not divisible by " +
                                         std::to_string(model.heads) + " heads");
  }
  if (model.regressor_layers < 0) throw ConfigError("model.regressor_layers", "must be >= 0");
  if (ablation.category_embedding && model.regressor_layers > 0) {
    category_table_ = &store.add("regressor.category_table",
                                 rng.normal_matrix(model.dim, num_types + 1, 1.0 / std::sqrt(model.dim)));
  }
  for (int i = 0; i < model.regressor_layers; ++i) {
    layers_.emplace_back(store, "regressor.layer" + std::to_string(i), model, num_types, ablation, rng);
  }
}

Proposals Regressor::operator()(Tape& tape, const Proposals& in, std::vector<LayerTrace>* trace) const {
  Var Hc;
  if (category_table_ != nullptr) Hc = tape.param(*category_table_);
  if (trace != nullptr) trace->assign(layers_.size(), LayerTrace{});
  Proposals p = in;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    p = layers_[i](tape, p, Hc, trace != nullptr ? &(*trace)[i] : nullptr);
  }
  return p;
}

}  // namespace nestor::regressor
