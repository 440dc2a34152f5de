#include "nestor/cli/gradcheck_suite.h"

#include <chrono>
#include <cmath>
#include <sstream>

#include "nestor/numerics/gradcheck.h"
#include "nestor/numerics/ops.h"
#include "nestor/predictor/model.h"
#include "nestor/trainer/trainer.h"

namespace nestor {

using namespace numerics;

namespace {

Var weighted_sum(Tape& t, Var x, std::uint64_t seed) {
  Rng rng(seed * 7919 + 17);
  return sum_all(mul(x, t.constant(rng.uniform_matrix(x.rows(), x.cols(), -1.0, 1.0))));
}

class Suite {
 public:
  explicit Suite(const std::function<void(const GradCheckEntry&)>& on_entry) : on_entry_(on_entry) {}

  // Runs `check` for each seed and records the worst report under `name`.
  void add(const std::string& name, int seeds, const std::function<GradCheckReport(std::uint64_t)>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckEntry e;
    e.name = name;
    for (int s = 0; s < seeds; ++s) {
      const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);
      GradCheckReport r;
      try {
        r = check(seed);
      } catch (const std::exception& ex) {
        e.max_rel_error = INFINITY;
        e.worst = std::string("exception: ") + ex.what();
        break;
      }
      e.coordinates += r.coordinates;
      if (r.max_rel_error >= e.max_rel_error) {
        e.max_rel_error = r.max_rel_error;
        std::ostringstream w;
        w << r.worst_input << "[" << r.worst_offset << "] seed " << seed;
        e.worst = w.str();
      }
    }
    e.passed = e.max_rel_error <= kGradCheckTolerance;
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_entry_) on_entry_(e);
    entries_.push_back(std::move(e));
  }

  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  std::function<void(const GradCheckEntry&)> on_entry_;
  std::vector<GradCheckEntry> entries_;
};

using Inputs = std::vector<Var>;

void add_primitives(Suite& suite) {
  constexpr int kSeeds = 20;
  auto unary = [&](const std::string& name, std::function<Var(Var)> op, Index r, Index c, double spread) {
    suite.add(name, kSeeds, [=](std::uint64_t seed) {
      Rng rng(seed);
      return finite_diff_gradcheck([&](Tape& t, Var x) { return weighted_sum(t, op(x), seed); },
                                   rng.normal_matrix(r, c, spread));
    });
  };
  auto multi = [&](const std::string& name, std::function<Var(Tape&, const Inputs&)> f,
                   std::vector<std::pair<Index, Index>> shapes, double spread) {
    suite.add(name, kSeeds, [=](std::uint64_t seed) {
      Rng rng(seed);
      std::vector<Matrix> in;
      for (auto [r, c] : shapes) in.push_back(rng.normal_matrix(r, c, spread));
      return finite_diff_gradcheck([&](Tape& t, const Inputs& x) { return weighted_sum(t, f(t, x), seed); }, in);
    });
  };

  multi("linear_affine", [](Tape&, const Inputs& x) { return linear_affine(x[0], x[1], x[2]); },
        {{3, 4}, {5, 4}, {1, 5}}, 1.0);
  multi("add_sub_mul_scale",
        [](Tape&, const Inputs& x) { return scale(sub(add(x[0], mul(x[0], x[1])), x[1]), 0.7); }, {{3, 4}, {3, 4}},
        1.0);
  multi("add_row_broadcast", [](Tape&, const Inputs& x) { return add(add_row(x[0], x[1]), broadcast_rows(x[1], 3)); },
        {{3, 4}, {1, 4}}, 1.0);
  multi("matmul", [](Tape&, const Inputs& x) { return matmul(x[0], x[1]); }, {{3, 4}, {4, 2}}, 1.0);
  multi("matmul_nt", [](Tape&, const Inputs& x) { return matmul_nt(x[0], x[1]); }, {{3, 4}, {5, 4}}, 1.0);
  unary("transpose", [](Var x) { return transpose(x); }, 3, 4, 1.0);
  unary("concat_slice",
        [](Var x) {
          return concat_rows({slice_rows(x, 2, 2), concat_cols({slice_cols(x, 3, 1), slice_cols(x, 0, 3)})});
        },
        4, 4, 1.0);
  unary("gather_rows_cols", [](Var x) { return gather_cols(gather_rows(x, {2, 0, 2}), {1, 3, 1, 0}); }, 3, 4, 1.0);
  unary("row_sum", [](Var x) { return row_sum(x); }, 3, 4, 1.0);
  suite.add("pick_sum", kSeeds, [](std::uint64_t seed) {
    Rng rng(seed);
    return finite_diff_gradcheck([](Tape&, Var x) { return pick_sum(x, {1, -1, 3, 0}); },
                                 rng.normal_matrix(4, 4, 1.0));
  });
  unary("sigmoid", [](Var x) { return sigmoid(x); }, 3, 4, 2.0);
  unary("tanh", [](Var x) { return numerics::tanh(x); }, 3, 4, 2.0);
  unary("gelu", [](Var x) { return gelu(x); }, 3, 4, 2.0);
  unary("softmax_lastdim", [](Var x) { return softmax_lastdim(x); }, 3, 5, 2.0);
  unary("log_softmax_lastdim", [](Var x) { return log_softmax_lastdim(x); }, 3, 5, 2.0);
  unary("masked_softmax_lastdim",
        [](Var x) {
          return masked_softmax_lastdim(x, {{true, false, true, true}, {false, false, true, false}, {true, true, true, true}});
        },
        3, 4, 2.0);
  multi("layer_norm", [](Tape&, const Inputs& x) { return layer_norm(x[0], x[1], x[2], 1e-5); },
        {{3, 6}, {1, 6}, {1, 6}}, 1.0);
  unary("mean_pool", [](Var x) { return mean_pool(x); }, 4, 3, 1.0);
  unary("mean_pool_window", [](Var x) { return mean_pool(x, 3); }, 5, 3, 1.0);
  multi("conv1d_valid", [](Tape&, const Inputs& x) { return conv1d_valid(x[0], 2, x[1], x[2]); },
        {{5, 3}, {4, 6}, {1, 4}}, 1.0);
  multi("tconv1d", [](Tape&, const Inputs& x) { return tconv1d(x[0], 3, x[1], x[2]); }, {{3, 2}, {2, 9}, {1, 3}},
        1.0);
  for (bool reverse : {false, true}) {
    multi(reverse ? "gru_sequence_reverse" : "gru_sequence",
          [reverse](Tape&, const Inputs& x) {
            return gru_sequence(x[0], GruWeights{x[1], x[2], x[3], x[4]}, reverse);
          },
          {{4, 3}, {9, 3}, {9, 3}, {1, 9}, {1, 9}}, 0.6);
  }
  multi("gru_cell",
        [](Tape&, const Inputs& x) { return gru_cell(x[0], x[1], GruWeights{x[2], x[3], x[4], x[5]}); },
        {{2, 3}, {2, 3}, {9, 3}, {9, 3}, {1, 9}, {1, 9}}, 0.6);
  unary("psd_from_factor", [](Var x) { return psd_from_factor(x, 1e-4); }, 4, 3, 1.0);
  multi("log_gaussian_grid",
        [](Tape&, const Inputs& x) { return log_gaussian_grid(x[0], psd_from_factor(x[1], 1e-4), x[2]); },
        {{3, 2}, {3, 3}, {4, 2}}, 1.0);
}

SentenceExample pipeline_sentence() {
  SentenceExample ex;
  ex.id = "gradcheck";
  ex.tokens = {"Alpha", "beta", "gamma"};
  ex.pos = {"NN", "NN", "VB"};
  ex.entities = {{0, 1, "A"}, {1, 1, "B"}};
  return ex;
}

void add_composites(Suite& suite) {
  const RunConfig cfg = gradcheck_pipeline_config();
  const SentenceExample ex = pipeline_sentence();
  const int L = static_cast<int>(ex.tokens.size());
  const Index d = cfg.model.dim;

  suite.add("encoder", 1, [&](std::uint64_t seed) {
    const auto vocab = encoder::Vocabularies::build({ex});
    ParamStore store;
    Rng rng(seed);
    encoder::Encoder enc(store, vocab, cfg.embeddings, cfg.model, rng, nullptr, nullptr);
    return param_gradcheck(store, [&](Tape& t) { return weighted_sum(t, enc.encode(t, ex), seed); });
  });

  suite.add("proposer", 1, [&](std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    proposer::Proposer prop(store, cfg.model, 2, cfg.ablation, rng);
    const Matrix H = rng.normal_matrix(L, d, 1.0);
    return param_gradcheck(store, [&](Tape& t) {
      proposer::Proposals p = prop(t, t.constant(H));
      return add(add(weighted_sum(t, p.Q, seed), weighted_sum(t, p.C, seed + 1)), weighted_sum(t, p.N, seed + 2));
    });
  });

  suite.add("regressor", 1, [&](std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    regressor::Regressor reg(store, cfg.model, 2, cfg.ablation, rng);
    const Matrix Q = rng.normal_matrix(L, d, 1.0);
    const Matrix C = rng.normal_matrix(L, 3, 1.0);
    const Matrix N = rng.uniform_matrix(L, 2, 0.0, L - 1.0);
    auto f = [&](Tape& t, const Inputs& x) {
      proposer::Proposals p = reg(t, {x[0], x[1], x[2]});
      return add(add(weighted_sum(t, p.Q, seed), weighted_sum(t, p.C, seed + 1)), weighted_sum(t, p.N, seed + 2));
    };
    GradCheckReport wrt_params = param_gradcheck(store, [&](Tape& t) {
      return f(t, {t.constant(Q), t.constant(C), t.constant(N)});
    });
    GradCheckReport wrt_inputs = finite_diff_gradcheck(f, {Q, C, N});
    return wrt_inputs.max_rel_error > wrt_params.max_rel_error ? wrt_inputs : wrt_params;
  });

  suite.add("head", 1, [&](std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    predictor::Head head(store, cfg.model, 2, rng);
    const Matrix Q = rng.normal_matrix(L, d, 1.0);
    const Matrix C = rng.normal_matrix(L, 3, 1.0);
    const Matrix N = rng.uniform_matrix(L, 2, 0.0, L - 1.0);
    const Matrix H = rng.normal_matrix(L, d, 1.0);
    auto f = [&](Tape& t, const Inputs& x) {
      return add(weighted_sum(t, head.category_distribution(t, x[0], x[1]), seed),
                 weighted_sum(t, head.span_distribution(t, x[0], x[2], x[3]), seed + 1));
    };
    GradCheckReport wrt_params = param_gradcheck(store, [&](Tape& t) {
      return f(t, {t.constant(Q), t.constant(C), t.constant(N), t.constant(H)});
    });
    GradCheckReport wrt_inputs = finite_diff_gradcheck(f, {Q, C, N, H});
    return wrt_inputs.max_rel_error > wrt_params.max_rel_error ? wrt_inputs : wrt_params;
  });

  suite.add("bipartite_loss", 1, [&](std::uint64_t seed) {
    Rng rng(seed);
    const Matrix pc_logits = rng.normal_matrix(L, 3, 1.0);
    const Matrix pn_logits = rng.normal_matrix(L, L * (L + 1) / 2, 1.0);
    const std::vector<trainer::TargetEntity> targets = {{0, 1, 0}, {1, 1, 1}};
    Tape probe(false);
    const Matrix p_c = softmax_lastdim(probe.constant(pc_logits)).value();
    const Matrix p_n = softmax_lastdim(probe.constant(pn_logits)).value();
    const trainer::Assignment a = trainer::assign(trainer::cost_matrix(p_c, p_n, targets, L));
    return finite_diff_gradcheck(
        [&](Tape&, const Inputs& x) {
          return trainer::bipartite_loss(log_softmax_lastdim(x[0]), log_softmax_lastdim(x[1]), a, targets, L);
        },
        {pc_logits, pn_logits});
  });

  suite.add("pipeline", 1, [&](std::uint64_t) {
    predictor::NerModel model(cfg, encoder::Vocabularies::build({ex}), nullptr, nullptr);
    Tape probe(false);
    const trainer::Assignment a = trainer::sentence_loss(probe, model, ex).assignment;
    const auto targets = trainer::targets_of(ex, model.vocab());
    return param_gradcheck(model.params(), [&](Tape& t) {
      const auto out = model.forward(t, ex);
      return trainer::bipartite_loss(out.log_pc, out.log_pn, a, targets, out.length);
    });
  });
}

}  // namespace

RunConfig gradcheck_pipeline_config() {
  RunConfig cfg;
  cfg.model.dim = 16;
  cfg.model.heads = 2;
  cfg.model.kernel_sizes = {2};
  cfg.model.regressor_layers = 2;
  cfg.model.mlp_hidden = 16;
  cfg.embeddings.char_dim = 4;
  cfg.embeddings.char_hidden = 3;
  cfg.embeddings.word_dim = 6;
  cfg.embeddings.pos_dim = 3;
  cfg.train.precision = "f64";
  cfg.train.seed = 31;
  return cfg;
}

std::vector<GradCheckEntry> run_gradcheck_suite(const std::function<void(const GradCheckEntry&)>& on_entry) {
  Suite suite(on_entry);
  add_primitives(suite);
  add_composites(suite);
  return suite.take();
}

}  // namespace nestor
