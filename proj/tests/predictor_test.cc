#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "nestor/error.h"
#include "nestor/numerics/gradcheck.h"
#include "nestor/predictor/model.h"
#include "oracles.h"

using namespace nestor;
using namespace nestor::predictor;
using namespace nestor::numerics;

namespace {

ModelConfig small_model(int dim) {
  ModelConfig m;
  m.dim = dim;
  m.heads = 2;
  m.regressor_layers = 1;
  m.mlp_hidden = dim;
  return m;
}

std::set<std::tuple<int, int, int>> triples(const std::vector<PredictedEntity>& entities) {
  std::set<std::tuple<int, int, int>> out;
  for (const auto& e : entities) out.emplace(e.start, e.end, e.type);
  return out;
}

SentenceExample labelled() {
  SentenceExample ex;
  ex.id = "x";
  ex.tokens = {"the", "big", "red", "dog"};
  ex.pos = {"DT", "JJ", "JJ", "NN"};
  ex.entities = {{1, 3, "ANIMAL"}, {2, 2, "COLOR"}};
  return ex;
}

}  // namespace

TEST_CASE("span support enumeration") {
  const auto s = span_support(4);
  CHECK(s.size() == 10);
  CHECK(s.front() == std::pair{0, 0});
  CHECK(s[4] == std::pair{1, 1});
  CHECK(s.back() == std::pair{3, 3});
  for (int L = 1; L <= 9; ++L) {
    const auto sup = span_support(L);
    for (std::size_t k = 0; k < sup.size(); ++k) {
      CHECK(support_index(sup[k].first, sup[k].second, L) == static_cast<int>(k));
    }
  }
  CHECK_THROWS_AS(support_index(2, 1, 4), DimensionError);
  CHECK_THROWS_AS(support_index(0, 4, 4), DimensionError);
}

TEST_CASE("category distribution") {
  ParamStore store;
  Rng rng(70);
  Head head(store, small_model(4), 2, rng);
  store.get("head.category.1.w").value.setZero();
  store.get("head.category.1.b").value.setZero();
  Tape t;
  const Matrix lp =
      head.category_distribution(t, t.constant(rng.normal_matrix(3, 4, 1.0)), t.constant(Matrix::Zero(3, 3))).value();
  CHECK((lp.array().exp() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);

  Matrix C = Matrix::Zero(3, 3);
  C(1, 2) = std::log(2.0);
  const Matrix lp2 = head.category_distribution(t, t.constant(rng.normal_matrix(3, 4, 1.0)), t.constant(C)).value();
  CHECK(std::exp(lp2(1, 2)) == doctest::Approx(0.5));
}

TEST_CASE("span distribution") {
  ParamStore store;
  Rng rng(71);
  Head head(store, small_model(4), 2, rng);

  SUBCASE("rows are distributions over the support") {
    Tape t;
    Matrix N(2, 2);
    N << 0.5, 1.5, 2, 3;
    const Matrix lp = head.span_distribution(t, t.constant(rng.normal_matrix(2, 4, 1.0)), t.constant(N),
                                             t.constant(rng.normal_matrix(4, 4, 1.0)))
                          .value();
    CHECK(lp.cols() == 10);
    CHECK((lp.array().exp().rowwise().sum() - 1.0).abs().maxCoeff() < 1e-12);
  }

  SUBCASE("a prior-only head peaks at the shifted center") {
    for (const char* name : {"head.start.w", "head.start.b", "head.end.w", "head.end.b", "head.prior.1.w"}) {
      store.get(name).value.setZero();
    }
    Matrix& bias = store.get("head.prior.1.b").value;
    bias.setZero();
    bias(0, 0) = 1.0;
    bias(0, 1) = 1.0;
    Tape t;
    Matrix N(1, 2);
    N << 1, 2;
    regressor::SpatialPrior prior;
    const Matrix lp = head.span_distribution(t, t.constant(rng.normal_matrix(1, 4, 1.0)), t.constant(N),
                                             t.constant(rng.normal_matrix(4, 4, 1.0)), &prior)
                          .value();
    Index arg = 0;
    lp.row(0).maxCoeff(&arg);
    CHECK(span_support(4)[arg] == std::pair{2, 3});
    CHECK(prior.mu.value() == Matrix{{2.0, 3.0}});
  }

  SUBCASE("gradient") {
    const Matrix Q = rng.normal_matrix(3, 4, 1.0);
    const Matrix H = rng.normal_matrix(3, 4, 1.0);
    const Matrix N = rng.uniform_matrix(3, 2, 0.0, 2.0);
    const Matrix C = rng.normal_matrix(3, 3, 1.0);
    const Matrix w = rng.normal_matrix(3, 6, 1.0);
    auto objective = [&](Tape& t, Var q, Var c, Var n, Var h) {
      Var lp = head.span_distribution(t, q, n, h);
      Var lc = head.category_distribution(t, q, c);
      return add(sum_all(mul(lp, t.constant(w))), pick_sum(lc, {0, 2, 1}));
    };
    auto params = param_gradcheck(store, [&](Tape& t) {
      return objective(t, t.constant(Q), t.constant(C), t.constant(N), t.constant(H));
    });
    CHECK(params.max_rel_error <= 1e-4);
    auto inputs = finite_diff_gradcheck(
        [&](Tape& t, const std::vector<Var>& v) { return objective(t, v[0], v[1], v[2], v[3]); }, {Q, C, N, H});
    CHECK(inputs.max_rel_error <= 1e-4);
  }
}

TEST_CASE("decode examples") {
  SUBCASE("emits when the joint score reaches the None probability") {
    Matrix p_c(2, 2), p_n(2, 3);
    p_c << 0.7, 0.3, 0.6, 0.4;
    p_n << 0.1, 0.8, 0.1, 1.0 / 3, 1.0 / 3, 1.0 / 3;
    const auto out = decode(p_c, p_n, 2);
    REQUIRE(out.size() == 1);
    CHECK(out[0].start == 0);
    CHECK(out[0].end == 1);
    CHECK(out[0].type == 0);
    CHECK(out[0].score == doctest::Approx(0.56));
  }

  SUBCASE("None as the most likely category suppresses the proposal") {
    Matrix p_c(1, 3), p_n(1, 1);
    p_c << 0.3, 0.2, 0.5;
    p_n << 1.0;
    CHECK(decode(p_c, p_n, 1).empty());
  }

  SUBCASE("the threshold is inclusive") {
    Matrix p_c(1, 2), p_n(1, 1);
    p_c << 0.5, 0.5;
    p_n << 1.0;
    CHECK(decode(p_c, p_n, 1).size() == 1);
  }

  SUBCASE("duplicates keep the highest score") {
    Matrix p_c(2, 2), p_n(2, 1);
    p_c << 0.9, 0.1, 0.6, 0.4;
    p_n << 1.0, 1.0;
    const auto out = decode(p_c, p_n, 1);
    REQUIRE(out.size() == 1);
    CHECK(out[0].score == doctest::Approx(0.9));
  }

  SUBCASE("ties pick the lowest category and the first span") {
    Matrix p_c(1, 3), p_n(1, 3);
    p_c << 0.45, 0.45, 0.1;
    p_n << 0.4, 0.2, 0.4;
    const auto out = decode(p_c, p_n, 2);
    REQUIRE(out.size() == 1);
    CHECK(out[0].type == 0);
    CHECK(out[0].start == 0);
    CHECK(out[0].end == 0);
  }

  SUBCASE("nested and overlapping outputs survive") {
    Matrix p_c(3, 3), p_n(3, 6);
    p_c << 0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.8, 0.1;
    p_n << 0, 0, 1, 0, 0, 0,  //
        0, 0, 0, 1, 0, 0,      //
        0, 0, 0, 0, 1, 0;
    const auto out = decode(p_c, p_n, 3);
    CHECK(triples(out) == std::set<std::tuple<int, int, int>>{{0, 2, 0}, {1, 1, 1}, {1, 2, 1}});
  }

  CHECK_THROWS_AS(decode(Matrix::Zero(2, 2), Matrix::Zero(2, 4), 2), DimensionError);
}

TEST_CASE("decode agrees with the brute-force reading") {
  Rng rng(72);
  for (int trial = 0; trial < 1000; ++trial) {
    const int L = 1 + static_cast<int>(rng.below(7));
    const int T = 1 + static_cast<int>(rng.below(4));
    const auto d = oracle::random_distributions(rng, L, T, trial % 2 == 0);
    CHECK(triples(decode(d.p_c, d.p_n, L)) == oracle::brute_force_decode(d.p_c, d.p_n, L));
  }
}

TEST_CASE("full model") {
  RunConfig cfg;
  cfg.model = small_model(8);
  cfg.model.kernel_sizes = {2};
  cfg.embeddings.char_dim = 4;
  cfg.embeddings.char_hidden = 3;
  cfg.embeddings.word_dim = 5;
  cfg.embeddings.pos_dim = 2;
  const auto ex = labelled();
  auto vocab = encoder::Vocabularies::build({ex});

  NerModel model(cfg, vocab, nullptr, nullptr);
  for (const auto* p : std::as_const(model.params()).all()) {
    CHECK((p->value.cast<float>().cast<double>() == p->value));
  }
  Tape t;
  const auto out = model.forward(t, ex, true);
  CHECK(out.length == 4);
  CHECK(out.log_pc.cols() == 3);
  CHECK(out.log_pn.cols() == 10);
  CHECK(out.pyramid.size() == 2);
  CHECK(out.layers.size() == 1);
  CHECK((out.log_pc.value().array().exp().rowwise().sum() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((out.log_pn.value().array().exp().rowwise().sum() - 1.0).abs().maxCoeff() < 1e-12);

  const auto pred = model.predict(ex);
  const Matrix p_c = out.log_pc.value().array().exp().matrix();
  const Matrix p_n = out.log_pn.value().array().exp().matrix();
  CHECK(triples(pred) == oracle::brute_force_decode(p_c, p_n, 4));

  NerModel again(cfg, vocab, nullptr, nullptr);
  Tape t2;
  CHECK(again.forward(t2, ex).log_pn.value() == out.log_pn.value());

  RunConfig f64 = cfg;
  f64.train.precision = "f64";
  NerModel wide(f64, vocab, nullptr, nullptr);
  bool any_wide = false;
  for (const auto* p : std::as_const(wide.params()).all()) {
    any_wide = any_wide || (p->value.cast<float>().cast<double>() != p->value);
  }
  CHECK(any_wide);
}
