#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nestor/error.h"
#include "nestor/numerics/gradcheck.h"
#include "nestor/proposer/proposer.h"

using namespace nestor;
using namespace nestor::proposer;
using namespace nestor::numerics;

namespace {

ModelConfig small_model(std::vector<int> kernels, int dim = 6) {
  ModelConfig m;
  m.dim = dim;
  m.heads = 1;
  m.kernel_sizes = std::move(kernels);
  m.mlp_hidden = dim;
  return m;
}

void zero_param(ParamStore& store, const std::string& name) { store.get(name).value.setZero(); }

// Sets the last boundary layer to zero so every membership score ties.
void flatten_boundary(ParamStore& store) {
  zero_param(store, "proposer.boundary.1.w");
  zero_param(store, "proposer.boundary.1.b");
}

Matrix layer_norm_rows(const Matrix& x, double eps = 1e-5) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + eps);
  }
  return out;
}

}  // namespace

TEST_CASE("span arithmetic examples") {
  CHECK(span_length(0, {2, 2}) == 1);
  CHECK(span_length(1, {2, 2}) == 2);
  CHECK(span_length(2, {2, 2}) == 3);
  CHECK(span_length(2, {2, 3}) == 4);
  CHECK(span_of_feature(0, 2, {2, 2}, 5) == std::pair{0, 2});
  CHECK(span_of_feature(2, 2, {2, 2}, 5) == std::pair{2, 4});
  CHECK(span_of_feature(1, 1, {2, 3}, 4) == std::pair{1, 2});
  CHECK_THROWS_AS(span_of_feature(3, 2, {2, 2}, 5), DimensionError);
  CHECK_THROWS_AS(span_of_feature(0, 2, {2, 2}, 2), DimensionError);
  CHECK_THROWS_AS(span_of_feature(0, 3, {2, 2}, 9), DimensionError);
  CHECK_THROWS_AS(span_of_feature(-1, 0, {2, 2}, 9), DimensionError);
  CHECK(num_levels(5, {2, 2}) == 3);
  CHECK(num_levels(2, {2, 2}) == 2);
  CHECK(num_levels(1, {2, 2}) == 1);
  CHECK(num_levels(7, {}) == 1);
}

TEST_CASE("forward pass level lengths") {
  ParamStore store;
  Rng rng(11);
  Proposer p(store, small_model({2, 2}), 2, AblationConfig{}, rng);
  Tape t;
  auto levels = p.forward_pass(t, t.constant(rng.normal_matrix(5, 6, 1.0)));
  REQUIRE(levels.size() == 3);
  CHECK(levels[0].length == 5);
  CHECK(levels[1].length == 4);
  CHECK(levels[2].length == 3);
  CHECK(levels[2].spans.front() == std::pair{0, 2});
  CHECK(levels[2].forward.cols() == 6);

  auto short_levels = p.forward_pass(t, t.constant(rng.normal_matrix(2, 6, 1.0)));
  REQUIRE(short_levels.size() == 2);
  CHECK(short_levels[0].length == 2);
  CHECK(short_levels[1].length == 1);
}

TEST_CASE("no kernels gives a single token level") {
  ParamStore store;
  Rng rng(12);
  Proposer p(store, small_model({}), 2, AblationConfig{}, rng);
  Tape t;
  std::vector<PyramidLevel> trace;
  Proposals out = p(t, t.constant(rng.normal_matrix(4, 6, 1.0)), &trace);
  CHECK(trace.size() == 1);
  // Each token only sees its own feature, so locations are exact.
  for (Index i = 0; i < 4; ++i) {
    CHECK(out.N.value()(i, 0) == doctest::Approx(static_cast<double>(i)));
    CHECK(out.N.value()(i, 1) == doctest::Approx(static_cast<double>(i)));
  }
  CHECK(out.Q.rows() == 4);
  CHECK(out.C.cols() == 3);
}

TEST_CASE("backward pass reduces to the pooled residual when the mixer is zero") {
  ParamStore store;
  Rng rng(13);
  Proposer p(store, small_model({2, 2}), 2, AblationConfig{}, rng);
  for (int l = 0; l <= 2; ++l) {
    zero_param(store, "proposer.level" + std::to_string(l) + ".bwd_out.w");
    zero_param(store, "proposer.level" + std::to_string(l) + ".bwd_out.b");
  }
  Tape t;
  const Matrix Hm = rng.normal_matrix(5, 6, 1.0);
  Var H = t.constant(Hm);
  auto levels = p.forward_pass(t, H);
  p.backward_pass(t, H, levels);
  for (const auto& level : levels) {
    const int v = level.span_length;
    Matrix pooled(level.length, 6);
    for (Index i = 0; i < level.length; ++i) pooled.row(i) = Hm.middleRows(i, v).colwise().mean();
    const Matrix expect = layer_norm_rows(pooled);
    CHECK((level.refined.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backward block ablation keeps forward features") {
  ParamStore store;
  Rng rng(14);
  AblationConfig ab;
  ab.backward_block = false;
  Proposer p(store, small_model({2, 2}), 2, ab, rng);
  CHECK(store.find("proposer.level0.bwd_out.w") == nullptr);
  Tape t;
  std::vector<PyramidLevel> trace;
  p(t, t.constant(rng.normal_matrix(5, 6, 1.0)), &trace);
  for (const auto& level : trace) CHECK(level.refined.value() == level.forward.value());
}

TEST_CASE("membership fusion with tied scores") {
  SUBCASE("kernels [2], L = 3") {
    ParamStore store;
    Rng rng(15);
    Proposer p(store, small_model({2}), 2, AblationConfig{}, rng);
    flatten_boundary(store);
    Tape t;
    Proposals out = p(t, t.constant(rng.normal_matrix(3, 6, 1.0)));
    const Matrix& N = out.N.value();
    // Token 0: {(0,0), (0,1)}; token 1: {(1,1), (0,1), (1,2)}; token 2: {(2,2), (1,2)}.
    CHECK(N(0, 0) == doctest::Approx(0.0));
    CHECK(N(0, 1) == doctest::Approx(0.5));
    CHECK(N(1, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(N(1, 1) == doctest::Approx(4.0 / 3.0));
    CHECK(N(2, 0) == doctest::Approx(1.5));
    CHECK(N(2, 1) == doctest::Approx(2.0));
  }
  SUBCASE("kernels [2, 2], L = 3") {
    ParamStore store;
    Rng rng(16);
    Proposer p(store, small_model({2, 2}), 2, AblationConfig{}, rng);
    flatten_boundary(store);
    Tape t;
    Proposals out = p(t, t.constant(rng.normal_matrix(3, 6, 1.0)));
    const Matrix& N = out.N.value();
    // Token 1 is covered by (1,1), (0,1), (1,2) and (0,2).
    CHECK(N(1, 0) == doctest::Approx(0.5));
    CHECK(N(1, 1) == doctest::Approx(1.5));
    CHECK(N(0, 1) == doctest::Approx(1.0));
  }
}

TEST_CASE("fused locations stay inside the covering hull") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParamStore store;
    Rng rng(100 + seed);
    const std::vector<int> kernels = seed % 2 ? std::vector<int>{2, 3} : std::vector<int>{2, 2, 2};
    Proposer p(store, small_model(kernels), 3, AblationConfig{}, rng);
    const int L = 1 + static_cast<int>(rng.below(9));
    Tape t;
    Proposals out = p(t, t.constant(rng.normal_matrix(L, 6, 2.0)));
    const Matrix& N = out.N.value();
    for (int j = 0; j < L; ++j) {
      CHECK(N(j, 0) >= -1e-12);
      CHECK(N(j, 0) <= j + 1e-12);
      CHECK(N(j, 1) >= j - 1e-12);
      CHECK(N(j, 1) <= L - 1 + 1e-12);
    }
  }
}

TEST_CASE("proposer gradients match central differences") {
  ParamStore store;
  Rng rng(43);
  Proposer p(store, small_model({2, 2}, 4), 2, AblationConfig{}, rng);
  const Matrix Hm = rng.normal_matrix(4, 4, 1.0);
  const Matrix wq = rng.normal_matrix(4, 4, 1.0);
  const Matrix wc = rng.normal_matrix(4, 3, 1.0);
  const Matrix wn = rng.normal_matrix(4, 2, 1.0);
  auto objective = [&](Tape& t, Var H) {
    Proposals out = p(t, H);
    return add(add(sum_all(mul(out.Q, t.constant(wq))), sum_all(mul(out.C, t.constant(wc)))),
               sum_all(mul(out.N, t.constant(wn))));
  };
  auto params = param_gradcheck(store, [&](Tape& t) { return objective(t, t.constant(Hm)); });
  CHECK(params.coordinates > 0);
  CHECK(params.max_rel_error <= 1e-4);
  auto input = finite_diff_gradcheck([&](Tape& t, Var H) { return objective(t, H); }, Hm);
  CHECK(input.max_rel_error <= 1e-4);
}

TEST_CASE("rejects invalid kernels") {
  ParamStore store;
  Rng rng(1);
  CHECK_THROWS_AS(Proposer(store, small_model({2, 0}), 2, AblationConfig{}, rng), ConfigError);
}
