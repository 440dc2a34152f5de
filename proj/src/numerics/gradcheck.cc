#include "nestor/numerics/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "nestor/error.h"

namespace nestor::numerics {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Matrix>& inputs) {
  Tape tape(/*grad_enabled=*/false);
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(tape.constant(m));
  const double v = f(tape, leaves).item();
  if (!std::isfinite(v)) throw NumericError("gradient check: f(x) is not finite");
  return v;
}

void record(GradCheckReport& report, const std::string& input, Index offset, double analytic,
            double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  const double err = std::abs(analytic - numeric) / denom;
  ++report.coordinates;
  if (err > report.max_rel_error || report.worst_offset < 0) {
    report.max_rel_error = std::max(report.max_rel_error, err);
    report.worst_input = input;
    report.worst_offset = offset;
    report.worst_analytic = analytic;
    report.worst_numeric = numeric;
  }
}

}  // namespace

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("numeric_gradient: f is not finite near x");
    }
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

GradCheckReport finite_diff_gradcheck(const ScalarFn& f, const std::vector<Matrix>& inputs,
                                      double h) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
  Var out = f(tape, leaves);
  if (!std::isfinite(out.item())) throw NumericError("gradient check: f(x) is not finite");
  tape.backward(out);

  GradCheckReport report;
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix& analytic = leaves[k].grad();
    for (Index i = 0; i < probe[k].size(); ++i) {
      const double orig = probe[k].data()[i];
      probe[k].data()[i] = orig + h;
      const double up = evaluate(f, probe);
      probe[k].data()[i] = orig - h;
      const double down = evaluate(f, probe);
      probe[k].data()[i] = orig;
      const double a = analytic.size() == 0 ? 0.0 : analytic.data()[i];
      record(report, "input " + std::to_string(k), i, a, (up - down) / (2.0 * h));
    }
  }
  return report;
}

GradCheckReport finite_diff_gradcheck(const std::function<Var(Tape&, Var)>& f, const Matrix& x,
                                      double h) {
  return finite_diff_gradcheck(
      [&f](Tape& t, const std::vector<Var>& in) { return f(t, in[0]); }, std::vector<Matrix>{x}, h);
}

GradCheckReport param_gradcheck(ParamStore& store, const std::function<Var(Tape&)>& f, double h,
                                Index max_coords_per_param) {
  store.zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(out.item())) throw NumericError("gradient check: f(theta) is not finite");
    tape.backward(out);
    tape.accumulate_param_grads();
  }
  auto eval = [&f]() {
    Tape tape(/*grad_enabled=*/false);
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw NumericError("gradient check: f(theta) is not finite");
    return v;
  };

  GradCheckReport report;
  for (Param* p : store.all()) {
    if (!p->trainable) continue;
    const Index n = p->value.size();
    Index stride = 1;
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      stride = (n + max_coords_per_param - 1) / max_coords_per_param;
    }
    for (Index i = 0; i < n; i += stride) {
      double* slot = p->value.data() + i;
      const double orig = *slot;
      *slot = orig + h;
      const double up = eval();
      *slot = orig - h;
      const double down = eval();
      *slot = orig;
      record(report, p->name, i, p->grad.data()[i], (up - down) / (2.0 * h));
    }
  }
  return report;
}

}  // namespace nestor::numerics
