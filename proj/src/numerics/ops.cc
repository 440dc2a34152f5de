#include "nestor/numerics/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "nestor/error.h"

namespace nestor::numerics {
namespace {

std::string g_fault_op;
double g_fault_factor = 1.0;

// Multiplier applied by op `name` to the gradient it propagates.
inline double fault(const char* name) {
  if (g_fault_op.empty()) return 1.0;
  return g_fault_op == name ? g_fault_factor : 1.0;
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

Tape& tape_of(Var v) {
  if (!v.valid()) throw InvariantError("op on an empty variable");
  return *v.tape();
}

// Adds `g` into the gradient of `v` if it needs one.
template <typename Expr>
inline void accumulate(Tape& t, Var v, const Expr& g) {
  if (t.requires_grad(v.id())) t.grad_slot(v.id()) += g;
}

}  // namespace

namespace testing {
void inject_gradient_fault(std::string_view op_name, double factor) {
  g_fault_op = std::string(op_name);
  g_fault_factor = factor;
}
}  // namespace testing

void check_finite(Var v, std::string_view what) {
  if (!all_finite(v.value())) {
    throw NumericError("non-finite value in " + std::string(what));
  }
}

// --- elementwise and structural -------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape("add", a.value(), b.value());
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape("sub", a.value(), b.value());
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape("mul", a.value(), b.value());
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g.cwiseProduct(t.value(b.id())));
    accumulate(t, b, g.cwiseProduct(t.value(a.id())));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, {a}, [a, s](Tape& t, int self) {
    accumulate(t, a, t.grad(self) * s);
  });
}

Var add_row(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row: cannot broadcast " + shape_string(bv) + " over " +
                         shape_string(av));
  }
  Matrix out = av.rowwise() + bv.row(0);
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g.colwise().sum());
  });
}

Var broadcast_rows(Var a, Index rows) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (av.rows() != 1) throw DimensionError("broadcast_rows: needs a row, got " + shape_string(av));
  Matrix out = av.replicate(rows, 1);
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    accumulate(t, a, t.grad(self).colwise().sum());
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(av) + " x " + shape_string(bv));
  }
  return t.record(av * bv, {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id())) t.grad_slot(a.id()).noalias() += g * t.value(b.id()).transpose();
    if (t.requires_grad(b.id())) t.grad_slot(b.id()).noalias() += t.value(a.id()).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: " + shape_string(av) + " x " + shape_string(bv) + "^T");
  }
  return t.record(av * bv.transpose(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id())) t.grad_slot(a.id()).noalias() += g * t.value(b.id());
    if (t.requires_grad(b.id())) t.grad_slot(b.id()).noalias() += g.transpose() * t.value(a.id());
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().transpose();
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    accumulate(t, a, t.grad(self).transpose());
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().value()) +
                           " vs " + shape_string(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Index at = 0;
    for (const Var& p : parts) {
      const Index c = t.value(p.id()).cols();
      accumulate(t, p, g.middleCols(at, c));
      at += c;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts.front().value()) + " vs " + shape_string(p.value()));
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Index at = 0;
    for (const Var& p : parts) {
      const Index r = t.value(p.id()).rows();
      accumulate(t, p, g.middleRows(at, r));
      at += r;
    }
  });
}

Var slice_rows(Var a, Index start, Index count) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_string(av));
  }
  Matrix out = av.middleRows(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape& t, int self) {
    if (t.requires_grad(a.id())) t.grad_slot(a.id()).middleRows(start, count) += t.grad(self);
  });
}

Var slice_cols(Var a, Index start, Index count) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_string(av));
  }
  Matrix out = av.middleCols(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape& t, int self) {
    if (t.requires_grad(a.id())) t.grad_slot(a.id()).middleCols(start, count) += t.grad(self);
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  Tape& t = tape_of(table);
  const Matrix& tv = table.value();
  Matrix out(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " out of " +
                           shape_string(tv));
    }
    out.row(static_cast<Index>(i)) = tv.row(ids[i]);
  }
  return t.record(std::move(out), {table}, [table, ids](Tape& t, int self) {
    if (!t.requires_grad(table.id())) return;
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad_slot(table.id());
    for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += g.row(static_cast<Index>(i));
  });
}

Var gather_cols(Var a, const std::vector<int>& cols) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix out(av.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= av.cols()) {
      throw DimensionError("gather_cols: column " + std::to_string(cols[k]) + " out of " +
                           shape_string(av));
    }
    out.col(static_cast<Index>(k)) = av.col(cols[k]);
  }
  return t.record(std::move(out), {a}, [a, cols](Tape& t, int self) {
    if (!t.requires_grad(a.id())) return;
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_slot(a.id());
    for (std::size_t k = 0; k < cols.size(); ++k) ga.col(cols[k]) += g.col(static_cast<Index>(k));
  });
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    if (!t.requires_grad(a.id())) return;
    Matrix& ga = t.grad_slot(a.id());
    ga.colwise() += t.grad(self).col(0);
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    if (!t.requires_grad(a.id())) return;
    t.grad_slot(a.id()).array() += t.grad(self)(0, 0);
  });
}

Var pick_sum(Var a, const std::vector<int>& cols) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (static_cast<Index>(cols.size()) != av.rows()) {
    throw DimensionError("pick_sum: " + std::to_string(cols.size()) + " indices for " +
                         shape_string(av));
  }
  Matrix out(1, 1);
  out(0, 0) = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0) continue;
    if (cols[i] >= av.cols()) {
      throw DimensionError("pick_sum: column " + std::to_string(cols[i]) + " out of " +
                           shape_string(av));
    }
    out(0, 0) += av(static_cast<Index>(i), cols[i]);
  }
  return t.record(std::move(out), {a}, [a, cols](Tape& t, int self) {
    if (!t.requires_grad(a.id())) return;
    const double g = t.grad(self)(0, 0);
    Matrix& ga = t.grad_slot(a.id());
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i] >= 0) ga(static_cast<Index>(i), cols[i]) += g;
    }
  });
}

// --- affine -----------------------------------------------------------------

Var linear_affine(Var x, Var W, Var b) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const Matrix& wv = W.value();
  const Matrix& bv = b.value();
  if (xv.cols() != wv.cols()) {
    throw DimensionError("linear_affine: input " + shape_string(xv) + " vs weight " +
                         shape_string(wv));
  }
  if (bv.rows() != 1 || bv.cols() != wv.rows()) {
    throw DimensionError("linear_affine: bias " + shape_string(bv) + " vs weight " +
                         shape_string(wv));
  }
  Matrix out(xv.rows(), wv.rows());
  out.noalias() = xv * wv.transpose();
  out.rowwise() += bv.row(0);
  return t.record(std::move(out), {x, W, b}, [x, W, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const double f = fault("linear_affine");
    if (t.requires_grad(x.id())) t.grad_slot(x.id()).noalias() += f * (g * t.value(W.id()));
    if (t.requires_grad(W.id())) t.grad_slot(W.id()).noalias() += g.transpose() * t.value(x.id());
    if (t.requires_grad(b.id())) t.grad_slot(b.id()) += g.colwise().sum();
  });
}

// --- activations ------------------------------------------------------------

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    accumulate(t, a, t.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().tanh().matrix();
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const double f = fault("tanh");
    accumulate(t, a, f * t.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var gelu(Var a) {
  Tape& t = tape_of(a);
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Matrix out = a.value().unaryExpr(
      [inv_sqrt2](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); });
  return t.record(std::move(out), {a}, [a, inv_sqrt2](Tape& t, int self) {
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    const double f = fault("gelu");
    Matrix d = t.value(a.id()).unaryExpr([inv_sqrt2, inv_sqrt_2pi](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      return cdf + v * pdf;
    });
    accumulate(t, a, f * t.grad(self).cwiseProduct(d));
  });
}

// --- normalization ----------------------------------------------------------

namespace {

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

}  // namespace

Var softmax_lastdim(Var a) {
  Tape& t = tape_of(a);
  if (a.cols() < 1) throw DimensionError("softmax_lastdim: empty rows " + shape_string(a.value()));
  return t.record(softmax_rows(a.value()), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    const double f = fault("softmax_lastdim");
    Matrix gy = g.cwiseProduct(y);
    Eigen::VectorXd dot = gy.rowwise().sum();
    Matrix ga = gy - (y.array().colwise() * dot.array()).matrix();
    accumulate(t, a, f * ga);
  });
}

Var log_softmax_lastdim(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (x.cols() < 1) throw DimensionError("log_softmax_lastdim: empty rows " + shape_string(x));
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Eigen::VectorXd gs = g.rowwise().sum();
    Matrix ga = g - (y.array().exp().colwise() * gs.array()).matrix();
    accumulate(t, a, ga);
  });
}

Var masked_softmax_lastdim(Var a, const std::vector<std::vector<bool>>& mask) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (static_cast<Index>(mask.size()) != x.rows()) {
    throw DimensionError("masked_softmax_lastdim: mask rows " + std::to_string(mask.size()) +
                         " vs " + shape_string(x));
  }
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const auto& m = mask[static_cast<std::size_t>(i)];
    if (static_cast<Index>(m.size()) != x.cols()) {
      throw DimensionError("masked_softmax_lastdim: mask width " + std::to_string(m.size()) +
                           " vs " + shape_string(x));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < x.cols(); ++j) {
      if (m[static_cast<std::size_t>(j)]) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) {
      throw InvariantError("masked_softmax_lastdim: row " + std::to_string(i) +
                           " has no admissible entry");
    }
    double z = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (m[static_cast<std::size_t>(j)]) {
        y(i, j) = std::exp(x(i, j) - mx);
        z += y(i, j);
      }
    }
    y.row(i) /= z;
  }
  return t.record(std::move(y), {a}, [a](Tape& t, int self) {
    // Masked entries have y = 0, so the ordinary softmax Jacobian already
    // gives them zero gradient.
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix gy = g.cwiseProduct(y);
    Eigen::VectorXd dot = gy.rowwise().sum();
    accumulate(t, a, gy - (y.array().colwise() * dot.array()).matrix());
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const Index d = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw DimensionError("layer_norm: input " + shape_string(xv) + " vs gamma " +
                         shape_string(gamma.value()) + " / beta " + shape_string(beta.value()));
  }
  Matrix xhat(xv.rows(), d);
  Eigen::VectorXd inv_std(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    const double f = fault("layer_norm");
                    if (t.requires_grad(gamma.id())) {
                      t.grad_slot(gamma.id()) += g.cwiseProduct(xhat).colwise().sum();
                    }
                    if (t.requires_grad(beta.id())) t.grad_slot(beta.id()) += g.colwise().sum();
                    if (!t.requires_grad(x.id())) return;
                    Matrix gx = g.array().rowwise() * t.value(gamma.id()).row(0).array();
                    Matrix& out = t.grad_slot(x.id());
                    for (Index i = 0; i < gx.rows(); ++i) {
                      const double m1 = gx.row(i).mean();
                      const double m2 = gx.row(i).dot(xhat.row(i)) / static_cast<double>(gx.cols());
                      out.row(i) += f * inv_std(i) *
                                    (gx.row(i).array() - m1 - xhat.row(i).array() * m2).matrix();
                    }
                  });
}

// --- pooling ----------------------------------------------------------------

Var mean_pool(Var seq) {
  Tape& t = tape_of(seq);
  const Matrix& s = seq.value();
  if (s.rows() < 1) throw DimensionError("mean_pool: empty sequence " + shape_string(s));
  Matrix out = s.colwise().mean();
  return t.record(std::move(out), {seq}, [seq](Tape& t, int self) {
    if (!t.requires_grad(seq.id())) return;
    Matrix& gs = t.grad_slot(seq.id());
    const double inv = 1.0 / static_cast<double>(gs.rows());
    gs.rowwise() += inv * t.grad(self).row(0);
  });
}

Var mean_pool(Var seq, Index window) {
  Tape& t = tape_of(seq);
  const Matrix& s = seq.value();
  if (s.rows() < 1) throw DimensionError("mean_pool: empty sequence " + shape_string(s));
  if (window < 1 || window > s.rows()) {
    throw DimensionError("mean_pool: window " + std::to_string(window) + " for " + shape_string(s));
  }
  const Index n = s.rows() - window + 1;
  const double inv = 1.0 / static_cast<double>(window);
  Matrix out(n, s.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = s.middleRows(i, window).colwise().sum() * inv;
  return t.record(std::move(out), {seq}, [seq, window, inv](Tape& t, int self) {
    if (!t.requires_grad(seq.id())) return;
    const Matrix& g = t.grad(self);
    Matrix& gs = t.grad_slot(seq.id());
    for (Index i = 0; i < g.rows(); ++i) {
      for (Index w = 0; w < window; ++w) gs.row(i + w) += inv * g.row(i);
    }
  });
}

// --- convolution ------------------------------------------------------------

namespace {

// Row i of the result is [x_i, x_{i+1}, ..., x_{i+k-1}].
Matrix im2col(const Matrix& x, Index k) {
  const Index n = x.rows() - k + 1;
  const Index d = x.cols();
  Matrix cols(n, k * d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) cols.block(i, j * d, 1, d) = x.row(i + j);
  }
  return cols;
}

// Inverse scatter of im2col: out_{i+j} += cols(i, block j).
Matrix col2im(const Matrix& cols, Index k, Index d) {
  const Index n = cols.rows();
  Matrix out = Matrix::Zero(n + k - 1, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) out.row(i + j) += cols.block(i, j * d, 1, d);
  }
  return out;
}

}  // namespace

Var conv1d_valid(Var seq, Index k, Var W, Var b) {
  Tape& t = tape_of(seq);
  const Matrix& x = seq.value();
  const Matrix& wv = W.value();
  if (k < 1) throw DimensionError("conv1d_valid: kernel size must be >= 1");
  if (x.rows() < k) {
    throw LevelTooShortError("conv1d_valid: sequence length " + std::to_string(x.rows()) +
                             " shorter than kernel " + std::to_string(k));
  }
  if (wv.cols() != k * x.cols()) {
    throw DimensionError("conv1d_valid: input " + shape_string(x) + " with k=" +
                         std::to_string(k) + " vs weight " + shape_string(wv));
  }
  if (b.rows() != 1 || b.cols() != wv.rows()) {
    throw DimensionError("conv1d_valid: bias " + shape_string(b.value()) + " vs weight " +
                         shape_string(wv));
  }
  Matrix cols = im2col(x, k);
  Matrix out(cols.rows(), wv.rows());
  out.noalias() = cols * wv.transpose();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), {seq, W, b},
                  [seq, W, b, k, cols = std::move(cols)](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    if (t.requires_grad(W.id())) t.grad_slot(W.id()).noalias() += g.transpose() * cols;
                    if (t.requires_grad(b.id())) t.grad_slot(b.id()) += g.colwise().sum();
                    if (t.requires_grad(seq.id())) {
                      Matrix gcols = g * t.value(W.id());
                      t.grad_slot(seq.id()) += col2im(gcols, k, t.value(seq.id()).cols());
                    }
                  });
}

Var tconv1d(Var seq, Index k, Var W, Var b) {
  Tape& t = tape_of(seq);
  const Matrix& y = seq.value();
  const Matrix& wv = W.value();
  if (k < 1) throw DimensionError("tconv1d: kernel size must be >= 1");
  if (y.rows() < 1) throw DimensionError("tconv1d: empty sequence " + shape_string(y));
  if (wv.rows() != y.cols() || wv.cols() % k != 0) {
    throw DimensionError("tconv1d: input " + shape_string(y) + " with k=" + std::to_string(k) +
                         " vs weight " + shape_string(wv));
  }
  const Index d_out = wv.cols() / k;
  if (b.rows() != 1 || b.cols() != d_out) {
    throw DimensionError("tconv1d: bias " + shape_string(b.value()) + " vs weight " +
                         shape_string(wv));
  }
  Matrix yw = y * wv;
  Matrix out = col2im(yw, k, d_out);
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), {seq, W, b}, [seq, W, b, k, d_out](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix gcols = im2col(g, k);
    if (t.requires_grad(W.id())) t.grad_slot(W.id()).noalias() += t.value(seq.id()).transpose() * gcols;
    if (t.requires_grad(b.id())) t.grad_slot(b.id()) += g.colwise().sum();
    if (t.requires_grad(seq.id())) t.grad_slot(seq.id()).noalias() += gcols * t.value(W.id()).transpose();
  });
}

// --- recurrent --------------------------------------------------------------

namespace {

void check_gru_weights(const char* op, Index in, const GruWeights& w) {
  const Matrix& wih = w.w_ih.value();
  const Matrix& whh = w.w_hh.value();
  const Index h3 = whh.rows();
  if (h3 % 3 != 0 || whh.cols() * 3 != h3) {
    throw DimensionError(std::string(op) + ": recurrent weight " + shape_string(whh) +
                         " is not 3h x h");
  }
  if (wih.rows() != h3 || wih.cols() != in) {
    throw DimensionError(std::string(op) + ": input weight " + shape_string(wih) +
                         " vs input width " + std::to_string(in) + " and 3h=" + std::to_string(h3));
  }
  if (w.b_ih.rows() != 1 || w.b_ih.cols() != h3 || w.b_hh.rows() != 1 || w.b_hh.cols() != h3) {
    throw DimensionError(std::string(op) + ": biases " + shape_string(w.b_ih.value()) + " / " +
                         shape_string(w.b_hh.value()) + " vs 3h=" + std::to_string(h3));
  }
}

inline double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Var gru_sequence(Var seq, const GruWeights& w, bool reverse) {
  Tape& t = tape_of(seq);
  const Matrix& x = seq.value();
  if (x.rows() < 1) throw DimensionError("gru_sequence: empty input sequence");
  check_gru_weights("gru_sequence", x.cols(), w);
  const Index L = x.rows();
  const Index h = w.w_hh.value().cols();

  Matrix gi(L, 3 * h);
  gi.noalias() = x * w.w_ih.value().transpose();
  gi.rowwise() += w.b_ih.value().row(0);

  Matrix out(L, h);
  // Saved activations per step (indexed by position).
  Matrix r(L, h), z(L, h), n(L, h), ghn(L, h), hprev(L, h);
  Eigen::RowVectorXd state = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd gh(3 * h);
  const Matrix& whh = w.w_hh.value();
  const Matrix& bhh = w.b_hh.value();
  for (Index s = 0; s < L; ++s) {
    const Index p = reverse ? L - 1 - s : s;
    gh.noalias() = state * whh.transpose();
    gh += bhh.row(0);
    hprev.row(p) = state;
    for (Index j = 0; j < h; ++j) {
      const double rj = sigm(gi(p, j) + gh(j));
      const double zj = sigm(gi(p, h + j) + gh(h + j));
      const double nj = std::tanh(gi(p, 2 * h + j) + rj * gh(2 * h + j));
      r(p, j) = rj;
      z(p, j) = zj;
      n(p, j) = nj;
      ghn(p, j) = gh(2 * h + j);
      state(j) = (1.0 - zj) * nj + zj * state(j);
    }
    out.row(p) = state;
  }

  const Var w_ih = w.w_ih, w_hh = w.w_hh, b_ih = w.b_ih, b_hh = w.b_hh;
  return t.record(
      std::move(out), {seq, w_ih, w_hh, b_ih, b_hh},
      [seq, w_ih, w_hh, b_ih, b_hh, reverse, h, r = std::move(r), z = std::move(z),
       n = std::move(n), ghn = std::move(ghn), hprev = std::move(hprev)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Index L = g.rows();
        const Matrix& whh = t.value(w_hh.id());
        const double f = fault("gru_sequence");
        Matrix dgi(L, 3 * h);
        Matrix dgh_all(L, 3 * h);
        Eigen::RowVectorXd carry = Eigen::RowVectorXd::Zero(h);
        Eigen::RowVectorXd dgh(3 * h);
        for (Index s = L - 1; s >= 0; --s) {
          const Index p = reverse ? L - 1 - s : s;
          Eigen::RowVectorXd dh = g.row(p) + carry;
          for (Index j = 0; j < h; ++j) {
            const double zj = z(p, j), nj = n(p, j), rj = r(p, j);
            const double dn = dh(j) * (1.0 - zj);
            const double dz = dh(j) * (hprev(p, j) - nj);
            const double dn_pre = dn * (1.0 - nj * nj);
            const double dr = dn_pre * ghn(p, j);
            const double dr_pre = dr * rj * (1.0 - rj);
            const double dz_pre = dz * zj * (1.0 - zj);
            dgi(p, j) = dr_pre;
            dgi(p, h + j) = dz_pre;
            dgi(p, 2 * h + j) = dn_pre;
            dgh(j) = dr_pre;
            dgh(h + j) = dz_pre;
            dgh(2 * h + j) = dn_pre * rj;
            carry(j) = dh(j) * zj;
          }
          carry.noalias() += dgh * whh;
          dgh_all.row(p) = dgh;
        }
        if (t.requires_grad(w_hh.id())) t.grad_slot(w_hh.id()).noalias() += dgh_all.transpose() * hprev;
        if (t.requires_grad(b_hh.id())) t.grad_slot(b_hh.id()) += dgh_all.colwise().sum();
        if (t.requires_grad(w_ih.id())) {
          t.grad_slot(w_ih.id()).noalias() += dgi.transpose() * t.value(seq.id());
        }
        if (t.requires_grad(b_ih.id())) t.grad_slot(b_ih.id()) += dgi.colwise().sum();
        if (t.requires_grad(seq.id())) {
          t.grad_slot(seq.id()).noalias() += f * (dgi * t.value(w_ih.id()));
        }
      });
}

Var gru_cell(Var x, Var hid, const GruWeights& w) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const Matrix& hv = hid.value();
  check_gru_weights("gru_cell", xv.cols(), w);
  const Index h = w.w_hh.value().cols();
  if (hv.rows() != xv.rows() || hv.cols() != h) {
    throw DimensionError("gru_cell: state " + shape_string(hv) + " vs input " +
                         shape_string(xv) + " and hidden " + std::to_string(h));
  }
  const Index R = xv.rows();
  Matrix gi(R, 3 * h), gh(R, 3 * h);
  gi.noalias() = xv * w.w_ih.value().transpose();
  gi.rowwise() += w.b_ih.value().row(0);
  gh.noalias() = hv * w.w_hh.value().transpose();
  gh.rowwise() += w.b_hh.value().row(0);

  Matrix r(R, h), z(R, h), n(R, h), out(R, h);
  for (Index i = 0; i < R; ++i) {
    for (Index j = 0; j < h; ++j) {
      const double rj = sigm(gi(i, j) + gh(i, j));
      const double zj = sigm(gi(i, h + j) + gh(i, h + j));
      const double nj = std::tanh(gi(i, 2 * h + j) + rj * gh(i, 2 * h + j));
      r(i, j) = rj;
      z(i, j) = zj;
      n(i, j) = nj;
      out(i, j) = (1.0 - zj) * nj + zj * hv(i, j);
    }
  }
  Matrix ghn = gh.rightCols(h);
  const Var w_ih = w.w_ih, w_hh = w.w_hh, b_ih = w.b_ih, b_hh = w.b_hh;
  return t.record(
      std::move(out), {x, hid, w_ih, w_hh, b_ih, b_hh},
      [x, hid, w_ih, w_hh, b_ih, b_hh, h, r = std::move(r), z = std::move(z), n = std::move(n),
       ghn = std::move(ghn)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& hv = t.value(hid.id());
        const Index R = g.rows();
        Matrix dgi(R, 3 * h), dgh(R, 3 * h), dh_direct(R, h);
        for (Index i = 0; i < R; ++i) {
          for (Index j = 0; j < h; ++j) {
            const double zj = z(i, j), nj = n(i, j), rj = r(i, j);
            const double dn = g(i, j) * (1.0 - zj);
            const double dz = g(i, j) * (hv(i, j) - nj);
            const double dn_pre = dn * (1.0 - nj * nj);
            const double dr_pre = dn_pre * ghn(i, j) * rj * (1.0 - rj);
            const double dz_pre = dz * zj * (1.0 - zj);
            dgi(i, j) = dr_pre;
            dgi(i, h + j) = dz_pre;
            dgi(i, 2 * h + j) = dn_pre;
            dgh(i, j) = dr_pre;
            dgh(i, h + j) = dz_pre;
            dgh(i, 2 * h + j) = dn_pre * rj;
            dh_direct(i, j) = g(i, j) * zj;
          }
        }
        const double f = fault("gru_cell");
        if (t.requires_grad(x.id())) t.grad_slot(x.id()).noalias() += f * (dgi * t.value(w_ih.id()));
        if (t.requires_grad(hid.id())) {
          Matrix& gh_slot = t.grad_slot(hid.id());
          gh_slot += dh_direct;
          gh_slot.noalias() += dgh * t.value(w_hh.id());
        }
        if (t.requires_grad(w_ih.id())) t.grad_slot(w_ih.id()).noalias() += dgi.transpose() * t.value(x.id());
        if (t.requires_grad(w_hh.id())) t.grad_slot(w_hh.id()).noalias() += dgh.transpose() * hv;
        if (t.requires_grad(b_ih.id())) t.grad_slot(b_ih.id()) += dgi.colwise().sum();
        if (t.requires_grad(b_hh.id())) t.grad_slot(b_hh.id()) += dgh.colwise().sum();
      });
}

// --- spatial prior ----------------------------------------------------------

Var psd_from_factor(Var raw, double eps) {
  Tape& t = tape_of(raw);
  const Matrix& v = raw.value();
  if (v.cols() != 3) throw DimensionError("psd_from_factor: expected R x 3, got " + shape_string(v));
  Matrix out(v.rows(), 3);
  for (Index i = 0; i < v.rows(); ++i) {
    const double a = v(i, 0), b = v(i, 1), c = v(i, 2);
    out(i, 0) = a * a + eps;
    out(i, 1) = a * b;
    out(i, 2) = b * b + c * c + eps;
  }
  return t.record(std::move(out), {raw}, [raw](Tape& t, int self) {
    if (!t.requires_grad(raw.id())) return;
    const Matrix& g = t.grad(self);
    const Matrix& v = t.value(raw.id());
    const double f = fault("psd_from_factor");
    Matrix& gr = t.grad_slot(raw.id());
    for (Index i = 0; i < v.rows(); ++i) {
      const double a = v(i, 0), b = v(i, 1), c = v(i, 2);
      gr(i, 0) += f * (2.0 * a * g(i, 0) + b * g(i, 1));
      gr(i, 1) += f * (a * g(i, 1) + 2.0 * b * g(i, 2));
      gr(i, 2) += f * (2.0 * c * g(i, 2));
    }
  });
}

Var log_gaussian_grid(Var mu, Var theta, Var points) {
  Tape& t = tape_of(mu);
  const Matrix& m = mu.value();
  const Matrix& th = theta.value();
  const Matrix& p = points.value();
  if (m.cols() != 2 || th.cols() != 3 || th.rows() != m.rows() || p.cols() != 2) {
    throw DimensionError("log_gaussian_grid: mu " + shape_string(m) + ", theta " +
                         shape_string(th) + ", points " + shape_string(p));
  }
  const Index R = m.rows(), K = p.rows();
  Matrix out(R, K);
  for (Index i = 0; i < R; ++i) {
    for (Index k = 0; k < K; ++k) {
      const double ds = p(k, 0) - m(i, 0);
      const double de = p(k, 1) - m(i, 1);
      out(i, k) = -(th(i, 0) * ds * ds + 2.0 * th(i, 1) * ds * de + th(i, 2) * de * de);
    }
  }
  return t.record(std::move(out), {mu, theta, points}, [mu, theta, points](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& m = t.value(mu.id());
    const Matrix& th = t.value(theta.id());
    const Matrix& p = t.value(points.id());
    const double f = fault("log_gaussian_grid");
    const bool need_mu = t.requires_grad(mu.id());
    const bool need_th = t.requires_grad(theta.id());
    const bool need_p = t.requires_grad(points.id());
    Matrix gm = Matrix::Zero(m.rows(), 2);
    Matrix gth = Matrix::Zero(th.rows(), 3);
    Matrix gp = Matrix::Zero(p.rows(), 2);
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index k = 0; k < p.rows(); ++k) {
        const double gv = g(i, k);
        if (gv == 0.0) continue;
        const double ds = p(k, 0) - m(i, 0);
        const double de = p(k, 1) - m(i, 1);
        gth(i, 0) -= gv * ds * ds;
        gth(i, 1) -= gv * 2.0 * ds * de;
        gth(i, 2) -= gv * de * de;
        // d out / d ds and d out / d de.
        const double dds = -2.0 * (th(i, 0) * ds + th(i, 1) * de) * gv;
        const double dde = -2.0 * (th(i, 1) * ds + th(i, 2) * de) * gv;
        gm(i, 0) -= dds;
        gm(i, 1) -= dde;
        gp(k, 0) += dds;
        gp(k, 1) += dde;
      }
    }
    if (need_mu) t.grad_slot(mu.id()) += f * gm;
    if (need_th) t.grad_slot(theta.id()) += gth;
    if (need_p) t.grad_slot(points.id()) += gp;
  });
}

}  // namespace nestor::numerics
