#ifndef NESTOR_NUMERICS_OPS_H_
#define NESTOR_NUMERICS_OPS_H_

#include <string_view>
#include <vector>

#include "nestor/numerics/tape.h"

// Differentiable primitives. All operate on 2-D row-major values; "rows"
// are sequence positions or batch items, "cols" are features. Every op
// checks shapes and throws DimensionError naming both operands on mismatch.
namespace nestor::numerics {

// --- elementwise and structural -------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // Hadamard product
Var scale(Var a, double s);
// a (R x C) + b (1 x C) broadcast over rows.
Var add_row(Var a, Var b);
// Replicates a 1 x C row `rows` times.
Var broadcast_rows(Var a, Index rows);

Var matmul(Var a, Var b);
// a * b^T.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);

// Row lookup: out.row(i) = table.row(ids[i]).
Var gather_rows(Var table, const std::vector<int>& ids);
// Column lookup: out.col(k) = a.col(cols[k]).
Var gather_cols(Var a, const std::vector<int>& cols);

// Per-row sum -> R x 1.
Var row_sum(Var a);
// Sum of all entries -> 1 x 1.
Var sum_all(Var a);
// Sum over i of a(i, cols[i]); entries with cols[i] < 0 are skipped. -> 1 x 1.
Var pick_sum(Var a, const std::vector<int>& cols);

// --- affine -----------------------------------------------------------------

// y = x W^T + b with x: R x in, W: out x in, b: 1 x out.
Var linear_affine(Var x, Var W, Var b);

// --- activations ------------------------------------------------------------

Var sigmoid(Var a);
Var tanh(Var a);
// Exact Gaussian-CDF form: gelu(x) = x * Phi(x) = 0.5 x (1 + erf(x / sqrt 2)).
Var gelu(Var a);

// --- normalization ----------------------------------------------------------

// Row-wise softmax with max subtraction.
Var softmax_lastdim(Var a);
Var log_softmax_lastdim(Var a);
// Softmax restricted to entries where mask(i, j) is true; other entries are
// exactly zero. Every row needs at least one unmasked entry.
Var masked_softmax_lastdim(Var a, const std::vector<std::vector<bool>>& mask);
// Row-wise zero mean / unit variance followed by gamma * x + beta (both 1 x C).
Var layer_norm(Var x, Var gamma, Var beta, double eps);

// --- pooling ----------------------------------------------------------------

// Whole-sequence mean: L x d -> 1 x d.
Var mean_pool(Var seq);
// Sliding mean with window w: L x d -> (L - w + 1) x d.
Var mean_pool(Var seq, Index window);

// --- convolution ------------------------------------------------------------

// Valid 1-D convolution, stride 1. W is d_out x (k * d_in): block t of each
// row multiplies input position i + t. b is 1 x d_out. Throws
// LevelTooShortError when L < k.
Var conv1d_valid(Var seq, Index k, Var W, Var b);
// Transposed convolution sharing conv1d_valid's weight layout: W is
// d_in x (k * d_out) where d_in is this op's input width, so that
// tconv1d(y, k, W, 0) is the exact adjoint of conv1d_valid(x, k, W, 0).
// L x d_in -> (L + k - 1) x d_out.
Var tconv1d(Var seq, Index k, Var W, Var b);

// --- recurrent --------------------------------------------------------------

// Weights of one GRU direction, gate blocks ordered (r, z, n):
// w_ih: 3h x in, w_hh: 3h x h, b_ih and b_hh: 1 x 3h.
struct GruWeights {
  Var w_ih;
  Var w_hh;
  Var b_ih;
  Var b_hh;
};

// Runs one GRU direction over the rows of seq (L x in) from a zero initial
// state. reverse=true walks from the last row to the first; output row t is
// always the state after consuming input row t. -> L x h.
Var gru_sequence(Var seq, const GruWeights& w, bool reverse);

// One GRU step for every row independently:
//   r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//   z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//   out = (1 - z) * n + z * h
// x: R x in, h: R x hidden.
Var gru_cell(Var x, Var h, const GruWeights& w);

// --- spatial prior ----------------------------------------------------------

// Maps per-row lower-triangular factors (a, b, c) of [[a, 0], [b, c]] onto the
// symmetric matrix F F^T + eps I, stored as (theta00, theta01, theta11).
// R x 3 -> R x 3.
Var psd_from_factor(Var raw, double eps);

// out(i, k) = -(p_k - mu_i)^T Theta_i (p_k - mu_i) with mu: R x 2,
// theta: R x 3 in psd_from_factor layout and points: K x 2. -> R x K.
Var log_gaussian_grid(Var mu, Var theta, Var points);

// --- diagnostics ------------------------------------------------------------

// Throws NumericError naming `what` if any entry of v is NaN or infinite.
void check_finite(Var v, std::string_view what);

namespace testing {
// Scales the input gradient produced by the named op's backward pass by
// `factor` until cleared. Used to verify that the gradient-check suite
// reports a corrupted op by name. Pass an empty name to clear.
void inject_gradient_fault(std::string_view op_name, double factor = 0.5);
}  // namespace testing

}  // namespace nestor::numerics

#endif  // NESTOR_NUMERICS_OPS_H_
