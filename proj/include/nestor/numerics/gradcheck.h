#ifndef NESTOR_NUMERICS_GRADCHECK_H_
#define NESTOR_NUMERICS_GRADCHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "nestor/numerics/param.h"
#include "nestor/numerics/tape.h"

namespace nestor::numerics {

// Outcome of comparing reverse-mode gradients with central differences.
// The error of one coordinate is
//   |analytic - numeric| / max(1, |analytic|, |numeric|)
// and max_rel_error is the largest over all checked coordinates.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Where the worst coordinate lives: input index (or parameter name) and
  // flat offset within it.
  std::string worst_input;
  Index worst_offset = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// f builds a 1 x 1 value from the supplied leaves.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Differentiates f once on a gradient tape, then perturbs every coordinate
// of every input by +-h (re-running f without gradients). Throws
// NumericError if f(x) is not finite.
GradCheckReport finite_diff_gradcheck(const ScalarFn& f, const std::vector<Matrix>& inputs,
                                      double h = 1e-5);

// Single-input convenience form.
GradCheckReport finite_diff_gradcheck(const std::function<Var(Tape&, Var)>& f, const Matrix& x,
                                      double h = 1e-5);

// Checks d f / d theta for every trainable parameter in `store` that f
// touches. If max_coords_per_param > 0 only that many evenly spaced
// coordinates of each parameter are perturbed.
GradCheckReport param_gradcheck(ParamStore& store, const std::function<Var(Tape&)>& f,
                                double h = 1e-5, Index max_coords_per_param = 0);

// Central-difference gradient of a plain scalar function.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double h = 1e-5);

}  // namespace nestor::numerics

#endif  // NESTOR_NUMERICS_GRADCHECK_H_
