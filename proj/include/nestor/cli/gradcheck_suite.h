#ifndef NESTOR_CLI_GRADCHECK_SUITE_H_
#define NESTOR_CLI_GRADCHECK_SUITE_H_

#include <functional>
#include <string>
#include <vector>

#include "nestor/cli/config.h"

namespace nestor {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<input or parameter>[offset]"
  bool passed = false;
  double seconds = 0.0;
};

// Tolerance on the relative error |a - n| / max(1, |a|, |n|).
constexpr double kGradCheckTolerance = 1e-4;

// Configuration of the composed-pipeline check: d = 16, two heads, one
// kernel of size 2, two regressor layers, 64-bit parameters.
RunConfig gradcheck_pipeline_config();

// Central-difference checks at 64 bits for every differentiable primitive
// (several seeds each), for the encoder, proposer, regressor, head and
// loss in isolation, and for encoder -> proposer -> regressor -> head ->
// loss on a 3-token sentence. `on_entry` sees each entry as it finishes.
std::vector<GradCheckEntry> run_gradcheck_suite(const std::function<void(const GradCheckEntry&)>& on_entry = {});

}  // namespace nestor

#endif  // NESTOR_CLI_GRADCHECK_SUITE_H_
