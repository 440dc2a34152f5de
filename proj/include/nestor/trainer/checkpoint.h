#ifndef NESTOR_TRAINER_CHECKPOINT_H_
#define NESTOR_TRAINER_CHECKPOINT_H_

#include <cstdint>
#include <memory>
#include <string>

#include "nestor/predictor/model.h"

namespace nestor::trainer {

// Binary little-endian container:
//   magic "NESTORCK" | u32 version | u32 dtype (0 = f32, 1 = f64) | u64 step
//   u64 length + config JSON | u64 length + vocabulary JSON
//   u64 parameter count, then per parameter:
//     u64 length + name | u64 rows | u64 cols | rows * cols values, row-major
// The dtype follows train.precision. f32 files are exact because "f32"
// training keeps every parameter representable in single precision.
constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const predictor::NerModel& model, std::uint64_t step);

struct LoadedCheckpoint {
  std::unique_ptr<predictor::NerModel> model;
  std::uint64_t step = 0;
};

// Rebuilds the model from the stored configuration and vocabularies, then
// overwrites every parameter. When the stored configuration enables the
// contextual channel, `contextual_path` (or the stored path when empty) is
// loaded. Throws CompatibilityError on version, dtype, name or shape
// mismatches and DataError on truncated files.
LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& contextual_path = "");

}  // namespace nestor::trainer

#endif  // NESTOR_TRAINER_CHECKPOINT_H_
