#ifndef NESTOR_TRAINER_OPTIM_H_
#define NESTOR_TRAINER_OPTIM_H_

#include <unordered_map>

#include "nestor/cli/config.h"
#include "nestor/numerics/param.h"

namespace nestor::trainer {

using numerics::Matrix;
using numerics::ParamStore;

// Linear ramp from 0 to lr over warmup steps, then cosine decay to
// lr_floor at total_steps. Steps beyond total_steps stay at the floor.
double lr_schedule(long step, long total_steps, const TrainConfig& cfg);

// Scales every gradient by clip / norm when the global L2 norm exceeds
// clip. Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double clip);

// Adam moments with decoupled weight decay:
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
//   w -= lr (m_hat / (sqrt(v_hat) + eps) + wd w).
class AdamW {
 public:
  explicit AdamW(double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store, double lr);
  long steps() const { return t_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  double wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<const numerics::Param*, Moments> state_;
};

}  // namespace nestor::trainer

#endif  // NESTOR_TRAINER_OPTIM_H_
