#include "nestor/trainer/optim.h"

#include <cmath>
#include <numbers>

namespace nestor::trainer {

double lr_schedule(long step, long total_steps, const TrainConfig& cfg) {
  const long warmup = cfg.warmup_steps;
  if (step < 0) return 0.0;
  if (step < warmup) return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total_steps) return total_steps <= warmup ? cfg.lr : cfg.lr_floor;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return cfg.lr_floor + 0.5 * (cfg.lr - cfg.lr_floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(ParamStore& store, double clip) {
  double sq = 0.0;
  for (const numerics::Param* p : std::as_const(store).all()) {
    if (p->trainable && p->grad.size() > 0) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const double factor = clip / norm;
    for (numerics::Param* p : store.all()) {
      if (p->trainable && p->grad.size() > 0) p->grad *= factor;
    }
  }
  return norm;
}

void AdamW::step(ParamStore& store, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (numerics::Param* p : store.all()) {
    if (!p->trainable || p->grad.size() == 0) continue;
    auto [it, fresh] = state_.try_emplace(p);
    Moments& s = it->second;
    if (fresh) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    s.m = beta1_ * s.m + (1.0 - beta1_) * p->grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    const auto update = (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
    p->value.array() -= lr * (update + wd_ * p->value.array());
  }
}

}  // namespace nestor::trainer
