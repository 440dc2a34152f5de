#ifndef NESTOR_TRAINER_TRAINER_H_
#define NESTOR_TRAINER_TRAINER_H_

#include <functional>
#include <vector>

#include "nestor/data/metrics.h"
#include "nestor/predictor/model.h"
#include "nestor/trainer/assignment.h"
#include "nestor/trainer/optim.h"

namespace nestor::trainer {

using numerics::Tape;
using numerics::Var;
using predictor::NerModel;

// Gold entities as type ids; throws CompatibilityError for unknown types.
std::vector<TargetEntity> targets_of(const SentenceExample& ex, const encoder::Vocabularies& vocab);

// Sum over proposals of -log p_c(t_i) - log p_n(s_i, e_i) for entity
// targets and -log p_c(None) for padding, read from log-probabilities.
// The assignment is a constant of the graph.
Var bipartite_loss(Var log_pc, Var log_pn, const Assignment& assignment,
                   const std::vector<TargetEntity>& targets, int L);

struct SentenceLoss {
  Var loss;
  Assignment assignment;
};

// Forward pass, cost matrix from the current distributions, assignment
// and loss on `tape`.
SentenceLoss sentence_loss(Tape& tape, const NerModel& model, const SentenceExample& ex);

// Worker count: cfg.threads if positive, else NESTOR_THREADS, else the
// hardware concurrency (at least 1).
int resolve_threads(const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(NerModel& model, long total_steps);

  // Summed loss over the batch, one clipped AdamW update. Sentences run on
  // separate tapes; their gradients are merged in batch order, so results
  // do not depend on the thread count. Throws NumericError naming the
  // sentence whose loss is not finite.
  double train_step(const std::vector<const SentenceExample*>& batch);

  long step() const { return step_; }
  long total_steps() const { return total_steps_; }
  double last_grad_norm() const { return last_grad_norm_; }
  double last_lr() const { return last_lr_; }

 private:
  NerModel& model_;
  AdamW optimizer_;
  long step_ = 0;
  long total_steps_;
  int threads_;
  double last_grad_norm_ = 0.0;
  double last_lr_ = 0.0;
};

struct EvalResult {
  data::MetricsReport metrics;
  std::vector<std::vector<predictor::PredictedEntity>> predictions;
};

EvalResult evaluate(const NerModel& model, const std::vector<SentenceExample>& examples, int threads = 1);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  bool evaluated = false;
  data::MetricsReport dev;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double best_f1 = -1.0;
  int best_epoch = 0;
  long steps = 0;
  // Parameter values at the best dev evaluation, in ParamStore order.
  std::vector<numerics::Matrix> best_params;
};

// Runs cfg.train.epochs epochs over `train` in a per-epoch shuffled order
// (seeded by cfg.train.seed) with batches of cfg.train.batch_size.
// `on_epoch` is called after every epoch.
TrainResult train(NerModel& model, const std::vector<SentenceExample>& train,
                  const std::vector<SentenceExample>& dev,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace nestor::trainer

#endif  // NESTOR_TRAINER_TRAINER_H_
