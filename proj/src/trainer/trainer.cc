#include "nestor/trainer/trainer.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "nestor/error.h"
#include "nestor/numerics/ops.h"

namespace nestor::trainer {

namespace {

// Calls fn(i) for i in [0, n) on up to `threads` workers. The first
// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

using GradList = std::vector<std::pair<numerics::Param*, numerics::Matrix>>;

}  // namespace

std::vector<TargetEntity> targets_of(const SentenceExample& ex, const encoder::Vocabularies& vocab) {
  std::vector<TargetEntity> out;
  for (const auto& e : ex.entities) out.push_back({e.start, e.end, vocab.type_id(e.type)});
  return out;
}

Var bipartite_loss(Var log_pc, Var log_pn, const Assignment& assignment, const std::vector<TargetEntity>& targets,
                   int L) {
  const auto N = static_cast<int>(targets.size());
  const auto none = static_cast<int>(log_pc.cols()) - 1;
  std::vector<int> type_cols(L), span_cols(L);
  for (int i = 0; i < L; ++i) {
    const int j = assignment.target[i];
    if (j == N) {
      type_cols[i] = none;
      span_cols[i] = -1;
    } else {
      type_cols[i] = targets[j].type;
      span_cols[i] = predictor::support_index(targets[j].start, targets[j].end, L);
    }
  }
  return numerics::scale(numerics::add(numerics::pick_sum(log_pc, type_cols), numerics::pick_sum(log_pn, span_cols)),
                         -1.0);
}

SentenceLoss sentence_loss(Tape& tape, const NerModel& model, const SentenceExample& ex) {
  const auto out = model.forward(tape, ex);
  const auto targets = targets_of(ex, model.vocab());
  const Matrix p_c = out.log_pc.value().array().exp().matrix();
  const Matrix p_n = out.log_pn.value().array().exp().matrix();
  SentenceLoss r;
  r.assignment = assign(cost_matrix(p_c, p_n, targets, out.length));
  r.loss = bipartite_loss(out.log_pc, out.log_pn, r.assignment, targets, out.length);
  return r;
}

int resolve_threads(const TrainConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("NESTOR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Trainer::Trainer(NerModel& model, long total_steps)
    : model_(model),
      optimizer_(model.config().train.weight_decay),
      total_steps_(total_steps),
      threads_(resolve_threads(model.config().train)) {}

double Trainer::train_step(const std::vector<const SentenceExample*>& batch) {
  std::vector<double> losses(batch.size());
  std::vector<GradList> grads(batch.size());
  parallel_for(batch.size(), threads_, [&](std::size_t i) {
    Tape tape;
    SentenceLoss sl = sentence_loss(tape, model_, *batch[i]);
    losses[i] = sl.loss.item();
    if (!std::isfinite(losses[i])) throw NumericError("non-finite loss on sentence '" + batch[i]->id + "'");
    tape.backward(sl.loss);
    tape.for_each_param_grad([&](numerics::Param& p, const Matrix& g) { grads[i].emplace_back(&p, g); });
  });

  auto& store = model_.params();
  store.zero_grad();
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += losses[i];
    for (auto& [p, g] : grads[i]) p->grad += g;
  }
  last_grad_norm_ = clip_grad_norm(store, model_.config().train.clip_norm);
  ++step_;
  last_lr_ = lr_schedule(step_, total_steps_, model_.config().train);
  optimizer_.step(store, last_lr_);
  model_.apply_precision();
  return total;
}

EvalResult evaluate(const NerModel& model, const std::vector<SentenceExample>& examples, int threads) {
  EvalResult r;
  r.predictions.resize(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) { r.predictions[i] = model.predict(examples[i]); });
  std::vector<std::vector<EntitySpan>> pred(examples.size()), gold(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (const auto& e : r.predictions[i]) pred[i].push_back({e.start, e.end, model.vocab().type_name(e.type)});
    gold[i] = examples[i].entities;
  }
  r.metrics = data::score(pred, gold);
  return r;
}

nlohmann::json EpochLog::to_json() const {
  nlohmann::json j = {{"epoch", epoch}, {"loss", loss}, {"lr", lr}, {"seconds", seconds}};
  if (evaluated) j["dev"] = dev.to_json();
  return j;
}

TrainResult train(NerModel& model, const std::vector<SentenceExample>& train_set,
                  const std::vector<SentenceExample>& dev, const std::function<void(const EpochLog&)>& on_epoch) {
  const TrainConfig& cfg = model.config().train;
  if (train_set.empty()) throw DataError("training set is empty");
  const long batches = (static_cast<long>(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
  if (cfg.warmup_steps > batches * cfg.epochs) {
    throw ConfigError("train.warmup_steps", "exceeds the " + std::to_string(batches * cfg.epochs) + " total steps");
  }
  Trainer trainer(model, batches * cfg.epochs);
  const int threads = resolve_threads(cfg);
  numerics::Rng order_rng(cfg.seed ^ 0x5deece66dULL);

  TrainResult result;
  std::vector<const SentenceExample*> order;
  for (const auto& ex : train_set) order.push_back(&ex);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[order_rng.below(i)]);
    }
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      log.loss += trainer.train_step({order.begin() + b, order.begin() + end});
    }
    log.lr = trainer.last_lr();
    if (!dev.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      log.evaluated = true;
      log.dev = evaluate(model, dev, threads).metrics;
      if (log.dev.overall.f1() > result.best_f1) {
        result.best_f1 = log.dev.overall.f1();
        result.best_epoch = epoch;
        result.best_params.clear();
        for (const auto* p : std::as_const(model.params()).all()) result.best_params.push_back(p->value);
      }
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.steps = trainer.step();
  return result;
}

}  // namespace nestor::trainer
