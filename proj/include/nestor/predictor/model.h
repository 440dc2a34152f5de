#ifndef NESTOR_PREDICTOR_MODEL_H_
#define NESTOR_PREDICTOR_MODEL_H_

#include <memory>
#include <vector>

#include "nestor/cli/config.h"
#include "nestor/data/example.h"
#include "nestor/encoder/encoder.h"
#include "nestor/predictor/head.h"
#include "nestor/proposer/proposer.h"
#include "nestor/regressor/regressor.h"

namespace nestor::predictor {

// Everything one forward pass produces for a sentence.
struct ModelOutput {
  int length = 0;
  Var H;
  proposer::Proposals initial;
  proposer::Proposals refined;
  Var log_pc;  // L x (T+1)
  Var log_pn;  // L x L(L+1)/2
  // Filled only when a trace is requested.
  std::vector<proposer::PyramidLevel> pyramid;
  std::vector<regressor::LayerTrace> layers;
  regressor::SpatialPrior head_prior;
};

// Encoder, proposer, regressor and head over one parameter store. Holds
// addresses of its own members, so it is neither copyable nor movable.
class NerModel {
 public:
  // Parameters are drawn from Rng(cfg.train.seed) in a fixed order.
  NerModel(const RunConfig& cfg, encoder::Vocabularies vocab, const encoder::StaticVectors* pretrained,
           std::shared_ptr<const encoder::ContextualStore> contextual);
  NerModel(const NerModel&) = delete;
  NerModel& operator=(const NerModel&) = delete;

  ModelOutput forward(Tape& tape, const SentenceExample& sentence, bool trace = false) const;
  std::vector<PredictedEntity> predict(const SentenceExample& sentence) const;

  // Rounds every parameter to the nearest float32 when the configured
  // precision is "f32".
  void apply_precision();

  numerics::ParamStore& params() { return store_; }
  const numerics::ParamStore& params() const { return store_; }
  const encoder::Vocabularies& vocab() const { return vocab_; }
  const RunConfig& config() const { return cfg_; }
  int num_types() const { return vocab_.num_types(); }

 private:
  RunConfig cfg_;
  encoder::Vocabularies vocab_;
  std::shared_ptr<const encoder::ContextualStore> contextual_;
  numerics::ParamStore store_;
  encoder::Encoder encoder_;
  proposer::Proposer proposer_;
  regressor::Regressor regressor_;
  Head head_;
};

}  // namespace nestor::predictor

#endif  // NESTOR_PREDICTOR_MODEL_H_
