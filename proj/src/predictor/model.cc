#include "nestor/predictor/model.h"

#include "nestor/error.h"

namespace nestor::predictor {

NerModel::NerModel(const RunConfig& cfg, encoder::Vocabularies vocab, const encoder::StaticVectors* pretrained,
                   std::shared_ptr<const encoder::ContextualStore> contextual)
    : cfg_(cfg), vocab_(std::move(vocab)), contextual_(std::move(contextual)) {
  if (vocab_.num_types() == 0) throw DataError("training data has no entity types");
  numerics::Rng rng(cfg_.train.seed);
  encoder_ = encoder::Encoder(store_, vocab_, cfg_.embeddings, cfg_.model, rng, pretrained, contextual_.get());
  proposer_ = proposer::Proposer(store_, cfg_.model, num_types(), cfg_.ablation, rng);
  regressor_ = regressor::Regressor(store_, cfg_.model, num_types(), cfg_.ablation, rng);
  head_ = Head(store_, cfg_.model, num_types(), rng);
  apply_precision();
}

void NerModel::apply_precision() {
  if (cfg_.train.precision != "f32") return;
  for (numerics::Param* p : store_.all()) {
    p->value = p->value.cast<float>().cast<double>();
  }
}

ModelOutput NerModel::forward(Tape& tape, const SentenceExample& sentence, bool trace) const {
  ModelOutput out;
  out.length = static_cast<int>(sentence.tokens.size());
  out.H = encoder_.encode(tape, sentence);
  out.initial = proposer_(tape, out.H, trace ? &out.pyramid : nullptr);
  out.refined = regressor_(tape, out.initial, trace ? &out.layers : nullptr);
  out.log_pc = head_.category_distribution(tape, out.refined.Q, out.refined.C);
  out.log_pn = head_.span_distribution(tape, out.refined.Q, out.refined.N, out.H,
                                       trace ? &out.head_prior : nullptr);
  return out;
}

std::vector<PredictedEntity> NerModel::predict(const SentenceExample& sentence) const {
  Tape tape(false);
  ModelOutput out = forward(tape, sentence);
  const Matrix p_c = out.log_pc.value().array().exp().matrix();
  const Matrix p_n = out.log_pn.value().array().exp().matrix();
  return decode(p_c, p_n, out.length);
}

}  // namespace nestor::predictor
