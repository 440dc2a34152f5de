#ifndef NESTOR_ENCODER_ENCODER_H_
#define NESTOR_ENCODER_ENCODER_H_

#include <string>
#include <vector>

#include "nestor/cli/config.h"
#include "nestor/data/example.h"
#include "nestor/encoder/vectors.h"
#include "nestor/encoder/vocab.h"
#include "nestor/numerics/layers.h"

namespace nestor::encoder {

using numerics::ParamStore;
using numerics::Rng;
using numerics::Tape;
using numerics::Var;

// Sentence encoder: per-token hybrid embedding
//   [char ; contextual ; word ; pos]
// followed by a BiGRU and an affine map to model.dim.
class Encoder {
 public:
  Encoder() = default;
  // `pretrained` seeds rows of the word table for words it covers.
  // `contextual` must be non-null exactly when embeddings.contextual_path
  // is set; it is borrowed for the encoder's lifetime.
  Encoder(ParamStore& store, const Vocabularies& vocab, const EmbeddingConfig& emb,
          const ModelConfig& model, Rng& rng, const StaticVectors* pretrained,
          const ContextualStore* contextual);

  Index char_width() const { return char_enabled_ ? char_gru_.out() : 0; }
  Index contextual_width() const { return contextual_ ? contextual_->dim() : 0; }
  Index word_width() const { return word_enabled_ ? words_.dim() : 0; }
  Index pos_width() const { return pos_enabled_ ? pos_.dim() : 0; }
  Index token_width() const {
    return char_width() + contextual_width() + word_width() + pos_width();
  }
  Index dim() const { return out_.out(); }

  // BiGRU over the token's characters, mean-pooled. An empty token reads
  // as a single unknown character.
  Var embed_chars(Tape& tape, const std::string& token) const;
  // L x token_width(). Throws DataError when the contextual channel is on
  // and the sentence id is missing or has the wrong vector count.
  Var embed_tokens(Tape& tape, const SentenceExample& sentence) const;
  // H: L x dim(). Throws DataError for empty or overlong sentences.
  Var encode(Tape& tape, const SentenceExample& sentence) const;

 private:
  const Vocabularies* vocab_ = nullptr;
  const ContextualStore* contextual_ = nullptr;
  bool char_enabled_ = false;
  bool word_enabled_ = false;
  bool pos_enabled_ = false;
  int max_length_ = 0;
  numerics::Embedding chars_;
  numerics::BiGru char_gru_;
  numerics::Embedding words_;
  numerics::Embedding pos_;
  numerics::BiGru gru_;
  numerics::Linear out_;
};

}  // namespace nestor::encoder

#endif  // NESTOR_ENCODER_ENCODER_H_
