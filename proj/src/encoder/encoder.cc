#include "nestor/encoder/encoder.h"

#include "nestor/error.h"

namespace nestor::encoder {

using numerics::concat_cols;
using numerics::mean_pool;

Encoder::Encoder(ParamStore& store, const Vocabularies& vocab, const EmbeddingConfig& emb,
                 const ModelConfig& model, Rng& rng, const StaticVectors* pretrained,
                 const ContextualStore* contextual)
    : vocab_(&vocab), max_length_(model.max_length) {
  if (!emb.contextual_path.empty() && contextual == nullptr) {
    throw ConfigError("embeddings.contextual_path", "contextual channel enabled without a store");
  }
  contextual_ = emb.contextual_path.empty() ? nullptr : contextual;
  if (contextual_ != nullptr && contextual_->dim() == 0) {
    throw DataError("contextual store '" + emb.contextual_path + "' holds no vectors");
  }

  char_enabled_ = emb.char_dim > 0 && emb.char_hidden > 0;
  if (char_enabled_) {
    chars_ = numerics::Embedding(store, "encoder.char_table", vocab.chars.size(), emb.char_dim, rng);
    char_gru_ = numerics::BiGru(store, "encoder.char_gru", emb.char_dim, emb.char_hidden, rng);
  }

  word_enabled_ = emb.word_dim > 0;
  if (word_enabled_) {
    if (pretrained != nullptr && pretrained->dim() != emb.word_dim) {
      throw ConfigError("embeddings.word_dim", "is " + std::to_string(emb.word_dim) +
                                                   " but the vector file has width " +
                                                   std::to_string(pretrained->dim()));
    }
    words_ = numerics::Embedding(store, "encoder.word_table", vocab.words.size(), emb.word_dim, rng);
    if (pretrained != nullptr) {
      Matrix& table = words_.table().value;
      for (std::size_t i = 0; i < pretrained->words.size(); ++i) {
        if (!vocab.words.contains(pretrained->words[i])) continue;
        table.row(vocab.words.id(pretrained->words[i])) = pretrained->vectors.row(static_cast<Index>(i));
      }
    }
  }

  pos_enabled_ = emb.pos_dim > 0;
  if (pos_enabled_) {
    pos_ = numerics::Embedding(store, "encoder.pos_table", vocab.pos.size(), emb.pos_dim, rng);
  }

  if (token_width() == 0) throw ConfigError("embeddings", "every embedding channel is disabled");
  const Index hidden = (model.dim + 1) / 2;
  gru_ = numerics::BiGru(store, "encoder.gru", token_width(), hidden, rng);
  out_ = numerics::Linear(store, "encoder.out", 2 * hidden, model.dim, rng);
}

Var Encoder::embed_chars(Tape& tape, const std::string& token) const {
  std::vector<int> ids;
  for (const auto& ch : utf8_chars(token)) ids.push_back(vocab_->chars.id(ch));
  if (ids.empty()) ids.push_back(Vocab::kUnknown);
  return mean_pool(char_gru_(tape, chars_(tape, ids)));
}

Var Encoder::embed_tokens(Tape& tape, const SentenceExample& sentence) const {
  const auto L = static_cast<Index>(sentence.tokens.size());
  std::vector<Var> channels;
  if (char_enabled_) {
    std::vector<Var> rows;
    rows.reserve(sentence.tokens.size());
    for (const auto& tok : sentence.tokens) rows.push_back(embed_chars(tape, tok));
    channels.push_back(numerics::concat_rows(rows));
  }
  if (contextual_ != nullptr) {
    const Matrix* m = contextual_->find(sentence.id);
    if (m == nullptr) throw DataError("no contextual vectors for sentence '" + sentence.id + "'");
    if (m->rows() != L) {
      throw DataError("contextual vectors for sentence '" + sentence.id + "' cover " +
                      std::to_string(m->rows()) + " tokens, sentence has " + std::to_string(L));
    }
    channels.push_back(tape.constant(*m));
  }
  if (word_enabled_) {
    std::vector<int> ids;
    for (const auto& tok : sentence.tokens) ids.push_back(vocab_->words.id(tok));
    channels.push_back(words_(tape, ids));
  }
  if (pos_enabled_) {
    if (!sentence.pos.empty() && sentence.pos.size() != sentence.tokens.size()) {
      throw DataError("sentence '" + sentence.id + "' has " + std::to_string(sentence.pos.size()) +
                      " POS tags for " + std::to_string(L) + " tokens");
    }
    std::vector<int> ids;
    for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
      ids.push_back(sentence.pos.empty() ? Vocab::kUnknown : vocab_->pos.id(sentence.pos[i]));
    }
    channels.push_back(pos_(tape, ids));
  }
  return channels.size() == 1 ? channels.front() : concat_cols(channels);
}

Var Encoder::encode(Tape& tape, const SentenceExample& sentence) const {
  const auto L = static_cast<int>(sentence.tokens.size());
  if (L == 0) throw DataError("sentence '" + sentence.id + "' is empty");
  if (L > max_length_) {
    throw DataError("sentence '" + sentence.id + "' has " + std::to_string(L) +
                    " tokens, above model.max_length " + std::to_string(max_length_));
  }
  return out_(tape, gru_(tape, embed_tokens(tape, sentence)));
}

}  // namespace nestor::encoder
