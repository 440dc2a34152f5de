#ifndef NESTOR_ENCODER_VECTORS_H_
#define NESTOR_ENCODER_VECTORS_H_

#include <map>
#include <string>
#include <vector>

#include "nestor/numerics/matrix.h"

namespace nestor::encoder {

using numerics::Index;
using numerics::Matrix;

// Static word vectors in word2vec text format: a "<count> <dim>" header,
// then "<token> <v1> ... <vdim>" per line.
struct StaticVectors {
  std::vector<std::string> words;
  Matrix vectors;  // words.size() x dim

  Index dim() const { return vectors.cols(); }
};

// Throws DataError with the 1-based line number on malformed input.
StaticVectors load_word2vec(const std::string& path);
void save_word2vec(const std::string& path, const StaticVectors& v);

// Precomputed contextual vectors keyed by sentence id. Source format is
// JSON lines of {"id": string, "vectors": [[real, ...], ...]}.
class ContextualStore {
 public:
  ContextualStore() = default;

  // Throws DataError on malformed lines, ragged widths or duplicate ids.
  static ContextualStore load(const std::string& path);
  void save(const std::string& path) const;

  void insert(const std::string& id, Matrix vectors);
  // nullptr when the sentence is absent.
  const Matrix* find(const std::string& id) const;
  Index dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Matrix> entries_;
  Index dim_ = 0;
};

}  // namespace nestor::encoder

#endif  // NESTOR_ENCODER_VECTORS_H_
