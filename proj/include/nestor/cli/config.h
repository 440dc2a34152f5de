#ifndef NESTOR_CLI_CONFIG_H_
#define NESTOR_CLI_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace nestor {

struct ModelConfig {
  int dim = 64;
  int heads = 8;
  std::vector<int> kernel_sizes = {2, 2};
  int regressor_layers = 3;
  double epsilon_psd = 1e-4;
  // Hidden width of every internal MLP; 0 means model.dim.
  int mlp_hidden = 0;
  int max_length = 128;

  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : dim; }
};

// A channel is disabled when its dimension is 0 (char, word, pos) or its
// path is empty (contextual).
struct EmbeddingConfig {
  std::string word_path;
  std::string contextual_path;
  int char_dim = 16;
  int char_hidden = 8;
  int word_dim = 50;
  int pos_dim = 8;
};

struct TrainConfig {
  double lr = 1e-3;
  double lr_floor = 0.0;
  int epochs = 300;
  double clip_norm = 1.0;
  int warmup_steps = 50;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  int batch_size = 8;
  // "f32" snaps parameters to single precision after every update; "f64"
  // keeps full precision.
  std::string precision = "f32";
  // Dev evaluation period in epochs; the last epoch is always evaluated.
  int eval_every = 1;
  // Worker threads for per-sentence forward/backward; 0 reads
  // NESTOR_THREADS and falls back to the hardware concurrency.
  int threads = 0;
};

struct DataConfig {
  std::string train;
  std::string dev;
  std::string test;
  // "jsonl" or "conll".
  std::string format = "jsonl";
};

struct AblationConfig {
  bool backward_block = true;
  bool spatial_modulation = true;
  bool gated_update = true;
  bool category_embedding = true;
  bool location_iteration = true;
  bool logits_iteration = true;
};

struct RunConfig {
  ModelConfig model;
  EmbeddingConfig embeddings;
  TrainConfig train;
  DataConfig data;
  AblationConfig ablation;
};

// Throws ConfigError naming the offending key path for unknown keys, wrong
// value types and out-of-range values.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

// Applies one "dotted.key=value" override. The value is parsed as JSON
// when possible and taken as a string otherwise.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Range checks shared by every entry point.
void validate(const RunConfig& cfg);

}  // namespace nestor

#endif  // NESTOR_CLI_CONFIG_H_
