#include "nestor/cli/config.h"

#include <fstream>
#include <set>

#include "nestor/error.h"

namespace nestor {

using nlohmann::json;

namespace {

// Reads the keys of one section, rejecting anything not consumed.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw ConfigError(name, "must be an object");
  }

  template <typename T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    const json& v = node_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path(key), "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(path(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(path(key), "expected a string");
      }
      dst = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key), e.what());
    }
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [key, value] : node_->items()) {
      if (!seen_.count(key)) throw ConfigError(path(key), "unknown key");
    }
  }

 private:
  std::string path(const std::string& key) const { return name_ + "." + key; }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  static const std::set<std::string> kSections = {"model", "embeddings", "train", "data", "ablation"};
  for (const auto& [key, value] : j.items()) {
    if (!kSections.count(key)) throw ConfigError(key, "unknown key");
  }
  RunConfig c;
  Section m(j, "model");
  m.read("dim", c.model.dim);
  m.read("heads", c.model.heads);
  m.read("kernel_sizes", c.model.kernel_sizes);
  m.read("regressor_layers", c.model.regressor_layers);
  m.read("epsilon_psd", c.model.epsilon_psd);
  m.read("mlp_hidden", c.model.mlp_hidden);
  m.read("max_length", c.model.max_length);
  m.finish();

  Section e(j, "embeddings");
  e.read("word_path", c.embeddings.word_path);
  e.read("contextual_path", c.embeddings.contextual_path);
  e.read("char_dim", c.embeddings.char_dim);
  e.read("char_hidden", c.embeddings.char_hidden);
  e.read("word_dim", c.embeddings.word_dim);
  e.read("pos_dim", c.embeddings.pos_dim);
  e.finish();

  Section t(j, "train");
  t.read("lr", c.train.lr);
  t.read("lr_floor", c.train.lr_floor);
  t.read("epochs", c.train.epochs);
  t.read("clip_norm", c.train.clip_norm);
  t.read("warmup_steps", c.train.warmup_steps);
  t.read("weight_decay", c.train.weight_decay);
  t.read("seed", c.train.seed);
  t.read("batch_size", c.train.batch_size);
  t.read("precision", c.train.precision);
  t.read("eval_every", c.train.eval_every);
  t.read("threads", c.train.threads);
  t.finish();

  Section d(j, "data");
  d.read("train", c.data.train);
  d.read("dev", c.data.dev);
  d.read("test", c.data.test);
  d.read("format", c.data.format);
  d.finish();

  Section a(j, "ablation");
  a.read("backward_block", c.ablation.backward_block);
  a.read("spatial_modulation", c.ablation.spatial_modulation);
  a.read("gated_update", c.ablation.gated_update);
  a.read("category_embedding", c.ablation.category_embedding);
  a.read("location_iteration", c.ablation.location_iteration);
  a.read("logits_iteration", c.ablation.logits_iteration);
  a.finish();

  validate(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  return {
      {"model",
       {{"dim", c.model.dim},
        {"heads", c.model.heads},
        {"kernel_sizes", c.model.kernel_sizes},
        {"regressor_layers", c.model.regressor_layers},
        {"epsilon_psd", c.model.epsilon_psd},
        {"mlp_hidden", c.model.mlp_hidden},
        {"max_length", c.model.max_length}}},
      {"embeddings",
       {{"word_path", c.embeddings.word_path},
        {"contextual_path", c.embeddings.contextual_path},
        {"char_dim", c.embeddings.char_dim},
        {"char_hidden", c.embeddings.char_hidden},
        {"word_dim", c.embeddings.word_dim},
        {"pos_dim", c.embeddings.pos_dim}}},
      {"train",
       {{"lr", c.train.lr},
        {"lr_floor", c.train.lr_floor},
        {"epochs", c.train.epochs},
        {"clip_norm", c.train.clip_norm},
        {"warmup_steps", c.train.warmup_steps},
        {"weight_decay", c.train.weight_decay},
        {"seed", c.train.seed},
        {"batch_size", c.train.batch_size},
        {"precision", c.train.precision},
        {"eval_every", c.train.eval_every},
        {"threads", c.train.threads}}},
      {"data", {{"train", c.data.train}, {"dev", c.data.dev}, {"test", c.data.test}, {"format", c.data.format}}},
      {"ablation",
       {{"backward_block", c.ablation.backward_block},
        {"spatial_modulation", c.ablation.spatial_modulation},
        {"gated_update", c.ablation.gated_update},
        {"category_embedding", c.ablation.category_embedding},
        {"location_iteration", c.ablation.location_iteration},
        {"logits_iteration", c.ablation.logits_iteration}}},
  };
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("--config", "'" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must be key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto dot = key.find('.');
  if (dot == std::string::npos || key.find('.', dot + 1) != std::string::npos) {
    throw ConfigError(key, "override key must be section.name");
  }
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json j = config_to_json(cfg);
  const std::string section = key.substr(0, dot);
  const std::string name = key.substr(dot + 1);
  if (!j.contains(section)) throw ConfigError(key, "unknown key");
  if (!j[section].contains(name)) throw ConfigError(key, "unknown key");
  // A string-typed key keeps the literal text even when it parses as JSON.
  if (j[section][name].is_string() && !value.is_string()) value = text;
  j[section][name] = value;
  cfg = config_from_json(j);
}

void validate(const RunConfig& c) {
  if (c.model.dim < 1) throw ConfigError("model.dim", "must be >= 1");
  if (c.model.heads < 1) throw ConfigError("model.heads", "must be >= 1");
  if (c.model.dim % c.model.heads != 0) {
    throw ConfigError("model.heads", "must divide model.dim (" + std::to_string(c.model.dim) + ")");
  }
  for (int k : c.model.kernel_sizes) {
    if (k < 1) throw ConfigError("model.kernel_sizes", "kernel sizes must be >= 1");
  }
  if (c.model.regressor_layers < 0) throw ConfigError("model.regressor_layers", "must be >= 0");
  if (!(c.model.epsilon_psd > 0.0)) throw ConfigError("model.epsilon_psd", "must be > 0");
  if (c.model.mlp_hidden < 0) throw ConfigError("model.mlp_hidden", "must be >= 0");
  if (c.model.max_length < 1) throw ConfigError("model.max_length", "must be >= 1");
  if (c.embeddings.char_dim < 0) throw ConfigError("embeddings.char_dim", "must be >= 0");
  if (c.embeddings.char_hidden < 0) throw ConfigError("embeddings.char_hidden", "must be >= 0");
  if (c.embeddings.word_dim < 0) throw ConfigError("embeddings.word_dim", "must be >= 0");
  if (c.embeddings.pos_dim < 0) throw ConfigError("embeddings.pos_dim", "must be >= 0");
  if (!(c.train.lr > 0.0)) throw ConfigError("train.lr", "must be > 0");
  if (c.train.lr_floor < 0.0 || c.train.lr_floor > c.train.lr) {
    throw ConfigError("train.lr_floor", "must lie in [0, train.lr]");
  }
  if (c.train.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (!(c.train.clip_norm > 0.0)) throw ConfigError("train.clip_norm", "must be > 0");
  if (c.train.warmup_steps < 0) throw ConfigError("train.warmup_steps", "must be >= 0");
  if (c.train.weight_decay < 0.0) throw ConfigError("train.weight_decay", "must be >= 0");
  if (c.train.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (c.train.precision != "f32" && c.train.precision != "f64") {
    throw ConfigError("train.precision", "must be \"f32\" or \"f64\"");
  }
  if (c.train.eval_every < 1) throw ConfigError("train.eval_every", "must be >= 1");
  if (c.train.threads < 0) throw ConfigError("train.threads", "must be >= 0");
  if (c.data.format != "jsonl" && c.data.format != "conll") {
    throw ConfigError("data.format", "must be \"jsonl\" or \"conll\"");
  }
}

}  // namespace nestor
