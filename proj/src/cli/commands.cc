#include "nestor/cli/commands.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "nestor/cli/gradcheck_suite.h"
#include "nestor/data/io.h"
#include "nestor/data/synth.h"
#include "nestor/error.h"
#include "nestor/trainer/checkpoint.h"

namespace nestor::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const CompatibilityError*>(&e)) return kCompatibility;
  if (dynamic_cast<const DataError*>(&e)) return kData;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  return kFailure;
}

namespace {

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

void check_labels(const std::vector<SentenceExample>& examples, const encoder::Vocabularies& vocab) {
  std::set<std::string> unknown;
  for (const auto& ex : examples) {
    for (const auto& e : ex.entities) {
      if (std::find(vocab.types.begin(), vocab.types.end(), e.type) == vocab.types.end()) unknown.insert(e.type);
    }
  }
  if (unknown.empty()) return;
  std::string list;
  for (const auto& t : unknown) list += (list.empty() ? "" : ", ") + t;
  throw CompatibilityError("entity types unknown to the checkpoint: " + list);
}

}  // namespace

trainer::TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  validate(cfg);
  if (cfg.data.train.empty()) throw ConfigError("data.train", "required for training");
  if (out_dir.empty()) throw ConfigError("--out", "output directory required");
  log << "resolved config: " << config_to_json(cfg).dump() << '\n';

  const auto train_set = data::load_dataset(cfg.data.train, cfg.data.format);
  const auto dev_set =
      cfg.data.dev.empty() ? std::vector<SentenceExample>{} : data::load_dataset(cfg.data.dev, cfg.data.format);
  auto vocab = encoder::Vocabularies::build(train_set);
  check_labels(dev_set, vocab);

  std::unique_ptr<encoder::StaticVectors> pretrained;
  if (!cfg.embeddings.word_path.empty() && cfg.embeddings.word_dim > 0) {
    pretrained = std::make_unique<encoder::StaticVectors>(encoder::load_word2vec(cfg.embeddings.word_path));
  }
  std::shared_ptr<const encoder::ContextualStore> contextual;
  if (!cfg.embeddings.contextual_path.empty()) {
    contextual =
        std::make_shared<encoder::ContextualStore>(encoder::ContextualStore::load(cfg.embeddings.contextual_path));
  }

  fs::create_directories(out_dir);
  write_json((fs::path(out_dir) / "config.json").string(), config_to_json(cfg));
  std::ofstream metrics((fs::path(out_dir) / "metrics.jsonl").string());
  if (!metrics) throw DataError("cannot write metrics log in '" + out_dir + "'");

  predictor::NerModel model(cfg, std::move(vocab), pretrained.get(), contextual);
  log << "train " << train_set.size() << " sentences, dev " << dev_set.size() << ", "
      << model.params().scalar_count() << " parameters\n";
  auto result = trainer::train(model, train_set, dev_set, [&](const trainer::EpochLog& e) {
    metrics << e.to_json().dump() << '\n' << std::flush;
    log << "epoch " << e.epoch << " loss " << e.loss;
    if (e.evaluated) log << " dev_f1 " << e.dev.overall.f1();
    log << '\n';
  });

  if (!result.best_params.empty()) {
    auto params = model.params().all();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = result.best_params[i];
    log << "best dev f1 " << result.best_f1 << " at epoch " << result.best_epoch << '\n';
  }
  trainer::save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), model,
                           static_cast<std::uint64_t>(result.steps));
  return result;
}

data::MetricsReport cmd_eval(const std::string& checkpoint, const std::string& data_path, const std::string& format,
                             const std::string& json_path, std::ostream& out) {
  auto loaded = trainer::load_checkpoint(checkpoint);
  const auto examples = data::load_dataset(data_path, format);
  check_labels(examples, loaded.model->vocab());
  const auto result =
      trainer::evaluate(*loaded.model, examples, trainer::resolve_threads(loaded.model->config().train));
  out << result.metrics.table();
  if (!json_path.empty()) write_json(json_path, result.metrics.to_json());
  return result.metrics;
}

void cmd_predict(const std::string& checkpoint, const std::string& input_path, const std::string& output_path,
                 std::ostream& out) {
  auto loaded = trainer::load_checkpoint(checkpoint);
  auto examples = data::load_jsonl(input_path);
  std::stable_sort(examples.begin(), examples.end(),
                   [](const SentenceExample& a, const SentenceExample& b) { return a.id < b.id; });
  const auto result =
      trainer::evaluate(*loaded.model, examples, trainer::resolve_threads(loaded.model->config().train));

  std::ofstream file;
  std::ostream* sink = &out;
  if (output_path != "-") {
    file.open(output_path);
    if (!file) throw DataError("cannot write '" + output_path + "'");
    sink = &file;
  }
  const auto& vocab = loaded.model->vocab();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto preds = result.predictions[i];
    std::sort(preds.begin(), preds.end(), [&](const auto& a, const auto& b) {
      return std::tie(a.start, a.end, vocab.type_name(a.type)) < std::tie(b.start, b.end, vocab.type_name(b.type));
    });
    json entities = json::array();
    for (const auto& e : preds) {
      entities.push_back({{"start", e.start}, {"end", e.end}, {"type", vocab.type_name(e.type)}, {"score", e.score}});
    }
    *sink << json{{"id", examples[i].id}, {"entities", entities}}.dump() << '\n';
  }
}

bool cmd_gradcheck(std::ostream& out) {
  bool ok = true;
  run_gradcheck_suite([&](const GradCheckEntry& e) {
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-24s max_rel_error %.3e  coords %6zu  %.2fs  worst %s\n",
                  e.passed ? "PASS" : "FAIL", e.name.c_str(), e.max_rel_error, e.coordinates, e.seconds,
                  e.worst.c_str());
    out << line << std::flush;
    ok = ok && e.passed;
  });
  return ok;
}

void cmd_synth(const std::string& out_dir, std::uint64_t seed, int sentences, int max_len, int types,
               double nest_prob, std::ostream& out) {
  const auto corpus = data::synth_nested_corpus(seed, sentences, max_len, types, nest_prob);
  fs::create_directories(out_dir);
  data::save_jsonl((fs::path(out_dir) / "train.jsonl").string(), corpus.train);
  data::save_jsonl((fs::path(out_dir) / "dev.jsonl").string(), corpus.dev);
  write_json((fs::path(out_dir) / "stats.json").string(), corpus.stats.to_json());
  out << corpus.stats.to_json().dump() << '\n';
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Proposer-regressor set prediction for flat and nested NER"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, data_path, input_path, format = "jsonl";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "JSON configuration file");
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--set", overrides, "Override key=value (repeatable)");
  train->add_option("--seed", seed, "Shorthand for --set train.seed=N");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_path, "Labelled data")->required();
  eval->add_option("--format", format, "jsonl or conll");
  eval->add_option("--out", out_dir, "JSON report path");

  auto* predict = app.add_subcommand("predict", "Predict entities");
  predict->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  predict->add_option("--input", input_path, "JSONL sentences")->required();
  predict->add_option("--out", out_dir, "Output JSONL path, - for stdout");

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the gradient-check suite");
  gradcheck->add_option("--config", config_path, "Accepted for symmetry; the suite uses fixed shapes");

  int sentences = 64, max_len = 12, types = 3;
  double nest_prob = 0.3;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "Write a synthetic nested corpus");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--sentences", sentences, "Sentence count");
  synth->add_option("--max-len", max_len, "Maximum sentence length");
  synth->add_option("--types", types, "Entity type count");
  synth->add_option("--nest-prob", nest_prob, "Share of entities containing another");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (train->parsed()) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
      for (const auto& o : overrides) {
        apply_override(cfg, o);
        err << "override " << o << '\n';
      }
      if (train->count("--seed")) apply_override(cfg, "train.seed=" + std::to_string(seed));
      cmd_train(cfg, out_dir, err);
    } else if (eval->parsed()) {
      cmd_eval(checkpoint, data_path, format, out_dir, out);
    } else if (predict->parsed()) {
      cmd_predict(checkpoint, input_path, out_dir.empty() ? "-" : out_dir, out);
    } else if (gradcheck->parsed()) {
      if (!config_path.empty()) load_config(config_path);
      if (!cmd_gradcheck(out)) return kNumeric;
    } else if (synth->parsed()) {
      cmd_synth(out_dir, synth_seed, sentences, max_len, types, nest_prob, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}

}  // namespace nestor::cli
