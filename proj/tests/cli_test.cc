#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nestor/cli/commands.h"
#include "nestor/data/io.h"
#include "nestor/data/synth.h"
#include "nestor/error.h"
#include "nestor/numerics/ops.h"

using namespace nestor;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  const fs::path dir = fs::temp_directory_path() / "nestor_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::string write(const std::string& name, const std::string& text) {
  const auto path = (workdir() / name).string();
  std::ofstream(path) << text;
  return path;
}

std::string read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small, fast configuration over a synthetic corpus written to disk.
std::string tiny_config(const std::string& name, int seed = 1) {
  static bool written = false;
  const auto dir = workdir() / "corpus";
  if (!written) {
    std::ostringstream sink;
    cli::cmd_synth(dir.string(), 3, 12, 8, 2, 0.3, sink);
    written = true;
  }
  const json cfg = {
      {"model", {{"dim", 8}, {"heads", 2}, {"kernel_sizes", {2}}, {"regressor_layers", 1}}},
      {"embeddings", {{"char_dim", 4}, {"char_hidden", 3}, {"word_dim", 6}, {"pos_dim", 0}}},
      {"train", {{"epochs", 2}, {"warmup_steps", 1}, {"batch_size", 4}, {"threads", 1}, {"seed", seed}}},
      {"data", {{"train", (dir / "train.jsonl").string()}, {"dev", (dir / "dev.jsonl").string()}}}};
  return write(name, cfg.dump());
}

}  // namespace

TEST_CASE("configuration errors exit with code 2 and name the key") {
  const auto empty = write("empty.json", "{}");
  auto r = run({"train", "--config", empty, "--out", (workdir() / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("data.train") != std::string::npos);

  const auto unknown = write("unknown.json", R"({"model": {"dimm": 3}})");
  r = run({"train", "--config", unknown, "--out", (workdir() / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("model.dimm") != std::string::npos);

  r = run({"train", "--config", tiny_config("c.json"), "--out", (workdir() / "o").string(), "--set",
           "model.heads=3"});
  CHECK(r.code == 2);
  CHECK(r.err.find("model.heads") != std::string::npos);

  r = run({"train", "--config", tiny_config("c.json"), "--out", (workdir() / "o").string(), "--set", "nokey"});
  CHECK(r.code == 2);

  r = run({"bogus"});
  CHECK(r.code == 2);
  r = run({});
  CHECK(r.code == 2);
}

TEST_CASE("overrides and config serialization") {
  RunConfig cfg;
  apply_override(cfg, "model.kernel_sizes=[2,3]");
  apply_override(cfg, "train.precision=f64");
  apply_override(cfg, "ablation.gated_update=false");
  apply_override(cfg, "data.train=/tmp/x.jsonl");
  CHECK(cfg.model.kernel_sizes == std::vector<int>{2, 3});
  CHECK(cfg.train.precision == "f64");
  CHECK_FALSE(cfg.ablation.gated_update);
  CHECK(cfg.data.train == "/tmp/x.jsonl");
  CHECK(config_to_json(config_from_json(config_to_json(cfg))) == config_to_json(cfg));
  CHECK_THROWS_AS(apply_override(cfg, "model.dim=\"wide\""), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train=3"), ConfigError);
  RunConfig bad;
  bad.train.precision = "f16";
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("data errors exit with code 3") {
  const auto cfg = write("missing_data.json", R"({"data": {"train": "/nonexistent/train.jsonl"}})");
  auto r = run({"train", "--config", cfg, "--out", (workdir() / "o").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("/nonexistent/train.jsonl") != std::string::npos);
}

TEST_CASE("train, eval and predict") {
  const auto out_a = workdir() / "run_a";
  const auto out_b = workdir() / "run_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  auto r = run({"train", "--config", tiny_config("t.json"), "--out", out_a.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out_a / "config.json"));
  CHECK(fs::exists(out_a / "model.ckpt"));
  std::ifstream metrics(out_a / "metrics.jsonl");
  int lines = 0;
  for (std::string line; std::getline(metrics, line);) {
    const auto j = json::parse(line);
    CHECK(j.contains("loss"));
    CHECK(j.contains("dev"));
    ++lines;
  }
  CHECK(lines == 2);

  SUBCASE("same seed gives an identical checkpoint") {
    REQUIRE(run({"train", "--config", tiny_config("t.json"), "--out", out_b.string()}).code == 0);
    CHECK(read(out_a / "model.ckpt") == read(out_b / "model.ckpt"));
    REQUIRE(run({"train", "--config", tiny_config("t.json"), "--out", out_b.string(), "--seed", "2"}).code == 0);
    CHECK(read(out_a / "model.ckpt") != read(out_b / "model.ckpt"));
  }

  SUBCASE("eval prints a table and writes JSON") {
    const auto report = (workdir() / "report.json").string();
    const auto dev = (workdir() / "corpus" / "dev.jsonl").string();
    r = run({"eval", "--checkpoint", (out_a / "model.ckpt").string(), "--data", dev, "--out", report});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("nested pairs recovered") != std::string::npos);
    const auto j = json::parse(read(report));
    CHECK(j["overall"]["gold"].get<long>() > 0);

    const auto empty = write("empty.jsonl", "");
    r = run({"eval", "--checkpoint", (out_a / "model.ckpt").string(), "--data", empty});
    CHECK(r.code == 0);
  }

  SUBCASE("unknown labels are a compatibility error") {
    const auto foreign = write("foreign.jsonl",
                               R"({"id": "f", "tokens": ["a", "b"], "entities": [{"start": 0, "end": 0, "type": "ALIEN"}]})"
                               "\n");
    r = run({"eval", "--checkpoint", (out_a / "model.ckpt").string(), "--data", foreign});
    CHECK(r.code == 4);
    CHECK(r.err.find("ALIEN") != std::string::npos);
  }

  SUBCASE("predict writes sorted JSON lines") {
    const auto input = write("input.jsonl", R"({"id": "b", "tokens": ["fill0", "head0_1"]})"
                                            "\n"
                                            R"({"id": "a", "tokens": ["unseen"]})"
                                            "\n");
    r = run({"predict", "--checkpoint", (out_a / "model.ckpt").string(), "--input", input});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::vector<std::string> ids;
    for (std::string line; std::getline(lines, line);) {
      const auto j = json::parse(line);
      ids.push_back(j["id"]);
      for (const auto& e : j["entities"]) {
        CHECK(e["start"].get<int>() <= e["end"].get<int>());
        CHECK(e["score"].get<double>() > 0.0);
      }
    }
    CHECK(ids == std::vector<std::string>{"a", "b"});

    const auto file = (workdir() / "pred.jsonl").string();
    REQUIRE(run({"predict", "--checkpoint", (out_a / "model.ckpt").string(), "--input", input, "--out", file})
                .code == 0);
    CHECK(read(file) == r.out);

    const auto empty = write("empty_in.jsonl", "");
    r = run({"predict", "--checkpoint", (out_a / "model.ckpt").string(), "--input", empty});
    CHECK(r.code == 0);
    CHECK(r.out.empty());

    const auto empty_tokens = write("empty_tokens.jsonl", R"({"id": "e", "tokens": []})"
                                                "\n");
    CHECK(run({"predict", "--checkpoint", (out_a / "model.ckpt").string(), "--input", empty_tokens}).code == 3);
  }

  SUBCASE("broken checkpoints") {
    const auto junk = write("junk.ckpt", "garbage!garbage!garbage!");
    r = run({"eval", "--checkpoint", junk, "--data", (workdir() / "corpus" / "dev.jsonl").string()});
    CHECK(r.code == 4);
  }
}

TEST_CASE("synth writes a corpus") {
  const auto dir = workdir() / "synth";
  fs::remove_all(dir);
  auto r = run({"synth", "--out", dir.string(), "--seed", "4", "--sentences", "20", "--nest-prob", "0.2"});
  REQUIRE(r.code == 0);
  CHECK(data::load_jsonl((dir / "train.jsonl").string()).size() == 15);
  CHECK(data::load_jsonl((dir / "dev.jsonl").string()).size() == 5);
  CHECK(json::parse(read(dir / "stats.json"))["sentences"] == 20);
}

TEST_CASE("gradcheck reports a corrupted op by name") {
  numerics::testing::inject_gradient_fault("tanh", 0.5);
  auto r = run({"gradcheck"});
  numerics::testing::inject_gradient_fault("");
  CHECK(r.code == 5);
  bool named = false;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("FAIL", 0) == 0 && line.find(" tanh ") != std::string::npos) named = true;
  }
  CHECK(named);
  CHECK(r.out.find("PASS transpose") != std::string::npos);
}
