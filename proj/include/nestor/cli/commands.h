#ifndef NESTOR_CLI_COMMANDS_H_
#define NESTOR_CLI_COMMANDS_H_

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

#include "nestor/cli/config.h"
#include "nestor/data/metrics.h"
#include "nestor/trainer/trainer.h"

namespace nestor::cli {

// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kData = 3,
  kCompatibility = 4,
  kNumeric = 5,
};

int exit_code_for(const std::exception& e);

// Trains on cfg.data.train, evaluating on cfg.data.dev when set. Writes
// <out_dir>/config.json (resolved), <out_dir>/metrics.jsonl (one line per
// epoch) and <out_dir>/model.ckpt (parameters of the best dev epoch, or of
// the last epoch without a dev set).
trainer::TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);

// Prints the metrics table to `out` and writes the JSON report to
// json_path when non-empty. Throws CompatibilityError listing entity types
// unknown to the checkpoint.
data::MetricsReport cmd_eval(const std::string& checkpoint, const std::string& data_path,
                             const std::string& format, const std::string& json_path, std::ostream& out);

// Writes {"id", "entities": [{"start", "end", "type", "score"}]} lines
// ordered by sentence id, entities by (start, end, type). output_path "-"
// writes to `out`.
void cmd_predict(const std::string& checkpoint, const std::string& input_path, const std::string& output_path,
                 std::ostream& out);

// Runs the gradient-check suite; returns true when every entry passes.
bool cmd_gradcheck(std::ostream& out);

// Writes train.jsonl, dev.jsonl and stats.json of a synthetic corpus.
void cmd_synth(const std::string& out_dir, std::uint64_t seed, int sentences, int max_len, int types,
               double nest_prob, std::ostream& out);

// Full command-line entry point; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nestor::cli

#endif  // NESTOR_CLI_COMMANDS_H_
