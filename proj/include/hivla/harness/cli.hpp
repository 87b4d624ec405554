#pragma once

namespace hivla::harness {

/// Experiment command line: gen-data, train, eval-success, eval-robustness,
/// eval-ablation, eval-planner. Every subcommand reads a JSON config file;
/// outputs land under the config's out_dir, else $HIVLA_OUT, else ./out,
/// content-addressed by a hash of the config. Exit codes: 0 success,
/// 2 config error, 3 runtime error, 4 a configured `require` gate failed.
int run_cli(int argc, char** argv);

}  // namespace hivla::harness
