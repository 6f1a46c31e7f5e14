#pragma once

#include <string>

#include "manno/runconfig.hpp"

namespace manno {

// Library entry points behind the `manno` binary. Each writes its artifacts
// under cfg.out_dir and returns a process exit code: 0 on success, 1 on bad
// input (validation/parse/argument errors), 2 on runtime failure. Failures
// also leave a machine-readable error.json in the output directory.
//
// Every command is a pure function of (config, input files, seed); rerunning
// one reproduces its outputs byte for byte. The only exceptions are
// run_info.json (timestamp) and timing.json/timing.txt (wall clocks), which
// exist to keep the volatile bits out of everything else.

// generate a synthetic corpus + generator-truth sidecar + stats block
int cmd_synth(const RunConfig& cfg);
// train one model per (architecture, iteration, fold); save checkpoints,
// training traces and test metrics
int cmd_train(const RunConfig& cfg);
// evaluate previously saved checkpoints: report.json/report.txt plus
// per-instance prediction and uncertainty CSVs
int cmd_eval(const RunConfig& cfg);
// train + evaluate in one go, adding the baseline/multi-task mismatch
// analysis and a per-architecture timing table
int cmd_compare(const RunConfig& cfg);

// dispatch on verb: synth | train | eval | compare
int run_command(const std::string& verb, const RunConfig& cfg);

}  // namespace manno
