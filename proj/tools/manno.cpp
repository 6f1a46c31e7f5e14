// Command line front end: synth | train | eval | compare, each driven by a
// JSON run config. See configs/ for examples.
#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "manno/commands.hpp"
#include "manno/parallel.hpp"
#include "manno/runconfig.hpp"

int main(int argc, char** argv) {
  CLI::App app{"annotator-level modeling and uncertainty toolkit"};
  app.require_subcommand(1);

  struct VerbArgs {
    std::string config;
    int jobs = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
  };

  const struct {
    const char* name;
    const char* help;
  } verbs[] = {
      {"synth", "generate a synthetic corpus plus generator-truth sidecar"},
      {"train", "train one model per (architecture, fold), saving checkpoints"},
      {"eval", "evaluate saved checkpoints into report/CSV files"},
      {"compare", "train + evaluate + mismatch analysis + timing table"},
  };

  VerbArgs args;
  for (const auto& v : verbs) {
    CLI::App* sub = app.add_subcommand(v.name, v.help);
    sub->add_option("config", args.config, "run config (JSON)")->required();
    sub->add_option("--jobs", args.jobs,
                    "worker threads for the parallel kernels (1 = serial)");
    sub->add_option("--seed", args.seed, "override the config's master seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    sub->add_option("--out", args.out, "override the config's out_dir");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string verb = app.get_subcommands().front()->get_name();

  manno::RunConfig cfg;
  try {
    cfg = manno::load_run_config(args.config);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "manno %s: %s\n", verb.c_str(), e.what());
    return 1;
  }
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.train.seed = args.seed;
  }
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (args.jobs > 0) {
    manno::set_exec_threads(args.jobs);
    manno::set_default_exec(args.jobs == 1 ? manno::Exec::Serial
                                           : manno::Exec::OpenMP);
  }

  return manno::run_command(verb, cfg);
}
