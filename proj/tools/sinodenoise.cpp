#include "sinodenoise/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"sinodenoise: self-supervised low-dose CT projection denoising"};
  app.require_subcommand(1);

  sd::pipeline::CommandArgs args;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool seed_set = false, out_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment configuration file")
        ->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--out", out_dir, "output directory (overrides the config)")
        ->each([&](const std::string&) { out_set = true; });
  };

  for (const char* name : {"simulate", "pretrain-noise", "train", "denoise",
                           "reconstruct", "evaluate", "cross-test"}) {
    auto* sub = app.add_subcommand(name);
    add_common(sub);
    if (std::string(name) == "train")
      sub->add_option("--regime", args.regime, "training regime (overrides the config)");
  }

  CLI11_PARSE(app, argc, argv);

  args.command = app.get_subcommands().front()->get_name();
  args.config_path = config_path;
  if (seed_set) args.seed = seed;
  if (out_set) args.out_dir = out_dir;

  args.workers = 1;
  if (const char* env = std::getenv("SINODENOISE_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) args.workers = w;
  }

  return sd::pipeline::run_command(args);
}
