#pragma once

#include "sinodenoise/config.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

namespace sd::pipeline {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2; // validation / configuration failure
inline constexpr int kExitGate = 3;   // quality gate failure (noise-model fit)

// Every key any command understands; unknown keys are rejected at parse time.
const std::set<std::string>& allowed_config_keys();

struct CommandArgs {
  std::string command;
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;    // overrides config "seed"
  std::optional<std::string> out_dir;   // overrides config "out_dir"
  std::string regime;                   // train only, overrides config "regime"
  int workers = 1;                      // from SINODENOISE_WORKERS
};

// Dispatches to the command implementations; translates domain exceptions to
// exit code 2. Prints human-readable progress to stdout, errors to stderr.
int run_command(const CommandArgs& args);

int cmd_simulate(const config::Config& cfg, std::uint64_t seed,
                 const std::filesystem::path& out);
int cmd_pretrain_noise(const config::Config& cfg, std::uint64_t seed,
                       const std::filesystem::path& out);
int cmd_train(const config::Config& cfg, std::uint64_t seed,
              const std::filesystem::path& out, const std::string& regime,
              int workers);
int cmd_denoise(const config::Config& cfg, std::uint64_t seed,
                const std::filesystem::path& out);
int cmd_reconstruct(const config::Config& cfg, std::uint64_t seed,
                    const std::filesystem::path& out);
int cmd_evaluate(const config::Config& cfg, std::uint64_t seed,
                 const std::filesystem::path& out);
int cmd_cross_test(const config::Config& cfg, std::uint64_t seed,
                   const std::filesystem::path& out);

// short numeric tag used in artifact names, e.g. 0.25 -> "0.25"
std::string alpha_tag(double alpha);

} // namespace sd::pipeline
