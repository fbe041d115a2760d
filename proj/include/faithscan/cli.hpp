#pragma once

#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

#include "faithscan/detector.hpp"
#include "faithscan/error.hpp"
#include "faithscan/reliability.hpp"
#include "faithscan/supervision.hpp"
#include "faithscan/synth.hpp"
#include "faithscan/trainer.hpp"

namespace faithscan {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitJudge = 4;
inline constexpr int kExitNumeric = 5;

int exit_code_for(ErrorKind kind);

struct ModelOptions {
  EncoderKind encoder = EncoderKind::linear_pool;
  std::size_t embed_dim = 64;
  FusionSpec fusion;
};

// Everything a run can be configured with from a JSON file. Sections:
// "seed", "synth", "model", "train", "reliability", "judge". Unknown keys at any
// level are rejected.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  SynthSpec synth;
  ModelOptions model;
  TrainConfig train;
  WeightCombination reliability;
  JudgeSettings judge;
};

RunConfig run_config_from_json(const nlohmann::json& j);

ModelSpec build_model_spec(const Schema& schema, const ModelOptions& options);

// Entry point of the `faithscan` tool; returns the process exit code. Errors
// are reported on stderr as a single JSON object.
int run_cli(int argc, const char* const* argv);

}  // namespace faithscan
