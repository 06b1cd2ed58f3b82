#ifndef CACL_TRAINING_CHECKPOINT_HPP_
#define CACL_TRAINING_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cacl/agents/agent.hpp"
#include "cacl/training/config.hpp"

namespace cacl::training {

// Layout:
//   <dir>/team.json                      {"format", "config", "agents", "env_steps", "iteration"}
//   <dir>/agent_<i>/manifest.json        tensors + meta {method, env, seed, env_steps, agent}
//   <dir>/agent_<i>/params.bin
void save_checkpoint(const std::filesystem::path& dir, const ExperimentConfig& config,
                     const std::vector<agents::Agent>& team, std::int64_t env_steps,
                     std::int64_t iteration);

struct Checkpoint {
  ExperimentConfig config;
  std::vector<agents::Agent> team;
  std::int64_t env_steps = 0;
  std::int64_t iteration = 0;
};

// Rebuilds the team from the stored config, then overwrites every tensor.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Builds a fresh team for `config`; agent i draws from mix_seed(seed, 7, i).
std::vector<agents::Agent> make_team(const ExperimentConfig& config);

}  // namespace cacl::training

#endif  // CACL_TRAINING_CHECKPOINT_HPP_
