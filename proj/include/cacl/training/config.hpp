#ifndef CACL_TRAINING_CONFIG_HPP_
#define CACL_TRAINING_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cacl/agents/agent.hpp"
#include "cacl/comm_losses/comm_losses.hpp"
#include "cacl/envs/env.hpp"

namespace cacl::training {

struct ExperimentConfig {
  env::EnvConfig env = env::EnvConfig::predator_prey();
  agents::Method method = agents::Method::kIac;
  std::uint64_t seed = 0;
  std::int64_t total_env_steps = 1'000'000;

  double learning_rate = 3e-4;
  double adam_eps = 1e-3;
  double gamma = 0.99;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double grad_clip = 2500.0;
  double pl_coef = 0.01;
  double aecomm_coef = 1.0;
  int instances = 12;
  int nstep = 5;
  int segment_length = 20;
  comm::ContrastiveConfig contrastive;

  int eval_interval = 100;  // iterations; 0 disables periodic evaluation
  int eval_episodes = 12;
  int log_interval = 10;          // iterations per metrics row
  int checkpoint_interval = 0;    // iterations; 0 keeps only the final one

  std::int64_t steps_per_iteration() const {
    return static_cast<std::int64_t>(instances) * segment_length;
  }
  std::int64_t iterations() const;
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Every setting has a flat name; files, flags and manifests all use it.
// "env" resets the environment block to that environment's defaults, so it
// is applied before any other key.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> setting_names();

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

}  // namespace cacl::training

#endif  // CACL_TRAINING_CONFIG_HPP_
