#ifndef CACL_TRAINING_EPISODE_HPP_
#define CACL_TRAINING_EPISODE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "cacl/agents/agent.hpp"
#include "cacl/envs/env.hpp"

namespace cacl::training {

struct EpisodeResult {
  double reward = 0.0;  // mean over agents of each agent's summed reward
  std::vector<double> agent_rewards;
  int length = 0;
  bool success = false;
  int captures = 0;
  int collisions = 0;
};

// What an observer sees at step t, before the environment advances.
struct StepView {
  int t = 0;
  const env::Environment* env = nullptr;
  const std::vector<env::Observation>* observations = nullptr;
  const std::vector<agents::Message>* messages = nullptr;  // emitted at t
  const std::vector<int>* actions = nullptr;
  const std::vector<char>* comm_active = nullptr;
};
using StepObserver = std::function<void(const StepView&)>;

enum class ActionMode { kGreedy, kSample };

// One episode with `team[i]` in slot i. Messages follow the training
// channel: delivered one step late, zero at the first step and from
// senders that are not communicating. Greedy ties go to the lowest index.
EpisodeResult run_episode(const std::vector<const agents::Agent*>& team, const env::EnvConfig& config,
                          std::uint64_t env_seed, ActionMode mode = ActionMode::kGreedy,
                          std::uint64_t action_seed = 0, const StepObserver& observer = {});

// `episodes` episodes; episode k resets with mix_seed(seed, k).
std::vector<EpisodeResult> evaluate_team(const std::vector<const agents::Agent*>& team,
                                         const env::EnvConfig& config, int episodes,
                                         std::uint64_t seed, ActionMode mode = ActionMode::kGreedy);

std::vector<const agents::Agent*> team_view(const std::vector<agents::Agent>& team);

struct EvalSummary {
  double mean_reward = 0.0;
  double mean_length = 0.0;
  double success_rate = 0.0;
  double mean_captures = 0.0;
  int episodes = 0;
};
EvalSummary summarize(const std::vector<EpisodeResult>& results);

}  // namespace cacl::training

#endif  // CACL_TRAINING_EPISODE_HPP_
