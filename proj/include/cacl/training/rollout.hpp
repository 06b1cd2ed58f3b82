#ifndef CACL_TRAINING_ROLLOUT_HPP_
#define CACL_TRAINING_ROLLOUT_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "cacl/agents/agent.hpp"
#include "cacl/envs/env.hpp"
#include "cacl/numerics/rng.hpp"

namespace cacl::training {

struct EpisodeStats {
  double reward = 0.0;  // per-agent episode return, averaged over agents
  int length = 0;
  bool success = false;
  int captures = 0;  // Predator-Prey prey captured
};

// One synchronous segment of `steps` transitions from every instance.
// Per-agent arrays are indexed [agent][t] and hold one row per instance
// (row-major, instance-minor), so a slice is a ready-made batch.
struct RolloutBatch {
  int steps = 0;
  int instances = 0;
  int agents = 0;
  std::size_t obs_dim = 0;
  std::size_t received_dim = 0;

  template <typename T>
  using PerAgentStep = std::vector<std::vector<std::vector<T>>>;

  PerAgentStep<double> obs;        // B x obs_dim
  PerAgentStep<double> received;   // B x (N-1)*4, as delivered at t
  PerAgentStep<double> messages;   // B x 4, emitted at t
  PerAgentStep<std::size_t> actions;
  PerAgentStep<double> rewards;
  PerAgentStep<double> values;
  PerAgentStep<char> acting;       // took an environment action at t
  PerAgentStep<char> comm_active;  // message counts as a contrastive sample
  PerAgentStep<char> terminal;     // no bootstrapping past t
  std::vector<std::vector<double>> h0;         // [agent] B x hidden at t = 0
  std::vector<std::vector<double>> bootstrap;  // [agent] V(s_T) per instance

  std::vector<std::vector<char>> done;             // [t] episode ended after t
  std::vector<std::vector<char>> episode_start;    // [t] first step of an episode
  std::vector<std::vector<std::uint64_t>> trajectory;  // [t] (instance, episode) id

  std::vector<EpisodeStats> completed;  // episodes that ended inside the segment

  std::int64_t env_steps() const { return static_cast<std::int64_t>(steps) * instances; }
  std::size_t row(int t, int instance) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(instances) +
           static_cast<std::size_t>(instance);
  }
};

// Parallel environment instances plus the per-instance recurrent and
// channel state that persists across segments.
class RolloutWorkers {
 public:
  RolloutWorkers(const env::EnvConfig& config, int instances, std::uint64_t seed);

  // Advances every instance `steps` transitions with the team's current
  // parameters (read-only). Episodes auto-reset on done.
  RolloutBatch collect(const std::vector<agents::Agent>& team, int steps);

  int instances() const { return static_cast<int>(envs_.size()); }
  const env::Environment& env(int i) const { return *envs_.at(static_cast<std::size_t>(i)); }

 private:
  void reset_instance(std::size_t i);
  // Rows of received messages for `agent`, zero after a reset.
  std::vector<double> received_rows(int agent) const;

  env::EnvConfig config_;
  std::uint64_t seed_;
  std::vector<std::unique_ptr<env::Environment>> envs_;
  std::vector<std::vector<env::Observation>> obs_;   // [instance][agent]
  std::vector<std::vector<double>> hidden_;          // [agent] B x hidden
  std::vector<std::vector<double>> last_message_;    // [agent] B x 4
  std::vector<std::vector<char>> last_comm_;         // [agent] B
  std::vector<char> fresh_;                          // [instance]
  std::vector<std::uint64_t> episode_;               // [instance]
  std::vector<std::vector<Rng>> action_rng_;         // [instance][agent]
  std::vector<std::vector<double>> episode_reward_;  // [instance][agent]
  std::vector<int> episode_captures_;
};

RolloutBatch collect_rollout(RolloutWorkers& workers, const std::vector<agents::Agent>& team,
                             int segment_length);

// Trajectory id of episode `episode` of instance `instance`.
inline std::uint64_t trajectory_id(std::size_t instance, std::uint64_t episode) {
  return (static_cast<std::uint64_t>(instance) << 40) | episode;
}

}  // namespace cacl::training

#endif  // CACL_TRAINING_ROLLOUT_HPP_
