#ifndef CACL_ENVS_PREDATOR_PREY_HPP_
#define CACL_ENVS_PREDATOR_PREY_HPP_

#include <vector>

#include "cacl/envs/env.hpp"
#include "cacl/numerics/rng.hpp"

namespace cacl::env {

struct PredatorPreyState {
  std::vector<Pos> predators;
  std::vector<Pos> prey;
  std::vector<bool> prey_alive;
  int step = 0;
  Rng rng;
};

struct CaptureResult {
  std::vector<int> captured;  // prey indices removed this step
  int failed_attempts = 0;    // alive prey touched by a predator but not captured
  double reward = 0.0;
};

bool pp_occupied(const PredatorPreyState& s, Pos p);

// A prey is captured iff each of its in-grid orthogonal neighbours holds a
// predator (the grid boundary blocks the remaining sides). Captured prey are
// marked dead.
CaptureResult pp_capture_check(PredatorPreyState& state, const EnvConfig& config);

// Every alive prey samples an action from config.prey_move_probs; blocked
// moves (wall, predator, other prey) leave it in place.
void prey_move(PredatorPreyState& state, const EnvConfig& config, Rng& rng);

class PredatorPrey final : public Environment {
 public:
  explicit PredatorPrey(EnvConfig config);

  const EnvConfig& config() const override { return config_; }
  void reset(std::uint64_t seed) override;
  StepResult step(std::span<const int> actions) override;
  Observation observe(int agent) const override;
  bool acting(int) const override { return true; }
  bool comm_active(int) const override { return true; }
  int steps() const override { return state_.step; }
  bool episode_success() const override;
  ProbeInfo probe_info(int agent) const override;
  nlohmann::json state_summary() const override;
  std::unique_ptr<Environment> clone() const override;

  int prey_captured() const;
  const PredatorPreyState& state() const { return state_; }
  PredatorPreyState& mutable_state() { return state_; }

 private:
  EnvConfig config_;
  PredatorPreyState state_;
};

}  // namespace cacl::env

#endif  // CACL_ENVS_PREDATOR_PREY_HPP_
