#ifndef CACL_ENVS_FIND_GOAL_HPP_
#define CACL_ENVS_FIND_GOAL_HPP_

#include <vector>

#include "cacl/envs/env.hpp"
#include "cacl/numerics/rng.hpp"

namespace cacl::env {

struct FindGoalState {
  std::vector<unsigned char> obstacles;  // grid*grid, row-major
  std::vector<Pos> agents;
  std::vector<bool> reached;
  Pos goal;
  int step = 0;
  int resamples = 0;  // obstacle maps rejected at the last reset
};

// Five location classes used by the probing suite.
enum class GoalRegion { kTopLeft = 0, kTopRight = 1, kBottomLeft = 2, kBottomRight = 3, kMiddle = 4 };
inline constexpr int kNumGoalRegions = 5;
std::string to_string(GoalRegion r);

// Middle is the central block of half-width grid/6 (the 5x5 block on a
// 15x15 grid) plus the centre row and column; everything else falls into
// the quadrant it lies in relative to the centre cell.
GoalRegion goal_region(Pos goal, int grid);

// True when every agent cell is connected to the goal through free cells.
bool goal_reachable(const FindGoalState& state, int grid);

class FindGoal final : public Environment {
 public:
  explicit FindGoal(EnvConfig config);

  const EnvConfig& config() const override { return config_; }
  // Throws std::runtime_error when 100 consecutive obstacle maps leave the
  // goal unreachable.
  void reset(std::uint64_t seed) override;
  StepResult step(std::span<const int> actions) override;
  Observation observe(int agent) const override;
  bool acting(int agent) const override;
  bool comm_active(int) const override { return true; }
  int steps() const override { return state_.step; }
  bool episode_success() const override;
  ProbeInfo probe_info(int agent) const override;
  nlohmann::json state_summary() const override;
  std::unique_ptr<Environment> clone() const override;

  const FindGoalState& state() const { return state_; }
  FindGoalState& mutable_state() { return state_; }
  bool blocked(Pos p) const;
  int obstacle_count() const;

 private:
  EnvConfig config_;
  FindGoalState state_;
};

}  // namespace cacl::env

#endif  // CACL_ENVS_FIND_GOAL_HPP_
