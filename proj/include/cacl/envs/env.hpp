#ifndef CACL_ENVS_ENV_HPP_
#define CACL_ENVS_ENV_HPP_

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cacl::env {

enum class EnvId { kPredatorPrey, kFindGoal, kTrafficJunction };

std::string to_string(EnvId id);
// Accepts short ("pp", "fg", "tj") and long ("predator_prey", ...) names.
EnvId parse_env_id(const std::string& name);

struct Pos {
  int x = 0;  // column
  int y = 0;  // row, 0 at the top
  bool operator==(const Pos&) const = default;
};

// Grid actions for Predator-Prey and Find-Goal.
enum GridAction : int { kLeft = 0, kRight = 1, kUp = 2, kDown = 3, kNoop = 4 };
inline constexpr int kNumGridActions = 5;
// Traffic-Junction actions.
enum CarAction : int { kGas = 0, kBrake = 1 };
inline constexpr int kNumCarActions = 2;

Pos moved(Pos p, int grid_action);

struct EnvConfig {
  EnvId id = EnvId::kPredatorPrey;
  int grid = 7;
  int agents = 4;
  int fov = 3;
  int max_steps = 200;
  double step_penalty = -0.01;

  // Predator-Prey
  int prey = 2;
  std::array<double, 5> prey_move_probs{0.175, 0.175, 0.175, 0.175, 0.3};
  double capture_reward = 10.0;
  double failed_attempt_penalty = -0.5;

  // Find-Goal
  double obstacle_density = 0.15;
  double goal_reward = 1.0;
  double all_reached_bonus = 5.0;
  std::optional<Pos> fixed_goal;

  // Traffic-Junction
  double arrival_min = 0.1;
  double arrival_max = 0.3;
  double collision_penalty = -10.0;
  double time_penalty = -0.01;

  static EnvConfig predator_prey();
  static EnvConfig find_goal();
  static EnvConfig traffic_junction();
  static EnvConfig defaults(EnvId id);

  int obs_dim() const;
  int num_actions() const;
  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

using Observation = std::vector<double>;

struct StepResult {
  std::vector<Observation> observations;
  std::vector<double> rewards;  // one per agent slot
  bool done = false;
  // Predator-Prey
  int captures = 0;
  int failed_attempts = 0;
  // Traffic-Junction
  int collisions = 0;
  // Find-Goal: agents that reached the goal on this step
  std::vector<int> arrivals;
  // Agents whose participation ended on this step without the episode
  // ending (Find-Goal arrivals, Traffic-Junction exits).
  std::vector<int> finished;
};

// What an external observer can say about one agent's view; used for
// probing datasets and message dumps.
struct ProbeInfo {
  bool goal_visible = false;
  bool other_agent_visible = false;
  std::optional<Pos> goal;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvConfig& config() const = 0;
  virtual void reset(std::uint64_t seed) = 0;
  // Throws std::invalid_argument for a wrong number of actions or an
  // illegal action index.
  virtual StepResult step(std::span<const int> actions) = 0;
  virtual Observation observe(int agent) const = 0;

  // Agent takes environment actions this step (and contributes RL samples).
  virtual bool acting(int agent) const = 0;
  // Agent's message is delivered / used as a contrastive sample.
  virtual bool comm_active(int agent) const = 0;

  virtual int steps() const = 0;
  virtual bool episode_success() const = 0;
  virtual ProbeInfo probe_info(int agent) const = 0;
  virtual nlohmann::json state_summary() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  int num_agents() const { return config().agents; }
  int obs_dim() const { return config().obs_dim(); }
  int num_actions() const { return config().num_actions(); }
  std::vector<Observation> observations() const;
};

std::unique_ptr<Environment> make_env(const EnvConfig& config);

// Observation of the square window of side `fov` centered on `center`;
// returns flat row-major indices for in-grid cells, -1 outside.
int window_index(Pos center, Pos cell, int fov);

}  // namespace cacl::env

#endif  // CACL_ENVS_ENV_HPP_
