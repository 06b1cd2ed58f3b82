#include "cacl/envs/env.hpp"

#include <cmath>
#include <stdexcept>

#include "cacl/envs/find_goal.hpp"
#include "cacl/envs/predator_prey.hpp"
#include "cacl/envs/traffic_junction.hpp"

namespace cacl::env {

std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::kPredatorPrey: return "predator_prey";
    case EnvId::kFindGoal: return "find_goal";
    case EnvId::kTrafficJunction: return "traffic_junction";
  }
  return "unknown";
}

EnvId parse_env_id(const std::string& name) {
  if (name == "pp" || name == "predator_prey") return EnvId::kPredatorPrey;
  if (name == "fg" || name == "find_goal") return EnvId::kFindGoal;
  if (name == "tj" || name == "traffic_junction") return EnvId::kTrafficJunction;
  throw std::invalid_argument("unknown environment '" + name + "'");
}

Pos moved(Pos p, int grid_action) {
  switch (grid_action) {
    case kLeft: return {p.x - 1, p.y};
    case kRight: return {p.x + 1, p.y};
    case kUp: return {p.x, p.y - 1};
    case kDown: return {p.x, p.y + 1};
    default: return p;
  }
}

EnvConfig EnvConfig::predator_prey() {
  EnvConfig c;
  c.id = EnvId::kPredatorPrey;
  c.grid = 7;
  c.agents = 4;
  c.max_steps = 200;
  return c;
}

EnvConfig EnvConfig::find_goal() {
  EnvConfig c;
  c.id = EnvId::kFindGoal;
  c.grid = 15;
  c.agents = 3;
  c.max_steps = 512;
  return c;
}

EnvConfig EnvConfig::traffic_junction() {
  EnvConfig c;
  c.id = EnvId::kTrafficJunction;
  c.grid = 7;
  c.agents = 5;
  c.max_steps = 20;
  c.step_penalty = 0.0;
  return c;
}

EnvConfig EnvConfig::defaults(EnvId id) {
  switch (id) {
    case EnvId::kPredatorPrey: return predator_prey();
    case EnvId::kFindGoal: return find_goal();
    case EnvId::kTrafficJunction: return traffic_junction();
  }
  throw std::invalid_argument("unknown environment id");
}

int EnvConfig::obs_dim() const {
  const int window = fov * fov;
  switch (id) {
    case EnvId::kPredatorPrey: return 2 + window;
    case EnvId::kFindGoal: return 3 * window + 2;
    case EnvId::kTrafficJunction: return window + 2 + 2;
  }
  return 0;
}

int EnvConfig::num_actions() const {
  return id == EnvId::kTrafficJunction ? kNumCarActions : kNumGridActions;
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("env config: " + what); };
  if (grid < 3) fail("grid must be at least 3");
  if (agents < 1) fail("need at least one agent");
  if (fov != 3) fail("field of view is fixed at 3x3");
  if (max_steps < 1) fail("max_steps must be positive");
  switch (id) {
    case EnvId::kPredatorPrey: {
      if (prey < 1) fail("need at least one prey");
      if (agents + prey > grid * grid) fail("grid too small for entities");
      double total = 0.0;
      for (double p : prey_move_probs) {
        if (p < 0.0) fail("negative prey move probability");
        total += p;
      }
      if (std::fabs(total - 1.0) > 1e-9) fail("prey move probabilities must sum to 1");
      break;
    }
    case EnvId::kFindGoal:
      if (obstacle_density < 0.0 || obstacle_density >= 1.0) fail("obstacle density in [0,1)");
      if (agents + 1 > grid * grid) fail("grid too small for entities");
      if (fixed_goal && (fixed_goal->x < 0 || fixed_goal->y < 0 || fixed_goal->x >= grid ||
                         fixed_goal->y >= grid)) {
        fail("fixed goal outside the grid");
      }
      break;
    case EnvId::kTrafficJunction:
      if (grid % 2 == 0) fail("junction grid must have odd size");
      if (arrival_min < 0.0 || arrival_max > 1.0 || arrival_min > arrival_max) {
        fail("arrival rate range must satisfy 0 <= min <= max <= 1");
      }
      break;
  }
}

std::vector<Observation> Environment::observations() const {
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(num_agents()));
  for (int i = 0; i < num_agents(); ++i) out.push_back(observe(i));
  return out;
}

std::unique_ptr<Environment> make_env(const EnvConfig& config) {
  config.validate();
  switch (config.id) {
    case EnvId::kPredatorPrey: return std::make_unique<PredatorPrey>(config);
    case EnvId::kFindGoal: return std::make_unique<FindGoal>(config);
    case EnvId::kTrafficJunction: return std::make_unique<TrafficJunction>(config);
  }
  throw std::invalid_argument("unknown environment id");
}

int window_index(Pos center, Pos cell, int fov) {
  const int half = fov / 2;
  const int dx = cell.x - center.x + half;
  const int dy = cell.y - center.y + half;
  if (dx < 0 || dy < 0 || dx >= fov || dy >= fov) return -1;
  return dy * fov + dx;
}

}  // namespace cacl::env
