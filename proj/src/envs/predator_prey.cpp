#include "cacl/envs/predator_prey.hpp"

#include <stdexcept>

namespace cacl::env {

namespace {

bool in_grid(Pos p, int grid) { return p.x >= 0 && p.y >= 0 && p.x < grid && p.y < grid; }

bool predator_at(const PredatorPreyState& s, Pos p) {
  for (const Pos& q : s.predators) {
    if (q == p) return true;
  }
  return false;
}

bool alive_prey_at(const PredatorPreyState& s, Pos p, std::size_t skip = SIZE_MAX) {
  for (std::size_t k = 0; k < s.prey.size(); ++k) {
    if (k != skip && s.prey_alive[k] && s.prey[k] == p) return true;
  }
  return false;
}

}  // namespace

bool pp_occupied(const PredatorPreyState& s, Pos p) {
  return predator_at(s, p) || alive_prey_at(s, p);
}

CaptureResult pp_capture_check(PredatorPreyState& state, const EnvConfig& config) {
  CaptureResult result;
  for (std::size_t k = 0; k < state.prey.size(); ++k) {
    if (!state.prey_alive[k]) continue;
    int in_grid_sides = 0;
    int predator_sides = 0;
    for (int a = kLeft; a <= kDown; ++a) {
      const Pos n = moved(state.prey[k], a);
      if (!in_grid(n, config.grid)) continue;
      ++in_grid_sides;
      if (predator_at(state, n)) ++predator_sides;
    }
    if (predator_sides == in_grid_sides) {
      result.captured.push_back(static_cast<int>(k));
    } else if (predator_sides > 0) {
      ++result.failed_attempts;
    }
  }
  // Removal happens after evaluation so two prey are judged on the same board.
  for (int k : result.captured) state.prey_alive[static_cast<std::size_t>(k)] = false;
  result.reward = config.capture_reward * static_cast<double>(result.captured.size()) +
                  config.failed_attempt_penalty * result.failed_attempts;
  return result;
}

void prey_move(PredatorPreyState& state, const EnvConfig& config, Rng& rng) {
  for (std::size_t k = 0; k < state.prey.size(); ++k) {
    if (!state.prey_alive[k]) continue;
    const std::size_t action = rng.categorical(config.prey_move_probs);
    const Pos target = moved(state.prey[k], static_cast<int>(action));
    if (!in_grid(target, config.grid)) continue;
    if (predator_at(state, target) || alive_prey_at(state, target, k)) continue;
    state.prey[k] = target;
  }
}

PredatorPrey::PredatorPrey(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  reset(0);
}

void PredatorPrey::reset(std::uint64_t seed) {
  state_ = PredatorPreyState{};
  state_.rng = Rng(seed);
  const int cells = config_.grid * config_.grid;
  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) order[static_cast<std::size_t>(i)] = i;
  state_.rng.shuffle(order.begin(), order.end());
  std::size_t next = 0;
  auto take = [&] {
    const int c = order[next++];
    return Pos{c % config_.grid, c / config_.grid};
  };
  for (int i = 0; i < config_.agents; ++i) state_.predators.push_back(take());
  for (int k = 0; k < config_.prey; ++k) {
    state_.prey.push_back(take());
    state_.prey_alive.push_back(true);
  }
}

StepResult PredatorPrey::step(std::span<const int> actions) {
  if (actions.size() != static_cast<std::size_t>(config_.agents)) {
    throw std::invalid_argument("predator_prey: expected one action per predator");
  }
  for (int a : actions) {
    if (a < 0 || a >= kNumGridActions) {
      throw std::invalid_argument("predator_prey: illegal action " + std::to_string(a));
    }
  }
  state_.step += 1;
  // Predators are solid; ascending index order resolves conflicts.
  for (std::size_t i = 0; i < state_.predators.size(); ++i) {
    const Pos target = moved(state_.predators[i], actions[i]);
    if (target == state_.predators[i] || !in_grid(target, config_.grid)) continue;
    if (pp_occupied(state_, target)) continue;
    state_.predators[i] = target;
  }
  prey_move(state_, config_, state_.rng);
  const CaptureResult capture = pp_capture_check(state_, config_);

  StepResult result;
  const double reward = config_.step_penalty + capture.reward;
  result.rewards.assign(static_cast<std::size_t>(config_.agents), reward);
  result.captures = static_cast<int>(capture.captured.size());
  result.failed_attempts = capture.failed_attempts;
  bool any_alive = false;
  for (bool alive : state_.prey_alive) any_alive = any_alive || alive;
  result.done = !any_alive || state_.step >= config_.max_steps;
  result.observations = observations();
  return result;
}

Observation PredatorPrey::observe(int agent) const {
  const Pos me = state_.predators.at(static_cast<std::size_t>(agent));
  Observation obs(static_cast<std::size_t>(config_.obs_dim()), 0.0);
  const double scale = 1.0 / static_cast<double>(config_.grid - 1);
  obs[0] = me.x * scale;
  obs[1] = me.y * scale;
  for (std::size_t k = 0; k < state_.prey.size(); ++k) {
    if (!state_.prey_alive[k]) continue;
    const int idx = window_index(me, state_.prey[k], config_.fov);
    if (idx >= 0) obs[2 + static_cast<std::size_t>(idx)] = 1.0;
  }
  return obs;
}

int PredatorPrey::prey_captured() const {
  int n = 0;
  for (bool alive : state_.prey_alive) n += alive ? 0 : 1;
  return n;
}

bool PredatorPrey::episode_success() const { return prey_captured() == config_.prey; }

ProbeInfo PredatorPrey::probe_info(int agent) const {
  ProbeInfo info;
  const Pos me = state_.predators.at(static_cast<std::size_t>(agent));
  for (std::size_t j = 0; j < state_.predators.size(); ++j) {
    if (static_cast<int>(j) != agent && window_index(me, state_.predators[j], config_.fov) >= 0) {
      info.other_agent_visible = true;
    }
  }
  return info;
}

nlohmann::json PredatorPrey::state_summary() const {
  nlohmann::json predators = nlohmann::json::array();
  for (const Pos& p : state_.predators) predators.push_back({p.x, p.y});
  nlohmann::json prey = nlohmann::json::array();
  for (std::size_t k = 0; k < state_.prey.size(); ++k) {
    prey.push_back({{"pos", {state_.prey[k].x, state_.prey[k].y}},
                    {"alive", static_cast<bool>(state_.prey_alive[k])}});
  }
  return {{"step", state_.step}, {"predators", predators}, {"prey", prey}};
}

std::unique_ptr<Environment> PredatorPrey::clone() const {
  return std::make_unique<PredatorPrey>(*this);
}

}  // namespace cacl::env
