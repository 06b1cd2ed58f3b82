#include "cacl/envs/traffic_junction.hpp"

#include <stdexcept>

namespace cacl::env {

Pos route_cell(int route, int progress, int grid) {
  const int mid = grid / 2;
  return route == 0 ? Pos{progress, mid} : Pos{mid, progress};
}

CarDynamics tj_dynamics(TrafficJunctionState& state, std::span<const int> actions,
                        const EnvConfig& config, Rng& rng) {
  CarDynamics out;
  const std::size_t slots = state.cars.size();
  for (std::size_t i = 0; i < slots; ++i) {
    Car& car = state.cars[i];
    if (!car.active) continue;
    if (actions[i] == kGas) car.progress += 1;
    if (car.progress >= config.grid) {
      car = Car{};
      out.exited.push_back(static_cast<int>(i));
      continue;
    }
    car.age += 1;
  }
  out.car_penalty.assign(slots, 0.0);
  for (std::size_t i = 0; i < slots; ++i) {
    const Car& car = state.cars[i];
    if (!car.active) continue;
    const Pos p = route_cell(car.route, car.progress, config.grid);
    bool hit = false;
    for (std::size_t j = 0; j < slots; ++j) {
      if (j == i || !state.cars[j].active) continue;
      if (route_cell(state.cars[j].route, state.cars[j].progress, config.grid) == p) hit = true;
    }
    out.car_penalty[i] = config.time_penalty * car.age + (hit ? config.collision_penalty : 0.0);
    if (hit) out.collisions += 1;
  }
  for (int route = 0; route < kNumRoutes; ++route) {
    if (!rng.bernoulli(state.arrival_rate)) continue;
    for (std::size_t i = 0; i < slots; ++i) {
      if (state.cars[i].active) continue;
      state.cars[i] = Car{true, route, 0, 0};
      out.spawned.push_back(static_cast<int>(i));
      break;
    }
  }
  return out;
}

TrafficJunction::TrafficJunction(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  reset(0);
}

void TrafficJunction::reset(std::uint64_t seed) {
  state_ = TrafficJunctionState{};
  state_.rng = Rng(seed);
  state_.cars.assign(static_cast<std::size_t>(config_.agents), Car{});
  state_.arrival_rate = state_.rng.uniform(config_.arrival_min, config_.arrival_max);
}

bool TrafficJunction::acting(int agent) const {
  return state_.cars.at(static_cast<std::size_t>(agent)).active;
}

int TrafficJunction::active_cars() const {
  int n = 0;
  for (const Car& c : state_.cars) n += c.active ? 1 : 0;
  return n;
}

StepResult TrafficJunction::step(std::span<const int> actions) {
  const std::size_t slots = state_.cars.size();
  if (actions.size() != slots) {
    throw std::invalid_argument("traffic_junction: expected one action per slot");
  }
  std::vector<bool> was_acting(slots);
  for (std::size_t i = 0; i < slots; ++i) {
    was_acting[i] = state_.cars[i].active;
    if (was_acting[i] && (actions[i] < 0 || actions[i] >= kNumCarActions)) {
      throw std::invalid_argument("traffic_junction: illegal action " +
                                  std::to_string(actions[i]));
    }
  }
  state_.step += 1;
  const CarDynamics dyn = tj_dynamics(state_, actions, config_, state_.rng);
  if (dyn.collisions > 0) state_.collided = true;

  double team = 0.0;
  for (double p : dyn.car_penalty) team += p;
  StepResult result;
  result.rewards.assign(slots, 0.0);
  for (std::size_t i = 0; i < slots; ++i) {
    if (was_acting[i]) result.rewards[i] = team;
  }
  result.collisions = dyn.collisions;
  result.finished = dyn.exited;
  result.done = state_.step >= config_.max_steps;
  result.observations = observations();
  return result;
}

Observation TrafficJunction::observe(int agent) const {
  Observation obs(static_cast<std::size_t>(config_.obs_dim()), 0.0);
  const Car& me = state_.cars.at(static_cast<std::size_t>(agent));
  if (!me.active) return obs;
  const Pos p = route_cell(me.route, me.progress, config_.grid);
  for (std::size_t j = 0; j < state_.cars.size(); ++j) {
    if (static_cast<int>(j) == agent || !state_.cars[j].active) continue;
    const Pos q = route_cell(state_.cars[j].route, state_.cars[j].progress, config_.grid);
    const int idx = window_index(p, q, config_.fov);
    if (idx >= 0) obs[static_cast<std::size_t>(idx)] = 1.0;
  }
  const std::size_t window = static_cast<std::size_t>(config_.fov * config_.fov);
  const double scale = 1.0 / static_cast<double>(config_.grid - 1);
  obs[window] = p.x * scale;
  obs[window + 1] = p.y * scale;
  obs[window + 2 + static_cast<std::size_t>(me.route)] = 1.0;
  return obs;
}

ProbeInfo TrafficJunction::probe_info(int agent) const {
  ProbeInfo info;
  const Car& me = state_.cars.at(static_cast<std::size_t>(agent));
  if (!me.active) return info;
  const Observation obs = observe(agent);
  for (int k = 0; k < config_.fov * config_.fov; ++k) {
    if (obs[static_cast<std::size_t>(k)] > 0.0) info.other_agent_visible = true;
  }
  return info;
}

nlohmann::json TrafficJunction::state_summary() const {
  nlohmann::json cars = nlohmann::json::array();
  for (const Car& c : state_.cars) {
    if (!c.active) {
      cars.push_back(nullptr);
      continue;
    }
    const Pos p = route_cell(c.route, c.progress, config_.grid);
    cars.push_back({{"route", c.route}, {"pos", {p.x, p.y}}, {"age", c.age}});
  }
  return {{"step", state_.step},
          {"arrival_rate", state_.arrival_rate},
          {"collided", state_.collided},
          {"cars", cars}};
}

std::unique_ptr<Environment> TrafficJunction::clone() const {
  return std::make_unique<TrafficJunction>(*this);
}

}  // namespace cacl::env
