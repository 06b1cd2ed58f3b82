#include "cacl/envs/find_goal.hpp"

#include <cmath>
#include <cstdlib>
#include <deque>
#include <stdexcept>

namespace cacl::env {

namespace {

constexpr int kMaxResamples = 100;

bool in_grid(Pos p, int grid) { return p.x >= 0 && p.y >= 0 && p.x < grid && p.y < grid; }

std::size_t cell(Pos p, int grid) { return static_cast<std::size_t>(p.y * grid + p.x); }

}  // namespace

std::string to_string(GoalRegion r) {
  switch (r) {
    case GoalRegion::kTopLeft: return "TL";
    case GoalRegion::kTopRight: return "TR";
    case GoalRegion::kBottomLeft: return "BL";
    case GoalRegion::kBottomRight: return "BR";
    case GoalRegion::kMiddle: return "M";
  }
  return "?";
}

GoalRegion goal_region(Pos goal, int grid) {
  const int c = grid / 2;
  const int half = grid / 6;
  const bool central = std::abs(goal.x - c) <= half && std::abs(goal.y - c) <= half;
  if (central || goal.x == c || goal.y == c) return GoalRegion::kMiddle;
  if (goal.y < c) return goal.x < c ? GoalRegion::kTopLeft : GoalRegion::kTopRight;
  return goal.x < c ? GoalRegion::kBottomLeft : GoalRegion::kBottomRight;
}

bool goal_reachable(const FindGoalState& state, int grid) {
  std::vector<unsigned char> seen(static_cast<std::size_t>(grid * grid), 0);
  std::deque<Pos> frontier{state.goal};
  seen[cell(state.goal, grid)] = 1;
  while (!frontier.empty()) {
    const Pos p = frontier.front();
    frontier.pop_front();
    for (int a = kLeft; a <= kDown; ++a) {
      const Pos n = moved(p, a);
      if (!in_grid(n, grid) || seen[cell(n, grid)] || state.obstacles[cell(n, grid)]) continue;
      seen[cell(n, grid)] = 1;
      frontier.push_back(n);
    }
  }
  for (const Pos& a : state.agents) {
    if (!seen[cell(a, grid)]) return false;
  }
  return true;
}

FindGoal::FindGoal(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  reset(0);
}

void FindGoal::reset(std::uint64_t seed) {
  Rng rng(seed);
  const int g = config_.grid;
  const int cells = g * g;
  const int free_cells = cells - config_.agents - 1;
  const int n_obstacles =
      static_cast<int>(std::lround(config_.obstacle_density * static_cast<double>(free_cells)));
  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    FindGoalState s;
    s.obstacles.assign(static_cast<std::size_t>(cells), 0);
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) {
      if (config_.fixed_goal && i == config_.fixed_goal->y * g + config_.fixed_goal->x) continue;
      order.push_back(i);
    }
    rng.shuffle(order.begin(), order.end());
    std::size_t next = 0;
    auto take = [&] {
      const int c = order[next++];
      return Pos{c % g, c / g};
    };
    s.goal = config_.fixed_goal ? *config_.fixed_goal : take();
    for (int i = 0; i < config_.agents; ++i) {
      s.agents.push_back(take());
      s.reached.push_back(false);
    }
    for (int k = 0; k < n_obstacles; ++k) s.obstacles[cell(take(), g)] = 1;
    s.resamples = attempt;
    if (goal_reachable(s, g)) {
      state_ = std::move(s);
      return;
    }
  }
  throw std::runtime_error("find_goal: no reachable obstacle map after " +
                           std::to_string(kMaxResamples) + " samples");
}

bool FindGoal::blocked(Pos p) const {
  return !in_grid(p, config_.grid) || state_.obstacles[cell(p, config_.grid)] != 0;
}

int FindGoal::obstacle_count() const {
  int n = 0;
  for (unsigned char o : state_.obstacles) n += o;
  return n;
}

bool FindGoal::acting(int agent) const { return !state_.reached.at(static_cast<std::size_t>(agent)); }

StepResult FindGoal::step(std::span<const int> actions) {
  const std::size_t n = state_.agents.size();
  if (actions.size() != n) throw std::invalid_argument("find_goal: expected one action per agent");
  for (int a : actions) {
    if (a < 0 || a >= kNumGridActions) {
      throw std::invalid_argument("find_goal: illegal action " + std::to_string(a));
    }
  }
  state_.step += 1;
  StepResult result;
  result.rewards.assign(n, config_.step_penalty);
  for (std::size_t i = 0; i < n; ++i) {
    if (state_.reached[i]) continue;
    const Pos target = moved(state_.agents[i], actions[i]);
    if (target == state_.agents[i] || blocked(target)) continue;
    // Agents that reached the goal no longer occupy a cell.
    bool taken = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && !state_.reached[j] && state_.agents[j] == target) taken = true;
    }
    if (taken) continue;
    state_.agents[i] = target;
    if (target == state_.goal) {
      state_.reached[i] = true;
      result.rewards[i] += config_.goal_reward;
      result.arrivals.push_back(static_cast<int>(i));
    }
  }
  const bool all = episode_success();
  if (all && !result.arrivals.empty()) {
    for (double& r : result.rewards) r += config_.all_reached_bonus;
  }
  result.finished = result.arrivals;
  result.done = all || state_.step >= config_.max_steps;
  result.observations = observations();
  return result;
}

Observation FindGoal::observe(int agent) const {
  const Pos me = state_.agents.at(static_cast<std::size_t>(agent));
  const int fov = config_.fov;
  const int half = fov / 2;
  const std::size_t window = static_cast<std::size_t>(fov * fov);
  Observation obs(static_cast<std::size_t>(config_.obs_dim()), 0.0);
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      const Pos p{me.x + dx, me.y + dy};
      const std::size_t idx = static_cast<std::size_t>((dy + half) * fov + (dx + half));
      obs[idx] = blocked(p) ? 1.0 : 0.0;
      if (p == state_.goal) obs[2 * window + idx] = 1.0;
    }
  }
  for (std::size_t j = 0; j < state_.agents.size(); ++j) {
    if (static_cast<int>(j) == agent) continue;
    const int idx = window_index(me, state_.agents[j], fov);
    if (idx >= 0) obs[window + static_cast<std::size_t>(idx)] = 1.0;
  }
  const double scale = 1.0 / static_cast<double>(config_.grid - 1);
  obs[3 * window] = me.x * scale;
  obs[3 * window + 1] = me.y * scale;
  return obs;
}

bool FindGoal::episode_success() const {
  for (bool r : state_.reached) {
    if (!r) return false;
  }
  return true;
}

ProbeInfo FindGoal::probe_info(int agent) const {
  ProbeInfo info;
  const Pos me = state_.agents.at(static_cast<std::size_t>(agent));
  info.goal = state_.goal;
  info.goal_visible = window_index(me, state_.goal, config_.fov) >= 0;
  for (std::size_t j = 0; j < state_.agents.size(); ++j) {
    if (static_cast<int>(j) != agent && window_index(me, state_.agents[j], config_.fov) >= 0) {
      info.other_agent_visible = true;
    }
  }
  return info;
}

nlohmann::json FindGoal::state_summary() const {
  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t i = 0; i < state_.agents.size(); ++i) {
    agents.push_back({{"pos", {state_.agents[i].x, state_.agents[i].y}},
                      {"reached", static_cast<bool>(state_.reached[i])}});
  }
  return {{"step", state_.step},
          {"goal", {state_.goal.x, state_.goal.y}},
          {"agents", agents},
          {"obstacles", obstacle_count()}};
}

std::unique_ptr<Environment> FindGoal::clone() const { return std::make_unique<FindGoal>(*this); }

}  // namespace cacl::env
