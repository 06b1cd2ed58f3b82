#include <doctest.h>

#include <cmath>
#include <deque>
#include <set>

#include "cacl/envs/find_goal.hpp"
#include "cacl/envs/predator_prey.hpp"
#include "cacl/envs/traffic_junction.hpp"
#include "support/capture_oracle.hpp"

using namespace cacl;
using namespace cacl::env;

namespace {

PredatorPreyState pp_board(std::vector<Pos> predators, std::vector<Pos> prey) {
  PredatorPreyState s;
  s.predators = std::move(predators);
  s.prey = std::move(prey);
  s.prey_alive.assign(s.prey.size(), true);
  return s;
}

std::vector<std::vector<double>> run_actions(Environment& env, std::uint64_t seed, int steps,
                                             std::uint64_t action_seed) {
  env.reset(seed);
  Rng rng(action_seed);
  std::vector<std::vector<double>> trace;
  for (int t = 0; t < steps; ++t) {
    std::vector<int> acts(static_cast<std::size_t>(env.num_agents()));
    for (int& a : acts) a = static_cast<int>(rng.below(static_cast<std::uint64_t>(env.num_actions())));
    const StepResult r = env.step(acts);
    trace.push_back(r.rewards);
    for (const auto& o : r.observations) trace.push_back(o);
    if (r.done) env.reset(seed + static_cast<std::uint64_t>(t) + 1);
  }
  return trace;
}

}  // namespace

TEST_CASE("default configs carry the published sizes") {
  const EnvConfig pp = EnvConfig::predator_prey();
  CHECK(pp.grid == 7);
  CHECK(pp.agents == 4);
  CHECK(pp.prey == 2);
  CHECK(pp.max_steps == 200);
  CHECK(pp.obs_dim() == 11);
  const EnvConfig fg = EnvConfig::find_goal();
  CHECK(fg.grid == 15);
  CHECK(fg.agents == 3);
  CHECK(fg.max_steps == 512);
  CHECK(fg.obstacle_density == 0.15);
  CHECK(fg.obs_dim() == 29);
  const EnvConfig tj = EnvConfig::traffic_junction();
  CHECK(tj.agents == 5);
  CHECK(tj.max_steps == 20);
  CHECK(tj.obs_dim() == 13);
  CHECK(tj.num_actions() == 2);
  CHECK(parse_env_id("fg") == EnvId::kFindGoal);
  CHECK_THROWS(parse_env_id("chess"));
  EnvConfig bad = pp;
  bad.fov = 2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("environments are deterministic under a seed") {
  for (const EnvConfig& cfg :
       {EnvConfig::predator_prey(), EnvConfig::find_goal(), EnvConfig::traffic_junction()}) {
    auto a = make_env(cfg);
    auto b = make_env(cfg);
    CHECK(run_actions(*a, 42, 300, 7) == run_actions(*b, 42, 300, 7));
    a->reset(5);
    b->reset(6);
    CHECK(a->state_summary() != b->state_summary());
  }
}

TEST_CASE("illegal actions are rejected") {
  for (const EnvConfig& cfg :
       {EnvConfig::predator_prey(), EnvConfig::find_goal(), EnvConfig::traffic_junction()}) {
    auto e = make_env(cfg);
    std::vector<int> acts(static_cast<std::size_t>(cfg.agents), 0);
    CHECK_THROWS_AS(e->step(std::vector<int>(1, 0)), std::invalid_argument);
    if (cfg.id != EnvId::kTrafficJunction) {
      acts[0] = 7;
      CHECK_THROWS_AS(e->step(acts), std::invalid_argument);
    }
  }
}

TEST_CASE("capture rule worked cases") {
  const EnvConfig cfg = EnvConfig::predator_prey();
  auto s = pp_board({{2, 3}, {4, 3}, {3, 2}, {3, 4}}, {{3, 3}});
  auto r = pp_capture_check(s, cfg);
  CHECK(r.captured == std::vector<int>{0});
  CHECK(r.reward == 10.0);
  CHECK_FALSE(s.prey_alive[0]);

  s = pp_board({{0, 1}, {1, 0}, {5, 5}, {6, 6}}, {{0, 0}});
  CHECK(pp_capture_check(s, cfg).captured.size() == 1);

  s = pp_board({{2, 3}, {6, 6}, {0, 6}, {6, 0}}, {{3, 3}});
  r = pp_capture_check(s, cfg);
  CHECK(r.captured.empty());
  CHECK(r.failed_attempts == 1);
  CHECK(r.reward == -0.5);
}

TEST_CASE("capture rule equals the definition on every nearby placement") {
  const EnvConfig cfg = EnvConfig::predator_prey();
  long placements = 0, captures = 0;
  for (const Pos prey : {Pos{3, 3}, Pos{0, 0}, Pos{0, 3}, Pos{6, 2}, Pos{1, 1}, Pos{6, 6}}) {
    for (int count = 1; count <= 4; ++count) {
      placements += cacl::testing::for_each_placement(prey, cfg.grid, count, [&](const std::vector<Pos>& p) {
        auto s = pp_board(p, {prey});
        const bool expected = cacl::testing::captured_by_definition(prey, p, cfg.grid);
        const CaptureResult r = pp_capture_check(s, cfg);
        REQUIRE(r.captured.empty() == !expected);
        captures += expected ? 1 : 0;
      });
    }
  }
  CHECK(placements > 100000);
  CHECK(captures > 0);
}

TEST_CASE("predator-prey step applies the step penalty and shares rewards") {
  PredatorPrey env(EnvConfig::predator_prey());
  env.reset(3);
  auto& s = env.mutable_state();
  s.predators = {{0, 0}, {0, 2}, {0, 4}, {0, 6}};
  s.prey = {{6, 0}, {6, 6}};
  s.prey_alive = {true, true};
  const std::vector<int> noop(4, kNoop);
  const StepResult r = env.step(noop);
  for (double v : r.rewards) CHECK(v == doctest::Approx(-0.01));
  // Walking into the wall leaves the predator in place.
  const std::vector<int> left(4, kLeft);
  env.step(left);
  CHECK(env.state().predators[0] == Pos{0, 0});
}

TEST_CASE("predators cannot see each other") {
  PredatorPrey env(EnvConfig::predator_prey());
  env.reset(1);
  auto& s = env.mutable_state();
  s.predators = {{3, 3}, {0, 0}, {6, 0}, {0, 6}};
  s.prey = {{4, 3}, {6, 6}};
  s.prey_alive = {true, true};
  const Observation before = env.observe(0);
  CHECK(before[2 + 5] == 1.0);  // prey to the right, window cell (row 1, col 2)
  s.predators[1] = {3, 2};
  CHECK(env.observe(0) == before);
}

TEST_CASE("prey move frequencies follow the probability vector") {
  const EnvConfig cfg = EnvConfig::predator_prey();
  Rng rng(123);
  int counts[5] = {0, 0, 0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto s = pp_board({{0, 0}, {0, 1}, {0, 2}, {0, 3}}, {{3, 3}});
    prey_move(s, cfg, rng);
    const Pos p = s.prey[0];
    const int a = p == Pos{2, 3}   ? kLeft
                  : p == Pos{4, 3} ? kRight
                  : p == Pos{3, 2} ? kUp
                  : p == Pos{3, 4} ? kDown
                                   : kNoop;
    counts[a]++;
  }
  for (int a = 0; a < 5; ++a) {
    CHECK(std::abs(counts[a] / static_cast<double>(n) - cfg.prey_move_probs[a]) < 0.01);
  }
  auto boxed = pp_board({{2, 3}, {4, 3}, {3, 2}, {3, 4}}, {{3, 3}});
  for (int i = 0; i < 50; ++i) prey_move(boxed, cfg, rng);
  CHECK(boxed.prey[0] == Pos{3, 3});
}

TEST_CASE("find-goal reset builds reachable maps with the configured density") {
  FindGoal env(EnvConfig::find_goal());
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    env.reset(seed);
    CHECK(goal_reachable(env.state(), 15));
    total += env.obstacle_count();
  }
  const double expected = std::lround(0.15 * (225 - 3 - 1));
  CHECK(total / 50 == doctest::Approx(expected));

  EnvConfig fixed = EnvConfig::find_goal();
  fixed.fixed_goal = Pos{1, 1};
  FindGoal g(fixed);
  g.reset(77);
  CHECK(g.state().goal == Pos{1, 1});
}

TEST_CASE("find-goal rewards arrivals and the team bonus") {
  EnvConfig cfg = EnvConfig::find_goal();
  cfg.agents = 2;
  FindGoal env(cfg);
  env.reset(0);
  auto& s = env.mutable_state();
  std::fill(s.obstacles.begin(), s.obstacles.end(), 0);
  s.goal = {5, 5};
  s.agents = {{4, 5}, {5, 7}};
  s.reached = {false, false};
  StepResult r = env.step(std::vector<int>{kRight, kUp});
  CHECK(r.rewards[0] == doctest::Approx(-0.01 + 1.0));
  CHECK(r.rewards[1] == doctest::Approx(-0.01));
  CHECK_FALSE(r.done);
  CHECK_FALSE(env.acting(0));
  r = env.step(std::vector<int>{kNoop, kUp});
  CHECK(r.rewards[0] == doctest::Approx(-0.01 + 5.0));
  CHECK(r.rewards[1] == doctest::Approx(-0.01 + 1.0 + 5.0));
  CHECK(r.done);
  CHECK(env.episode_success());
}

TEST_CASE("find-goal observation channels") {
  FindGoal env(EnvConfig::find_goal());
  env.reset(0);
  auto& s = env.mutable_state();
  std::fill(s.obstacles.begin(), s.obstacles.end(), 0);
  s.agents = {{0, 0}, {1, 1}, {10, 10}};
  s.goal = {12, 12};
  Observation o = env.observe(0);
  // Out-of-grid cells count as obstacles.
  CHECK(o[0] == 1.0);
  CHECK(o[4] == 0.0);
  CHECK(o[9 + 8] == 1.0);
  for (int k = 18; k < 27; ++k) CHECK(o[static_cast<std::size_t>(k)] == 0.0);
  CHECK(o[27] == 0.0);
  s.goal = {1, 0};
  o = env.observe(0);
  CHECK(o[18 + 5] == 1.0);
  CHECK(env.probe_info(0).goal_visible);
  CHECK_FALSE(env.probe_info(2).goal_visible);
}

TEST_CASE("goal regions") {
  CHECK(goal_region({7, 7}, 15) == GoalRegion::kMiddle);
  CHECK(goal_region({1, 1}, 15) == GoalRegion::kTopLeft);
  CHECK(goal_region({13, 1}, 15) == GoalRegion::kTopRight);
  CHECK(goal_region({1, 13}, 15) == GoalRegion::kBottomLeft);
  CHECK(goal_region({13, 13}, 15) == GoalRegion::kBottomRight);
  CHECK(goal_region({5, 9}, 15) == GoalRegion::kMiddle);
  CHECK(goal_region({4, 4}, 15) == GoalRegion::kTopLeft);
  CHECK(goal_region({7, 0}, 15) == GoalRegion::kMiddle);
}

TEST_CASE("traffic junction dynamics") {
  TrafficJunction env(EnvConfig::traffic_junction());
  env.reset(4);
  CHECK(env.active_cars() == 0);
  CHECK(env.steps() == 0);
  auto& s = env.mutable_state();
  s.arrival_rate = 0.0;
  s.cars[0] = Car{true, 0, 2, 0};
  for (int t = 0; t < 5; ++t) env.step(std::vector<int>(5, kBrake));
  CHECK(s.cars[0].progress == 2);

  // Both cars enter the junction cell (3,3) together.
  s.cars[0] = Car{true, 0, 2, 0};
  s.cars[1] = Car{true, 1, 2, 0};
  const StepResult r = env.step(std::vector<int>(5, kGas));
  CHECK(r.collisions == 2);
  CHECK_FALSE(env.episode_success());
  const double team = 2 * (-10.0 - 0.01);
  CHECK(r.rewards[0] == doctest::Approx(team));
  CHECK(r.rewards[1] == doctest::Approx(team));
  CHECK(r.rewards[2] == 0.0);

  TrafficJunction full(EnvConfig::traffic_junction());
  full.reset(1);
  auto& fs = full.mutable_state();
  fs.arrival_rate = 1.0;
  for (int i = 0; i < 5; ++i) fs.cars[static_cast<std::size_t>(i)] = Car{true, i % 2, 0, 0};
  Rng rng(0);
  const CarDynamics d = tj_dynamics(fs, std::vector<int>(5, kBrake), full.config(), rng);
  CHECK(d.spawned.empty());
}

TEST_CASE("traffic junction inactive slots see zeros and episodes end at 20") {
  TrafficJunction env(EnvConfig::traffic_junction());
  env.reset(9);
  CHECK(env.observe(3) == Observation(13, 0.0));
  int steps = 0;
  bool done = false;
  while (!done) {
    done = env.step(std::vector<int>(5, kGas)).done;
    ++steps;
  }
  CHECK(steps == 20);
}

TEST_CASE("episode lengths never exceed the maximum") {
  for (const EnvConfig& cfg :
       {EnvConfig::predator_prey(), EnvConfig::find_goal(), EnvConfig::traffic_junction()}) {
    auto e = make_env(cfg);
    e->reset(2);
    Rng rng(1);
    int steps = 0;
    for (;;) {
      std::vector<int> acts(static_cast<std::size_t>(cfg.agents));
      for (int& a : acts) a = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_actions())));
      ++steps;
      if (e->step(acts).done) break;
    }
    CHECK(steps <= cfg.max_steps);
    CHECK(e->steps() <= cfg.max_steps);
  }
}
