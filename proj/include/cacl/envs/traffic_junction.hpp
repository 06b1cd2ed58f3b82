#ifndef CACL_ENVS_TRAFFIC_JUNCTION_HPP_
#define CACL_ENVS_TRAFFIC_JUNCTION_HPP_

#include <vector>

#include "cacl/envs/env.hpp"
#include "cacl/numerics/rng.hpp"

namespace cacl::env {

// Two one-way roads crossing at the centre: route 0 runs left to right along
// the middle row, route 1 top to bottom along the middle column.
inline constexpr int kNumRoutes = 2;

struct Car {
  bool active = false;
  int route = 0;
  int progress = 0;  // index along the route
  int age = 0;       // steps since spawn
};

struct TrafficJunctionState {
  std::vector<Car> cars;  // one per agent slot
  double arrival_rate = 0.1;
  int step = 0;
  bool collided = false;  // any collision so far this episode
  Rng rng;
};

Pos route_cell(int route, int progress, int grid);

struct CarDynamics {
  int collisions = 0;  // cars involved in a collision this step
  std::vector<int> exited;
  std::vector<int> spawned;
  std::vector<double> car_penalty;  // per slot, cars on the road after moving
};

// Gas advances a car one cell along its route, brake holds it. Cars that run
// off the grid free their slot; two cars on one cell is a collision. New
// cars then spawn at each arrival point with probability arrival_rate while
// a free slot exists.
CarDynamics tj_dynamics(TrafficJunctionState& state, std::span<const int> actions,
                        const EnvConfig& config, Rng& rng);

class TrafficJunction final : public Environment {
 public:
  explicit TrafficJunction(EnvConfig config);

  const EnvConfig& config() const override { return config_; }
  void reset(std::uint64_t seed) override;
  StepResult step(std::span<const int> actions) override;
  Observation observe(int agent) const override;
  bool acting(int agent) const override;
  bool comm_active(int agent) const override { return acting(agent); }
  int steps() const override { return state_.step; }
  bool episode_success() const override { return !state_.collided; }
  ProbeInfo probe_info(int agent) const override;
  nlohmann::json state_summary() const override;
  std::unique_ptr<Environment> clone() const override;

  int active_cars() const;
  const TrafficJunctionState& state() const { return state_; }
  TrafficJunctionState& mutable_state() { return state_; }

 private:
  EnvConfig config_;
  TrafficJunctionState state_;
};

}  // namespace cacl::env

#endif  // CACL_ENVS_TRAFFIC_JUNCTION_HPP_
