#ifndef CACL_TRAINING_LEARNER_HPP_
#define CACL_TRAINING_LEARNER_HPP_

#include <span>
#include <vector>

#include "cacl/agents/agent.hpp"
#include "cacl/numerics/adam.hpp"
#include "cacl/training/config.hpp"
#include "cacl/training/rollout.hpp"

namespace cacl::training {

// n-step bootstrapped returns for one trajectory slice.
//   values.size() == rewards.size() + 1; the last entry is V(s_T).
//   terminal[t] stops both the reward sum and the bootstrap after t.
// G_t = sum_{k<j} gamma^k r_{t+k} + gamma^j V(s_{t+j}), j = min(n, T-t),
// truncated at the first terminal step.
std::vector<double> nstep_returns(std::span<const double> rewards, std::span<const double> values,
                                  std::span<const char> terminal, double gamma, int n);

struct A2CTerms {
  Tensor policy;   // -mean(log pi(a) * (G - V)), advantage detached
  Tensor value;    // mean((V - G)^2)
  Tensor entropy;  // mean policy entropy
};

// logits [R x A], values [R], one action and return per row.
A2CTerms a2c_losses(const Tensor& logits, const Tensor& values, std::span<const std::size_t> actions,
                    std::span<const double> returns);

// Scales every gradient in `params` so the global norm is at most
// `max_norm`. Returns the norm before clipping.
double clip_gradients(const ParameterSet& params, double max_norm);

struct AgentLosses {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double comm = 0.0;  // contrastive, reconstruction or positive-listening term
  double total = 0.0;
  double grad_norm = 0.0;  // before clipping
  std::size_t samples = 0;  // acting rows
};

struct GradientOptions {
  // Which agents' losses enter the objective; empty means all.
  std::vector<bool> include;
  // Seed for simclr positive draws.
  std::uint64_t seed = 0;
};

// Replays a rollout segment with gradient tracking and applies one
// optimizer step per agent. Agents own their optimizers; the team is held
// by reference and updated in place.
class Learner {
 public:
  Learner(const ExperimentConfig& config, std::vector<agents::Agent>& team);

  // Leaves gradients in the agents' parameters (no clipping, no step).
  // Non-routing methods build one graph per agent, so gradients never cross
  // agents; routing methods build one joint graph over the team.
  std::vector<AgentLosses> compute_gradients(const RolloutBatch& batch,
                                             const GradientOptions& options = {});
  // Clip, step, zero gradients; fills grad_norm.
  void apply(std::vector<AgentLosses>& losses);
  std::vector<AgentLosses> update(const RolloutBatch& batch, std::uint64_t seed = 0);

 private:
  ExperimentConfig config_;
  std::vector<agents::Agent>& team_;
  std::vector<Adam> optimizers_;
};

}  // namespace cacl::training

#endif  // CACL_TRAINING_LEARNER_HPP_
