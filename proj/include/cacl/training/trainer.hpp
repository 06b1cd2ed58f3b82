#ifndef CACL_TRAINING_TRAINER_HPP_
#define CACL_TRAINING_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cacl/training/config.hpp"
#include "cacl/training/episode.hpp"
#include "cacl/training/learner.hpp"
#include "cacl/training/rollout.hpp"

namespace cacl::training {

// Raised when a loss or gradient turns non-finite; training stops there.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IterationStats {
  std::int64_t iteration = 0;  // 1-based count of completed iterations
  std::int64_t env_steps = 0;  // cumulative
  std::vector<AgentLosses> losses;
  std::vector<EpisodeStats> completed;
};

// The training loop without any file output: collect one segment from every
// instance, then one learner update per agent.
class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& config);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  IterationStats iterate();
  bool finished() const { return iteration_ >= config_.iterations(); }

  const ExperimentConfig& config() const { return config_; }
  const std::vector<agents::Agent>& team() const { return team_; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t env_steps() const { return env_steps_; }
  EvalSummary evaluate() const;

 private:
  ExperimentConfig config_;
  std::vector<agents::Agent> team_;
  RolloutWorkers workers_;
  Learner learner_;
  std::int64_t iteration_ = 0;
  std::int64_t env_steps_ = 0;
};

struct TrainOptions {
  std::function<void(const IterationStats&)> on_iteration;
};

struct TrainSummary {
  std::int64_t iterations = 0;
  std::int64_t env_steps = 0;
  EvalSummary final_eval;
  std::filesystem::path final_checkpoint;
};

// Runs to completion, writing into `out_dir`:
//   metrics.csv   iteration,env_steps,mean_ep_reward,mean_ep_len,success_rate,
//                 loss_policy,loss_value,loss_comm,grad_norm
//   eval.csv      iteration,env_steps,mean_ep_reward,mean_ep_len,success_rate,mean_captures
//   checkpoints/iter_<n>/ and checkpoints/final/
// Episode statistics are empty when no episode finished in the window.
TrainSummary train(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                   const TrainOptions& options = {});

inline constexpr const char* kMetricsHeader =
    "iteration,env_steps,mean_ep_reward,mean_ep_len,success_rate,loss_policy,loss_value,loss_comm,"
    "grad_norm";
inline constexpr const char* kEvalHeader =
    "iteration,env_steps,mean_ep_reward,mean_ep_len,success_rate,mean_captures";

}  // namespace cacl::training

#endif  // CACL_TRAINING_TRAINER_HPP_
