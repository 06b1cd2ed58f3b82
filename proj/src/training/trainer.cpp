#include "cacl/training/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cacl/training/checkpoint.hpp"

namespace cacl::training {

namespace fs = std::filesystem;

namespace {

std::uint64_t eval_seed(const ExperimentConfig& c) { return mix_seed(c.seed, 0xE7A1); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Accumulates iterations between two metrics rows.
struct Window {
  std::vector<EpisodeStats> episodes;
  double policy = 0.0, value = 0.0, comm = 0.0, grad = 0.0;
  int updates = 0;

  void add(const IterationStats& s) {
    episodes.insert(episodes.end(), s.completed.begin(), s.completed.end());
    for (const AgentLosses& l : s.losses) {
      policy += l.policy;
      value += l.value;
      comm += l.comm;
      grad += l.grad_norm;
      ++updates;
    }
  }
  std::string row(const IterationStats& s) const {
    std::ostringstream o;
    o << s.iteration << ',' << s.env_steps << ',';
    if (episodes.empty()) {
      o << ",,";
    } else {
      double r = 0.0, len = 0.0, ok = 0.0;
      for (const EpisodeStats& e : episodes) {
        r += e.reward;
        len += e.length;
        ok += e.success ? 1.0 : 0.0;
      }
      const double k = static_cast<double>(episodes.size());
      o << fmt(r / k) << ',' << fmt(len / k) << ',' << fmt(ok / k);
    }
    const double u = updates > 0 ? static_cast<double>(updates) : 1.0;
    o << ',' << fmt(policy / u) << ',' << fmt(value / u) << ',' << fmt(comm / u) << ','
      << fmt(grad / u);
    return o.str();
  }
};

std::ofstream open_csv(const fs::path& p, const char* header) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << header << '\n';
  return out;
}

}  // namespace

Trainer::Trainer(const ExperimentConfig& config)
    : config_((config.validate(), config)),
      team_(make_team(config_)),
      workers_(config_.env, config_.instances, config_.seed),
      learner_(config_, team_) {}

IterationStats Trainer::iterate() {
  for (agents::Agent& a : team_) a.spectral_update(1);
  RolloutBatch batch;
  IterationStats s;
  try {
    batch = workers_.collect(team_, config_.segment_length);
    s.losses = learner_.update(batch, mix_seed(config_.seed, 0x5EED, static_cast<std::uint64_t>(iteration_)));
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.rfind("non-finite", 0) == 0) {
      throw TrainingAborted("training aborted in iteration " + std::to_string(iteration_ + 1) +
                            " after " + std::to_string(env_steps_) + " env steps: " + what);
    }
    throw;
  }
  ++iteration_;
  env_steps_ += batch.env_steps();
  s.iteration = iteration_;
  s.env_steps = env_steps_;
  s.completed = std::move(batch.completed);
  return s;
}

EvalSummary Trainer::evaluate() const {
  return summarize(evaluate_team(team_view(team_), config_.env, config_.eval_episodes, eval_seed(config_)));
}

TrainSummary train(const ExperimentConfig& config, const fs::path& out_dir, const TrainOptions& options) {
  Trainer trainer(config);
  fs::create_directories(out_dir / "checkpoints");
  std::ofstream metrics = open_csv(out_dir / "metrics.csv", kMetricsHeader);
  std::ofstream evals = open_csv(out_dir / "eval.csv", kEvalHeader);

  auto eval_row = [&](const Trainer& t) {
    const EvalSummary e = t.evaluate();
    evals << t.iteration() << ',' << t.env_steps() << ',' << fmt(e.mean_reward) << ','
          << fmt(e.mean_length) << ',' << fmt(e.success_rate) << ',' << fmt(e.mean_captures) << '\n';
    evals.flush();
    return e;
  };

  Window window;
  TrainSummary summary;
  while (!trainer.finished()) {
    const IterationStats s = trainer.iterate();
    window.add(s);
    const bool last = trainer.finished();
    if (s.iteration % config.log_interval == 0 || last) {
      metrics << window.row(s) << '\n';
      metrics.flush();
      window = Window{};
    }
    if (config.eval_interval > 0 && config.eval_episodes > 0 && s.iteration % config.eval_interval == 0 &&
        !last) {
      eval_row(trainer);
    }
    if (config.checkpoint_interval > 0 && s.iteration % config.checkpoint_interval == 0 && !last) {
      save_checkpoint(out_dir / "checkpoints" / ("iter_" + std::to_string(s.iteration)), config,
                      trainer.team(), s.env_steps, s.iteration);
    }
    if (options.on_iteration) options.on_iteration(s);
  }
  if (config.eval_episodes > 0) summary.final_eval = eval_row(trainer);
  summary.final_checkpoint = out_dir / "checkpoints" / "final";
  save_checkpoint(summary.final_checkpoint, config, trainer.team(), trainer.env_steps(), trainer.iteration());
  summary.iterations = trainer.iteration();
  summary.env_steps = trainer.env_steps();
  return summary;
}

}  // namespace cacl::training
