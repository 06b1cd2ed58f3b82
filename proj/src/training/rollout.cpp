#include "cacl/training/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

namespace cacl::training {

using agents::kHiddenDim;
using agents::kMessageDim;

namespace {

std::uint64_t reset_seed(std::uint64_t seed, std::size_t instance, std::uint64_t episode) {
  return mix_seed(seed, instance, episode);
}

// Column-free fallback when an agent has no peers.
Tensor received_tensor(const std::vector<double>& rows, std::size_t batch, std::size_t dim) {
  if (dim == 0) return agents::zeros(batch, 1);
  return Tensor({batch, dim}, rows);
}

}  // namespace

RolloutWorkers::RolloutWorkers(const env::EnvConfig& config, int instances, std::uint64_t seed)
    : config_(config), seed_(seed) {
  if (instances < 1) throw std::invalid_argument("RolloutWorkers: instances must be >= 1");
  config_.validate();
  const auto b = static_cast<std::size_t>(instances);
  const auto n = static_cast<std::size_t>(config_.agents);
  envs_.resize(b);
  obs_.resize(b);
  fresh_.assign(b, 1);
  episode_.assign(b, 0);
  action_rng_.resize(b);
  episode_reward_.assign(b, std::vector<double>(n, 0.0));
  episode_captures_.assign(b, 0);
  hidden_.assign(n, std::vector<double>(b * kHiddenDim, 0.0));
  last_message_.assign(n, std::vector<double>(b * kMessageDim, 0.0));
  last_comm_.assign(n, std::vector<char>(b, 0));
  for (std::size_t i = 0; i < b; ++i) {
    envs_[i] = env::make_env(config_);
    for (std::size_t a = 0; a < n; ++a) action_rng_[i].emplace_back(mix_seed(seed, 1000 + i, a));
    reset_instance(i);
  }
}

void RolloutWorkers::reset_instance(std::size_t i) {
  envs_[i]->reset(reset_seed(seed_, i, episode_[i]));
  obs_[i] = envs_[i]->observations();
  fresh_[i] = 1;
  episode_captures_[i] = 0;
  std::fill(episode_reward_[i].begin(), episode_reward_[i].end(), 0.0);
  for (std::size_t a = 0; a < hidden_.size(); ++a) {
    std::fill_n(hidden_[a].begin() + static_cast<std::ptrdiff_t>(i * kHiddenDim), kHiddenDim, 0.0);
    std::fill_n(last_message_[a].begin() + static_cast<std::ptrdiff_t>(i * kMessageDim),
                kMessageDim, 0.0);
    last_comm_[a][i] = 0;
  }
}

std::vector<double> RolloutWorkers::received_rows(int agent) const {
  const std::size_t b = envs_.size();
  const std::size_t n = hidden_.size();
  std::vector<double> rows;
  rows.reserve(b * (n - 1) * kMessageDim);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t s = 0; s < n; ++s) {
      if (s == static_cast<std::size_t>(agent)) continue;
      const bool live = !fresh_[i] && last_comm_[s][i];
      for (std::size_t d = 0; d < kMessageDim; ++d) {
        rows.push_back(live ? last_message_[s][i * kMessageDim + d] : 0.0);
      }
    }
  }
  return rows;
}

RolloutBatch RolloutWorkers::collect(const std::vector<agents::Agent>& team, int steps) {
  const int n = config_.agents;
  if (static_cast<int>(team.size()) != n) {
    throw std::invalid_argument("collect: team size does not match the environment");
  }
  if (steps < 1) throw std::invalid_argument("collect: steps must be >= 1");
  const std::size_t b = envs_.size();
  const auto un = static_cast<std::size_t>(n);
  const auto obs_dim = static_cast<std::size_t>(config_.obs_dim());
  const std::size_t recv_dim = team[0].spec().received_dim();
  const auto ts = static_cast<std::size_t>(steps);

  RolloutBatch batch;
  batch.steps = steps;
  batch.instances = static_cast<int>(b);
  batch.agents = n;
  batch.obs_dim = obs_dim;
  batch.received_dim = recv_dim;
  auto shape = [&](auto& field, auto fill, std::size_t width) {
    using T = decltype(fill);
    field.assign(un, std::vector<std::vector<T>>(ts, std::vector<T>(b * width, fill)));
  };
  shape(batch.obs, 0.0, obs_dim);
  shape(batch.received, 0.0, recv_dim);
  shape(batch.messages, 0.0, kMessageDim);
  shape(batch.actions, std::size_t{0}, 1);
  shape(batch.rewards, 0.0, 1);
  shape(batch.values, 0.0, 1);
  shape(batch.acting, char{0}, 1);
  shape(batch.comm_active, char{0}, 1);
  shape(batch.terminal, char{0}, 1);
  batch.h0 = hidden_;
  batch.bootstrap.assign(un, std::vector<double>(b, 0.0));
  batch.done.assign(ts, std::vector<char>(b, 0));
  batch.episode_start.assign(ts, std::vector<char>(b, 0));
  batch.trajectory.assign(ts, std::vector<std::uint64_t>(b, 0));

  std::vector<std::vector<int>> env_actions(b, std::vector<int>(un, 0));
  std::vector<std::vector<double>> new_hidden(un), new_message(un);

  for (std::size_t t = 0; t < ts; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      batch.episode_start[t][i] = fresh_[i];
      batch.trajectory[t][i] = trajectory_id(i, episode_[i]);
      for (std::size_t a = 0; a < un; ++a) {
        const int ai = static_cast<int>(a);
        std::copy(obs_[i][a].begin(), obs_[i][a].end(),
                  batch.obs[a][t].begin() + static_cast<std::ptrdiff_t>(i * obs_dim));
        batch.acting[a][t][i] = envs_[i]->acting(ai);
        batch.comm_active[a][t][i] = envs_[i]->comm_active(ai);
      }
    }

    // Forward every agent on the whole instance batch. No tape is active, so
    // nothing is recorded; agents are independent here.
    std::vector<std::exception_ptr> errors(un);
#pragma omp parallel for schedule(static) if (un > 1)
    for (std::size_t a = 0; a < un; ++a) {
      try {
        batch.received[a][t] = received_rows(static_cast<int>(a));
        const Tensor o({b, obs_dim}, batch.obs[a][t]);
        const Tensor r = received_tensor(batch.received[a][t], b, recv_dim);
        const Tensor h({b, kHiddenDim}, hidden_[a]);
        const agents::AgentForward f = team[a].forward(o, r, h);
        const Tensor logp = log_softmax_rows(f.logits);
        const std::size_t na = f.logits.dim(1);
        std::vector<double> probs(na);
        for (std::size_t i = 0; i < b; ++i) {
          batch.values[a][t][i] = f.value[i];
          if (!batch.acting[a][t][i]) continue;
          for (std::size_t k = 0; k < na; ++k) {
            probs[k] = std::exp(logp[i * na + k]);
            if (!std::isfinite(probs[k])) {
              throw std::runtime_error("non-finite policy output for agent " + std::to_string(a));
            }
          }
          batch.actions[a][t][i] = action_rng_[i][a].categorical(probs);
        }
        batch.messages[a][t].assign(f.message.data().begin(), f.message.data().end());
        new_message[a] = batch.messages[a][t];
        new_hidden[a].assign(f.hidden.data().begin(), f.hidden.data().end());
      } catch (...) {
        errors[a] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    std::vector<env::StepResult> results(b);
#pragma omp parallel for schedule(static) if (b > 1)
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t a = 0; a < un; ++a) {
        env_actions[i][a] = static_cast<int>(batch.actions[a][t][i]);
      }
      results[i] = envs_[i]->step(env_actions[i]);
    }

    for (std::size_t i = 0; i < b; ++i) {
      const env::StepResult& res = results[i];
      for (std::size_t a = 0; a < un; ++a) batch.terminal[a][t][i] = res.done ? 1 : 0;
      for (int a : res.finished) batch.terminal[static_cast<std::size_t>(a)][t][i] = 1;
      for (std::size_t a = 0; a < un; ++a) {
        batch.rewards[a][t][i] = res.rewards[a];
        episode_reward_[i][a] += res.rewards[a];
        std::copy_n(new_hidden[a].begin() + static_cast<std::ptrdiff_t>(i * kHiddenDim),
                    kHiddenDim, hidden_[a].begin() + static_cast<std::ptrdiff_t>(i * kHiddenDim));
        std::copy_n(new_message[a].begin() + static_cast<std::ptrdiff_t>(i * kMessageDim),
                    kMessageDim,
                    last_message_[a].begin() + static_cast<std::ptrdiff_t>(i * kMessageDim));
        // A finished slot starts its next life with no memory.
        if (batch.terminal[a][t][i]) {
          std::fill_n(hidden_[a].begin() + static_cast<std::ptrdiff_t>(i * kHiddenDim),
                      kHiddenDim, 0.0);
        }
        last_comm_[a][i] = batch.comm_active[a][t][i];
      }
      episode_captures_[i] += res.captures;
      fresh_[i] = 0;
      obs_[i] = res.observations;
      batch.done[t][i] = res.done;
      if (res.done) {
        EpisodeStats s;
        for (double r : episode_reward_[i]) s.reward += r;
        s.reward /= static_cast<double>(un);
        s.length = envs_[i]->steps();
        s.success = envs_[i]->episode_success();
        s.captures = episode_captures_[i];
        batch.completed.push_back(s);
        ++episode_[i];
        reset_instance(i);
      }
    }
  }

  // V(s_T) for segments that end mid-episode.
  for (std::size_t a = 0; a < un; ++a) {
    std::vector<double> o;
    o.reserve(b * obs_dim);
    for (std::size_t i = 0; i < b; ++i) o.insert(o.end(), obs_[i][a].begin(), obs_[i][a].end());
    const agents::AgentForward f =
        team[a].forward(Tensor({b, obs_dim}, o),
                        received_tensor(received_rows(static_cast<int>(a)), b, recv_dim),
                        Tensor({b, kHiddenDim}, hidden_[a]));
    for (std::size_t i = 0; i < b; ++i) batch.bootstrap[a][i] = f.value[i];
  }
  return batch;
}

RolloutBatch collect_rollout(RolloutWorkers& workers, const std::vector<agents::Agent>& team,
                             int segment_length) {
  return workers.collect(team, segment_length);
}

}  // namespace cacl::training
