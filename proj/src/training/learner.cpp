#include "cacl/training/learner.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

#include "cacl/comm_losses/comm_losses.hpp"

namespace cacl::training {

using agents::kHiddenDim;
using agents::kMessageDim;

std::vector<double> nstep_returns(std::span<const double> rewards, std::span<const double> values,
                                  std::span<const char> terminal, double gamma, int n) {
  const std::size_t len = rewards.size();
  if (values.size() != len + 1 || terminal.size() != len) {
    throw std::invalid_argument("nstep_returns: expected values of length T+1 and terminal of length T");
  }
  if (n < 1) throw std::invalid_argument("nstep_returns: n must be >= 1");
  std::vector<double> g(len, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t horizon = std::min(len, t + static_cast<std::size_t>(n));
    double ret = 0.0;
    double discount = 1.0;
    bool ended = false;
    std::size_t k = t;
    for (; k < horizon; ++k) {
      ret += discount * rewards[k];
      discount *= gamma;
      if (terminal[k]) {
        ended = true;
        break;
      }
    }
    if (!ended) ret += discount * values[horizon];
    g[t] = ret;
  }
  return g;
}

A2CTerms a2c_losses(const Tensor& logits, const Tensor& values, std::span<const std::size_t> actions,
                    std::span<const double> returns) {
  const std::size_t rows = logits.dim(0);
  if (values.rank() != 1 || values.dim(0) != rows || actions.size() != rows ||
      returns.size() != rows) {
    throw std::invalid_argument("a2c_losses: logits, values, actions and returns must align");
  }
  if (rows == 0) throw std::invalid_argument("a2c_losses: empty batch");
  const Tensor logp = log_softmax_rows(logits);
  std::vector<double> adv(rows);
  for (std::size_t r = 0; r < rows; ++r) adv[r] = returns[r] - values[r];
  const Tensor target = Tensor::vector(std::vector<double>(returns.begin(), returns.end()));
  A2CTerms out;
  out.policy = scale(mean(mul(pick(logp, actions), Tensor::vector(adv))), -1.0);
  out.value = mean(square(sub(values, target)));
  out.entropy = scale(mean(row_sum(mul(softmax_rows(logits), logp))), -1.0);
  return out;
}

double clip_gradients(const ParameterSet& params, double max_norm) {
  const double norm = params.grad_norm();
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const NamedTensor& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.impl()->grad) g *= factor;
    }
  }
  return norm;
}

namespace {

Tensor received_tensor(std::span<const double> rows, std::size_t batch, std::size_t dim) {
  if (dim == 0) return agents::zeros(batch, 1);
  return Tensor({batch, dim}, std::vector<double>(rows.begin(), rows.end()));
}

// [B x hidden] with row i all ones unless the agent's life ended at t.
Tensor keep_mask(const RolloutBatch& batch, std::size_t a, std::size_t t) {
  const auto b = static_cast<std::size_t>(batch.instances);
  std::vector<double> m(b * kHiddenDim, 1.0);
  for (std::size_t i = 0; i < b; ++i) {
    if (batch.terminal[a][t][i]) std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(i * kHiddenDim), kHiddenDim, 0.0);
  }
  return Tensor({b, kHiddenDim}, std::move(m));
}

// Per-agent recurrent replay over the segment.
struct Replay {
  std::vector<Tensor> encoding;  // [t] B x 32
  std::vector<Tensor> message;   // [t] B x 4 (full graph)
  std::vector<Tensor> logits;    // [t] B x A
  std::vector<Tensor> value;     // [t] B
};

Replay replay_agent(const agents::Agent& agent, const RolloutBatch& batch, std::size_t a,
                    bool zero_messages) {
  const auto b = static_cast<std::size_t>(batch.instances);
  Replay r;
  Tensor h({b, kHiddenDim}, batch.h0[a]);
  for (std::size_t t = 0; t < static_cast<std::size_t>(batch.steps); ++t) {
    const Tensor o({b, batch.obs_dim}, batch.obs[a][t]);
    const Tensor recv = zero_messages
                            ? agents::zeros(b, std::max<std::size_t>(batch.received_dim, 1))
                            : received_tensor(batch.received[a][t], b, batch.received_dim);
    const Tensor enc = agent.encode_observation(o);
    const agents::AgentForward f = agent.forward(o, recv, h, &enc);
    r.encoding.push_back(enc);
    r.message.push_back(f.message);
    r.logits.push_back(f.logits);
    r.value.push_back(f.value);
    h = mul(f.hidden, keep_mask(batch, a, t));
  }
  return r;
}

struct AgentRows {
  std::vector<std::size_t> rows;  // t*B + i
  std::vector<std::size_t> actions;
  std::vector<double> returns;
};

AgentRows acting_rows(const RolloutBatch& batch, std::size_t a, const ExperimentConfig& config) {
  const auto b = static_cast<std::size_t>(batch.instances);
  const auto ts = static_cast<std::size_t>(batch.steps);
  std::vector<std::vector<double>> ret_by_instance(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> rewards(ts), values(ts + 1);
    std::vector<char> term(ts);
    for (std::size_t t = 0; t < ts; ++t) {
      rewards[t] = batch.rewards[a][t][i];
      values[t] = batch.values[a][t][i];
      term[t] = batch.terminal[a][t][i];
    }
    values[ts] = batch.bootstrap[a][i];
    ret_by_instance[i] = nstep_returns(rewards, values, term, config.gamma, config.nstep);
  }
  AgentRows out;
  for (std::size_t t = 0; t < ts; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      if (!batch.acting[a][t][i]) continue;
      out.rows.push_back(batch.row(static_cast<int>(t), static_cast<int>(i)));
      out.actions.push_back(batch.actions[a][t][i]);
      out.returns.push_back(ret_by_instance[i][t]);
    }
  }
  return out;
}

Tensor stacked_values(const std::vector<Tensor>& values, std::size_t b) {
  std::vector<Tensor> cols;
  cols.reserve(values.size());
  for (const Tensor& v : values) cols.push_back(reshape(v, {b, 1}));
  return concat_rows(cols);
}

// Messages of agent `a` as rebuilt for the grounding losses: the message head
// applied to a detached encoding, so only the head (and decoder) learn.
Tensor grounding_messages(const agents::Agent& agent, const Replay& r) {
  std::vector<Tensor> parts;
  parts.reserve(r.encoding.size());
  for (const Tensor& e : r.encoding) parts.push_back(agent.message_from_encoding(e.detach()));
  return concat_rows(parts);
}

Tensor contrastive_term(const agents::Agent& agent, const Replay& r, const RolloutBatch& batch,
                        std::size_t a, const ExperimentConfig& config, Rng& rng) {
  const auto b = static_cast<std::size_t>(batch.instances);
  const auto ts = static_cast<std::size_t>(batch.steps);
  comm::MessageBatchBuilder builder;
  for (std::size_t s = 0; s < static_cast<std::size_t>(batch.agents); ++s) {
    std::vector<comm::MessageKey> keys;
    std::vector<bool> active;
    keys.reserve(ts * b);
    for (std::size_t t = 0; t < ts; ++t) {
      for (std::size_t i = 0; i < b; ++i) {
        keys.push_back({batch.trajectory[t][i], static_cast<int>(t), static_cast<int>(s)});
        active.push_back(batch.comm_active[s][t][i] != 0);
      }
    }
    if (s == a) {
      builder.add(grounding_messages(agent, r), keys, active, true);
    } else {
      std::vector<double> flat;
      flat.reserve(ts * b * kMessageDim);
      for (std::size_t t = 0; t < ts; ++t) {
        flat.insert(flat.end(), batch.messages[s][t].begin(), batch.messages[s][t].end());
      }
      builder.add(Tensor({ts * b, kMessageDim}, std::move(flat)), keys, active, false);
    }
  }
  return comm::cacl_loss(comm::normalize_messages(builder.build()), config.contrastive, &rng);
}

Tensor reconstruction_term(const agents::Agent& agent, const Replay& r, const RolloutBatch& batch,
                           std::size_t a) {
  const auto b = static_cast<std::size_t>(batch.instances);
  const auto ts = static_cast<std::size_t>(batch.steps);
  std::vector<std::size_t> rows;
  std::vector<double> obs;
  for (std::size_t t = 0; t < ts; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      if (!batch.comm_active[a][t][i]) continue;
      rows.push_back(t * b + i);
      const auto first = batch.obs[a][t].begin() + static_cast<std::ptrdiff_t>(i * batch.obs_dim);
      obs.insert(obs.end(), first, first + static_cast<std::ptrdiff_t>(batch.obs_dim));
    }
  }
  if (rows.empty()) return Tensor::scalar(0.0);
  const Tensor msgs = gather_rows(grounding_messages(agent, r), rows);
  return comm::aecomm_loss(agent, Tensor({rows.size(), batch.obs_dim}, std::move(obs)), msgs);
}

void check_finite(double v, const std::string& what, std::size_t agent) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("non-finite " + what + " for agent " + std::to_string(agent));
  }
}

// Loss of agent `a` given its replay; fills `stats`.
Tensor agent_loss(const agents::Agent& agent, const Replay& r, const RolloutBatch& batch,
                  std::size_t a, const ExperimentConfig& config, std::uint64_t seed,
                  AgentLosses& stats) {
  const auto b = static_cast<std::size_t>(batch.instances);
  const agents::Method method = config.method;
  const AgentRows rows = acting_rows(batch, a, config);
  stats.samples = rows.rows.size();

  Tensor total = Tensor::scalar(0.0);
  Tensor logits_all;
  if (!rows.rows.empty()) {
    logits_all = concat_rows(r.logits);
    const Tensor logits = gather_rows(logits_all, rows.rows);
    const Tensor values = reshape(gather_rows(stacked_values(r.value, b), rows.rows), {rows.rows.size()});
    const A2CTerms t = a2c_losses(logits, values, rows.actions, rows.returns);
    stats.policy = t.policy.item();
    stats.value = t.value.item();
    stats.entropy = t.entropy.item();
    total = add(add(t.policy, scale(t.value, config.value_coef)),
                scale(t.entropy, -config.entropy_coef));
  }

  if (agents::uses_cacl(method) && config.contrastive.kappa > 0.0) {
    Rng rng(mix_seed(seed, 0xC0C1, a));
    const Tensor c = contrastive_term(agent, r, batch, a, config, rng);
    stats.comm = c.item();
    total = add(total, scale(c, config.contrastive.kappa));
  } else if (agents::uses_cacl(method)) {
    Rng rng(mix_seed(seed, 0xC0C1, a));
    GradTape detached;  // value only; nothing reaches the outer tape
    stats.comm = contrastive_term(agent, r, batch, a, config, rng).item();
  }
  if (agents::uses_aecomm(method)) {
    const Tensor m = reconstruction_term(agent, r, batch, a);
    stats.comm = m.item();
    total = add(total, scale(m, config.aecomm_coef));
  }
  if (agents::uses_pl(method) && !rows.rows.empty()) {
    const Replay silent = replay_agent(agent, batch, a, true);
    const Tensor with = gather_rows(logits_all, rows.rows);
    const Tensor without = gather_rows(concat_rows(silent.logits), rows.rows);
    const Tensor pl = comm::pl_loss(with, without);
    stats.comm = pl.item();
    total = add(total, scale(pl, config.pl_coef));
  }
  stats.total = total.item();
  check_finite(stats.total, "loss", a);
  return total;
}

}  // namespace

Learner::Learner(const ExperimentConfig& config, std::vector<agents::Agent>& team)
    : config_(config), team_(team) {
  AdamConfig adam;
  adam.lr = config.learning_rate;
  adam.eps = config.adam_eps;
  optimizers_.reserve(team.size());
  for (const agents::Agent& agent : team) optimizers_.emplace_back(agent.parameters(), adam);
}

std::vector<AgentLosses> Learner::compute_gradients(const RolloutBatch& batch,
                                                    const GradientOptions& options) {
  const std::size_t n = team_.size();
  if (batch.agents != static_cast<int>(n)) {
    throw std::invalid_argument("compute_gradients: batch/team size mismatch");
  }
  auto included = [&](std::size_t a) { return options.include.empty() || options.include.at(a); };
  std::vector<AgentLosses> stats(n);
  for (const agents::Agent& agent : team_) agent.parameters().zero_grad();

  if (!agents::routes_through_messages(config_.method)) {
    std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::size_t a = 0; a < n; ++a) {
      if (!included(a)) continue;
      try {
        GradTape tape;
        const Replay r = replay_agent(team_[a], batch, a, false);
        const Tensor loss = agent_loss(team_[a], r, batch, a, config_, options.seed, stats[a]);
        tape.backward(loss);
      } catch (...) {
        errors[a] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    return stats;
  }

  // Joint graph: received messages are rebuilt from the senders' tracked
  // messages of the previous step, masked exactly as in the rollout.
  const auto b = static_cast<std::size_t>(batch.instances);
  const auto ts = static_cast<std::size_t>(batch.steps);
  GradTape tape;
  std::vector<Replay> replays(n);
  std::vector<Tensor> hidden(n);
  for (std::size_t a = 0; a < n; ++a) hidden[a] = Tensor({b, kHiddenDim}, batch.h0[a]);
  for (std::size_t t = 0; t < ts; ++t) {
    std::vector<Tensor> step_messages(n);
    for (std::size_t a = 0; a < n; ++a) {
      Tensor recv;
      if (batch.received_dim == 0) {
        recv = agents::zeros(b, 1);
      } else if (t == 0) {
        recv = received_tensor(batch.received[a][0], b, batch.received_dim);
      } else {
        std::vector<Tensor> parts;
        for (std::size_t s = 0; s < n; ++s) {
          if (s == a) continue;
          std::vector<double> mask(b * kMessageDim, 0.0);
          for (std::size_t i = 0; i < b; ++i) {
            if (!batch.episode_start[t][i] && batch.comm_active[s][t - 1][i]) {
              std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(i * kMessageDim), kMessageDim, 1.0);
            }
          }
          parts.push_back(mul(replays[s].message[t - 1], Tensor({b, kMessageDim}, std::move(mask))));
        }
        recv = concat(parts);
      }
      const Tensor o({b, batch.obs_dim}, batch.obs[a][t]);
      const Tensor enc = team_[a].encode_observation(o);
      const agents::AgentForward f = team_[a].forward(o, recv, hidden[a], &enc);
      replays[a].encoding.push_back(enc);
      replays[a].message.push_back(f.message);
      replays[a].logits.push_back(f.logits);
      replays[a].value.push_back(f.value);
      hidden[a] = mul(f.hidden, keep_mask(batch, a, t));
    }
  }
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t a = 0; a < n; ++a) {
    if (!included(a)) continue;
    total = add(total, agent_loss(team_[a], replays[a], batch, a, config_, options.seed, stats[a]));
  }
  tape.backward(total);
  return stats;
}

void Learner::apply(std::vector<AgentLosses>& losses) {
  for (std::size_t a = 0; a < team_.size(); ++a) {
    const ParameterSet params = team_[a].parameters();
    const double norm = clip_gradients(params, config_.grad_clip);
    check_finite(norm, "gradient norm", a);
    losses.at(a).grad_norm = norm;
    optimizers_[a].step();
    params.zero_grad();
  }
}

std::vector<AgentLosses> Learner::update(const RolloutBatch& batch, std::uint64_t seed) {
  GradientOptions options;
  options.seed = seed;
  std::vector<AgentLosses> losses = compute_gradients(batch, options);
  apply(losses);
  return losses;
}

}  // namespace cacl::training
