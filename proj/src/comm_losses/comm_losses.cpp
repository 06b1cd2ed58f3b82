#include "cacl/comm_losses/comm_losses.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "cacl/numerics/ops.hpp"

namespace cacl::comm {

namespace {

constexpr std::size_t kParallelRows = 64;

std::map<std::size_t, std::vector<std::size_t>> rows_by_trajectory(const MessageBatch& batch) {
  std::map<std::size_t, std::vector<std::size_t>> out;
  for (std::size_t r = 0; r < batch.size(); ++r) out[batch.keys[r].trajectory].push_back(r);
  return out;
}

std::vector<std::size_t> window_members(std::size_t anchor, const MessageBatch& batch,
                                        const std::vector<std::size_t>& trajectory_rows,
                                        int half) {
  std::vector<std::size_t> h;
  if (!batch.active[anchor]) return h;
  const int t = batch.keys[anchor].timestep;
  for (std::size_t r : trajectory_rows) {
    if (r == anchor || !batch.active[r]) continue;
    if (std::abs(batch.keys[r].timestep - t) <= half) h.push_back(r);
  }
  return h;
}

}  // namespace

void MessageBatch::validate() const {
  if (messages.rank() != 2 || messages.dim(0) != keys.size()) {
    throw std::invalid_argument("MessageBatch: messages must be [M x d] with one key per row");
  }
  if (tracked.size() != keys.size() || active.size() != keys.size()) {
    throw std::invalid_argument("MessageBatch: flag vectors must match the row count");
  }
  std::map<std::tuple<std::size_t, int, int>, std::size_t> seen;
  for (std::size_t r = 0; r < keys.size(); ++r) {
    const auto k = std::make_tuple(keys[r].trajectory, keys[r].timestep, keys[r].agent);
    if (!seen.emplace(k, r).second) {
      throw std::invalid_argument("MessageBatch: duplicate key (trajectory " +
                                  std::to_string(keys[r].trajectory) + ", t " +
                                  std::to_string(keys[r].timestep) + ", agent " +
                                  std::to_string(keys[r].agent) + ")");
    }
  }
}

void MessageBatchBuilder::add(const Tensor& rows, const std::vector<MessageKey>& keys,
                              const std::vector<bool>& active, bool tracked) {
  if (rows.rank() != 2 || rows.dim(0) != keys.size() || active.size() != keys.size()) {
    throw std::invalid_argument("MessageBatchBuilder::add: one key and flag per row");
  }
  parts_.push_back(tracked ? rows : rows.detach());
  batch_.keys.insert(batch_.keys.end(), keys.begin(), keys.end());
  batch_.active.insert(batch_.active.end(), active.begin(), active.end());
  batch_.tracked.insert(batch_.tracked.end(), keys.size(), tracked);
}

MessageBatch MessageBatchBuilder::build() const {
  MessageBatch b = batch_;
  b.messages = concat_rows(parts_);
  b.validate();
  return b;
}

std::string to_string(ContrastiveMode m) {
  return m == ContrastiveMode::kSupCon ? "supcon" : "simclr";
}

ContrastiveMode parse_contrastive_mode(const std::string& name) {
  if (name == "supcon") return ContrastiveMode::kSupCon;
  if (name == "simclr") return ContrastiveMode::kSimClr;
  throw std::invalid_argument("unknown contrastive mode '" + name + "'");
}

void ContrastiveConfig::validate() const {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("contrastive window must be odd and >= 1, got " +
                                std::to_string(window));
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("contrastive temperature must be > 0");
  if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
}

Tensor normalize_messages(const Tensor& messages) { return l2_normalize_rows(messages); }

MessageBatch normalize_messages(const MessageBatch& batch) {
  MessageBatch out = batch;
  out.messages = normalize_messages(batch.messages);
  return out;
}

std::vector<std::size_t> positives_for(std::size_t anchor, const MessageBatch& batch,
                                       const ContrastiveConfig& config, Rng* rng) {
  if (anchor >= batch.size()) throw std::out_of_range("positives_for: anchor not in batch");
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    if (batch.keys[r].trajectory == batch.keys[anchor].trajectory) rows.push_back(r);
  }
  std::vector<std::size_t> h = window_members(anchor, batch, rows, config.half_window());
  if (config.mode == ContrastiveMode::kSimClr && !h.empty()) {
    if (!rng) throw std::invalid_argument("positives_for: simclr mode needs an rng");
    h = {h[rng->below(h.size())]};
  }
  return h;
}

Tensor cacl_loss(const MessageBatch& batch, const ContrastiveConfig& config, Rng* rng,
                 std::vector<double>* anchor_terms) {
  config.validate();
  batch.validate();
  const std::size_t m = batch.size();
  if (m < 2) throw std::invalid_argument("cacl_loss: need at least 2 messages");
  const std::size_t d = batch.messages.dim(1);
  const auto z = batch.messages.data();
  for (std::size_t r = 0; r < m; ++r) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) n2 += z[r * d + c] * z[r * d + c];
    if (std::abs(n2 - 1.0) > 1e-6) {
      throw std::domain_error("cacl_loss: row " + std::to_string(r) + " is not unit norm");
    }
  }

  const auto groups = rows_by_trajectory(batch);
  std::vector<std::vector<std::size_t>> positives(m);
  for (std::size_t a = 0; a < m; ++a) {
    positives[a] = window_members(a, batch, groups.at(batch.keys[a].trajectory),
                                  config.half_window());
    if (config.mode == ContrastiveMode::kSimClr && !positives[a].empty()) {
      if (!rng) throw std::invalid_argument("cacl_loss: simclr mode needs an rng");
      positives[a] = {positives[a][rng->below(positives[a].size())]};
    }
  }

  const double inv_eta = 1.0 / config.temperature;
  const bool track = GradTape::tracking({&batch.messages});
  std::vector<double> terms(m, 0.0);
  // coef[a*m + k] = softmax_k - 1[k in H_a]/|H_a|
  std::vector<double> coef(track ? m * m : 0, 0.0);

#pragma omp parallel for schedule(static) if (m >= kParallelRows)
  for (std::size_t a = 0; a < m; ++a) {
    const auto& h = positives[a];
    if (h.empty()) continue;
    std::vector<double> s(m, -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      if (k == a || !batch.active[k]) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += z[a * d + c] * z[k * d + c];
      s[k] = dot * inv_eta;
      top = std::max(top, s[k]);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != a && batch.active[k]) total += std::exp(s[k] - top);
    }
    const double lse = top + std::log(total);
    double pos = 0.0;
    for (std::size_t k : h) pos += s[k];
    const double inv_h = 1.0 / static_cast<double>(h.size());
    terms[a] = lse - pos * inv_h;
    if (track) {
      double* row = coef.data() + a * m;
      for (std::size_t k = 0; k < m; ++k) {
        if (k != a && batch.active[k]) row[k] = std::exp(s[k] - lse);
      }
      for (std::size_t k : h) row[k] -= inv_h;
    }
  }

  double loss = 0.0;
  for (double t : terms) loss += t;
  if (anchor_terms) *anchor_terms = terms;

  Tensor y = make_result({}, {loss}, track);
  if (track) {
    GradTape::current()->record([xi = batch.messages.handle(), yi = y.handle(),
                                 coef = std::move(coef), tracked = batch.tracked, m, d, inv_eta] {
      if (yi->grad.empty()) return;
      const double g = yi->grad[0] * inv_eta;
      auto out = xi->grad_buffer();
      const auto& zv = xi->value;
#pragma omp parallel for schedule(static) if (m >= kParallelRows)
      for (std::size_t r = 0; r < m; ++r) {
        if (!tracked[r]) continue;
        for (std::size_t k = 0; k < m; ++k) {
          const double w = coef[r * m + k] + coef[k * m + r];
          if (w == 0.0) continue;
          for (std::size_t c = 0; c < d; ++c) out[r * d + c] += g * w * zv[k * d + c];
        }
      }
    });
  }
  return y;
}

Tensor aecomm_loss(const agents::Agent& agent, const Tensor& observations,
                   const Tensor& messages) {
  return mse(agent.decode_observation(messages), observations);
}

Tensor pl_loss(const Tensor& logits_with, const Tensor& logits_without) {
  if (logits_with.shape() != logits_without.shape() || logits_with.rank() != 2) {
    throw std::invalid_argument("pl_loss: need two [T x A] logit matrices of equal shape");
  }
  const std::size_t t = logits_with.dim(0);
  if (t == 0) throw std::invalid_argument("pl_loss: empty trajectory");
  const Tensor pi = softmax_rows(logits_with);
  const Tensor pi_bar = softmax_rows(logits_without);
  const Tensor l1 = sum(abs(sub(pi, pi_bar)));
  const Tensor cross = sum(mul(pi, log_softmax_rows(logits_without)));
  return scale(add(l1, cross), -1.0 / static_cast<double>(t));
}

MessageRouting message_routing(agents::Method method) {
  if (agents::routes_through_messages(method)) return {false, true};
  return {true, false};
}

MessageRouting dial_route(agents::Method method) {
  if (!agents::routes_through_messages(method)) {
    throw std::invalid_argument("dial_route: method " + agents::to_string(method) +
                                " does not differentiate through messages");
  }
  return message_routing(method);
}

}  // namespace cacl::comm
