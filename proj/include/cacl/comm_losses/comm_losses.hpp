#ifndef CACL_COMM_LOSSES_COMM_LOSSES_HPP_
#define CACL_COMM_LOSSES_COMM_LOSSES_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "cacl/agents/agent.hpp"
#include "cacl/numerics/rng.hpp"
#include "cacl/numerics/tensor.hpp"

namespace cacl::comm {

// Trajectory ids are unique per (environment instance, episode), so two
// messages share a trajectory only if no episode boundary separates them.
struct MessageKey {
  std::size_t trajectory = 0;
  int timestep = 0;
  int agent = 0;
  bool operator==(const MessageKey&) const = default;
};

struct MessageBatch {
  Tensor messages;               // [M x d]
  std::vector<MessageKey> keys;  // one per row
  std::vector<bool> tracked;     // gradient reaches only tracked rows
  std::vector<bool> active;      // inactive rows are neither anchors nor in H or K

  std::size_t size() const { return keys.size(); }
  // Throws on size mismatches or duplicate keys.
  void validate() const;
};

// Accumulates rows; untracked rows are detached when appended.
class MessageBatchBuilder {
 public:
  void add(const Tensor& rows, const std::vector<MessageKey>& keys, const std::vector<bool>& active,
           bool tracked);
  MessageBatch build() const;

 private:
  std::vector<Tensor> parts_;
  MessageBatch batch_;
};

enum class ContrastiveMode { kSupCon, kSimClr };

std::string to_string(ContrastiveMode m);
ContrastiveMode parse_contrastive_mode(const std::string& name);

struct ContrastiveConfig {
  int window = 5;  // total span in timesteps, odd
  double temperature = 0.1;
  double kappa = 0.5;
  ContrastiveMode mode = ContrastiveMode::kSupCon;

  int half_window() const { return window / 2; }
  void validate() const;
};

// Row-wise unit normalization (differentiable).
Tensor normalize_messages(const Tensor& messages);
MessageBatch normalize_messages(const MessageBatch& batch);

// Row indices of the positives of `anchor`: same trajectory, within the
// window, active, not the anchor. SimCLR mode draws one of them with `rng`.
std::vector<std::size_t> positives_for(std::size_t anchor, const MessageBatch& batch,
                                       const ContrastiveConfig& config, Rng* rng = nullptr);

// Sum over anchors of  lse_{k in K} s_ak - mean_{h in H} s_ah,
// s = m_a . m_k / temperature, K = every other active row. Rows must be unit
// norm. `anchor_terms`, if given, receives one entry per row (0 for skipped
// anchors). SimCLR mode needs `rng`.
Tensor cacl_loss(const MessageBatch& batch, const ContrastiveConfig& config, Rng* rng = nullptr,
                 std::vector<double>* anchor_terms = nullptr);

// MSE between the decoded message and the observation it came from.
Tensor aecomm_loss(const agents::Agent& agent, const Tensor& observations, const Tensor& messages);

// -(1/T) sum_j [ sum_a |pi - pi_bar| + sum_a pi log pi_bar ] over T rows of
// logits with and without received messages.
Tensor pl_loss(const Tensor& logits_with, const Tensor& logits_without);

struct MessageRouting {
  bool detach_received = true;  // receivers treat messages as constants
  bool joint_graph = false;     // all agents share one backward pass
};

MessageRouting message_routing(agents::Method method);
// Routing for the methods that differentiate through the channel; throws
// for the others.
MessageRouting dial_route(agents::Method method);

}  // namespace cacl::comm

#endif  // CACL_COMM_LOSSES_COMM_LOSSES_HPP_
