#ifndef CACL_AGENTS_AGENT_HPP_
#define CACL_AGENTS_AGENT_HPP_

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cacl/envs/env.hpp"
#include "cacl/numerics/layers.hpp"
#include "cacl/numerics/rng.hpp"

namespace cacl::agents {

enum class Method { kIac, kDial, kPl, kAeComm, kCacl, kCaclDial, kAeCommDial };

std::string to_string(Method m);
Method parse_method(const std::string& name);

bool communicates(Method m);
// Receiver losses flow back into the sender through the message.
bool routes_through_messages(Method m);
bool uses_cacl(Method m);
bool uses_aecomm(Method m);
bool uses_pl(Method m);

inline constexpr std::size_t kMessageDim = 4;
inline constexpr std::size_t kHiddenDim = 32;
using Message = std::array<double, kMessageDim>;

struct AgentSpec {
  env::EnvConfig env;
  Method method = Method::kIac;

  std::size_t obs_dim() const { return static_cast<std::size_t>(env.obs_dim()); }
  std::size_t num_actions() const { return static_cast<std::size_t>(env.num_actions()); }
  std::size_t peers() const { return static_cast<std::size_t>(env.agents - 1); }
  std::size_t received_dim() const { return peers() * kMessageDim; }
  std::size_t message_encoding_dim() const;
};

struct AgentStep {
  int action = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
  double value = 0.0;
  Message message{};
  std::vector<double> hidden;
};

// One step of the network for a batch of rows.
struct AgentForward {
  Tensor encoding;  // [B x 32]
  Tensor message;   // [B x 4]; zeros for non-communicating methods
  Tensor hidden;    // [B x 32]
  Tensor logits;    // [B x A]
  Tensor value;     // [B]
};

// A decentralized agent: observation encoder, message head, message
// encoder, GRU core, policy and value heads (spectral normalization on the
// second hidden layer of each head), plus the AEComm decoder when the method
// needs it. Agents never share parameter storage.
class Agent {
 public:
  static Agent create(const AgentSpec& spec, Rng& rng);

  const AgentSpec& spec() const { return spec_; }

  // [B x obs] -> [B x 32]
  Tensor encode_observation(const Tensor& obs) const;
  // sigmoid(head(encoding)); does not look at the recurrent state.
  Tensor message_from_encoding(const Tensor& encoding) const;
  Tensor produce_message(const Tensor& obs) const;
  Message produce_message(const env::Observation& obs) const;
  // [B x (N-1)*4] -> [B x msg_enc]; a zero tensor when not communicating.
  Tensor encode_messages(const Tensor& received) const;
  // `encoding` lets callers reuse (or detach) an observation encoding.
  AgentForward forward(const Tensor& obs, const Tensor& received, const Tensor& hidden,
                       const Tensor* encoding = nullptr) const;
  // Reconstruction of the observation from a message (AEComm only).
  Tensor decode_observation(const Tensor& message) const;

  // Samples with `rng`; `received` is in ascending sender order, skipping self.
  AgentStep act(const env::Observation& obs, const std::vector<Message>& received,
                const std::vector<double>& hidden, Rng& rng) const;
  AgentStep act_greedy(const env::Observation& obs, const std::vector<Message>& received,
                       const std::vector<double>& hidden) const;

  // One power-iteration round on each spectrally normalized layer.
  void spectral_update(int iters = 1);
  // Effective (normalized) penultimate weights of the policy and value heads.
  std::array<Tensor, 2> spectral_weights() const;

  // Trainable tensors, named.
  ParameterSet parameters() const;
  ParameterSet parameters_with_prefix(const std::string& prefix) const;
  // Trainable tensors plus persistent non-trainable state (power-iteration
  // vectors); this is what a checkpoint stores.
  ParameterSet state() const;

  Agent clone() const;
  bool has_decoder() const { return decoder_.has_value(); }

 private:
  struct Head {
    Dense hidden0;
    SpectralDense hidden1;
    Dense out;
    Tensor operator()(const Tensor& x) const;
  };

  AgentStep act_impl(const env::Observation& obs, const std::vector<Message>& received,
                     const std::vector<double>& hidden, Rng* rng) const;

  AgentSpec spec_;
  // Find-Goal: two conv layers then three dense layers; others: one dense.
  std::vector<Conv3x3> obs_conv_;
  std::vector<Dense> obs_fc_;
  Dense msg_head_;
  std::vector<Dense> msg_enc_;
  Gru gru_;
  Head policy_;
  Head value_;
  std::optional<std::array<Dense, 2>> decoder_;
};

// Row-major [rows x cols] tensor from row vectors.
Tensor stack_rows(const std::vector<std::vector<double>>& rows, std::size_t cols);
Tensor zeros(std::size_t rows, std::size_t cols);

}  // namespace cacl::agents

#endif  // CACL_AGENTS_AGENT_HPP_
