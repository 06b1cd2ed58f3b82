#include "cacl/agents/agent.hpp"

#include <cmath>
#include <stdexcept>

#include "cacl/numerics/ops.hpp"

namespace cacl::agents {

namespace {
constexpr std::size_t kFgChannels = 3;
constexpr std::size_t kConvWidths[2] = {16, 32};
constexpr int kSpectralWarmup = 1000;
}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kIac: return "iac";
    case Method::kDial: return "dial";
    case Method::kPl: return "pl";
    case Method::kAeComm: return "aecomm";
    case Method::kCacl: return "cacl";
    case Method::kCaclDial: return "cacl_dial";
    case Method::kAeCommDial: return "aecomm_dial";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kIac, Method::kDial, Method::kPl, Method::kAeComm, Method::kCacl,
                   Method::kCaclDial, Method::kAeCommDial}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + name + "'");
}

bool communicates(Method m) { return m != Method::kIac; }
bool routes_through_messages(Method m) {
  return m == Method::kDial || m == Method::kCaclDial || m == Method::kAeCommDial;
}
bool uses_cacl(Method m) { return m == Method::kCacl || m == Method::kCaclDial; }
bool uses_aecomm(Method m) { return m == Method::kAeComm || m == Method::kAeCommDial; }
bool uses_pl(Method m) { return m == Method::kPl; }

std::size_t AgentSpec::message_encoding_dim() const {
  return env.id == env::EnvId::kTrafficJunction ? 16 : 8;
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("stack_rows: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(flat));
}

Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}, 0.0); }

Tensor Agent::Head::operator()(const Tensor& x) const {
  return out(relu(hidden1(relu(hidden0(x)))));
}

Agent Agent::create(const AgentSpec& spec, Rng& rng) {
  spec.env.validate();
  Agent a;
  a.spec_ = spec;
  const std::size_t obs = spec.obs_dim();
  if (spec.env.id == env::EnvId::kFindGoal) {
    a.obs_conv_.push_back(Conv3x3::create(kFgChannels, kConvWidths[0], rng));
    a.obs_conv_.push_back(Conv3x3::create(kConvWidths[0], kConvWidths[1], rng));
    const std::size_t window = static_cast<std::size_t>(spec.env.fov * spec.env.fov);
    a.obs_fc_.push_back(Dense::create(kConvWidths[1] * window + 2, kHiddenDim, rng));
    a.obs_fc_.push_back(Dense::create(kHiddenDim, kHiddenDim, rng));
    a.obs_fc_.push_back(Dense::create(kHiddenDim, kHiddenDim, rng));
  } else {
    a.obs_fc_.push_back(Dense::create(obs, kHiddenDim, rng));
  }
  a.msg_head_ = Dense::create(kHiddenDim, kMessageDim, rng);
  const std::size_t in = std::max<std::size_t>(spec.received_dim(), 1);
  const std::size_t out = spec.message_encoding_dim();
  if (spec.env.id == env::EnvId::kTrafficJunction) {
    a.msg_enc_.push_back(Dense::create(in, kHiddenDim, rng));
    a.msg_enc_.push_back(Dense::create(kHiddenDim, kHiddenDim, rng));
    a.msg_enc_.push_back(Dense::create(kHiddenDim, out, rng));
  } else {
    a.msg_enc_.push_back(Dense::create(in, kHiddenDim, rng));
    a.msg_enc_.push_back(Dense::create(kHiddenDim, out, rng));
  }
  a.gru_ = Gru::create(kHiddenDim + out, kHiddenDim, rng);
  auto make_head = [&](std::size_t outputs) {
    Head h;
    h.hidden0 = Dense::create(kHiddenDim, kHiddenDim, rng);
    h.hidden1 = SpectralDense::create(kHiddenDim, kHiddenDim, rng);
    h.out = Dense::create(kHiddenDim, outputs, rng);
    return h;
  };
  a.policy_ = make_head(spec.num_actions());
  a.value_ = make_head(1);
  if (uses_aecomm(spec.method)) {
    a.decoder_ = std::array<Dense, 2>{Dense::create(kMessageDim, kHiddenDim, rng),
                                      Dense::create(kHiddenDim, obs, rng)};
  }
  // Converge u before the first update; afterwards one round per update
  // keeps it tracking the slowly moving weights.
  a.spectral_update(kSpectralWarmup);
  return a;
}

Tensor Agent::encode_observation(const Tensor& obs) const {
  if (obs.rank() != 2 || obs.dim(1) != spec_.obs_dim()) {
    throw std::invalid_argument("encode_observation: expected [B x " +
                                std::to_string(spec_.obs_dim()) + "], got " +
                                shape_str(obs.shape()));
  }
  if (obs_conv_.empty()) return relu(obs_fc_[0](obs));
  const std::size_t batch = obs.dim(0);
  const std::size_t fov = static_cast<std::size_t>(spec_.env.fov);
  const std::size_t window = fov * fov;
  Tensor grid = reshape(slice_last(obs, 0, kFgChannels * window), {batch, kFgChannels, fov, fov});
  Tensor pos = slice_last(obs, kFgChannels * window, kFgChannels * window + 2);
  for (const Conv3x3& conv : obs_conv_) grid = relu(conv(grid));
  Tensor x = concat({reshape(grid, {batch, kConvWidths[1] * window}), pos});
  for (const Dense& fc : obs_fc_) x = relu(fc(x));
  return x;
}

Tensor Agent::message_from_encoding(const Tensor& encoding) const {
  if (!communicates(spec_.method)) {
    return Tensor({encoding.dim(0), kMessageDim}, 0.0);
  }
  return sigmoid(msg_head_(encoding));
}

Tensor Agent::produce_message(const Tensor& obs) const {
  return message_from_encoding(encode_observation(obs));
}

Message Agent::produce_message(const env::Observation& obs) const {
  const Tensor m = produce_message(stack_rows({obs}, spec_.obs_dim()));
  Message out{};
  for (std::size_t d = 0; d < kMessageDim; ++d) out[d] = m[d];
  return out;
}

Tensor Agent::encode_messages(const Tensor& received) const {
  const std::size_t batch = received.dim(0);
  if (!communicates(spec_.method) || spec_.peers() == 0) {
    return Tensor({batch, spec_.message_encoding_dim()}, 0.0);
  }
  if (received.rank() != 2 || received.dim(1) != spec_.received_dim()) {
    throw std::invalid_argument("encode_messages: expected [B x " +
                                std::to_string(spec_.received_dim()) + "]");
  }
  Tensor x = received;
  for (const Dense& fc : msg_enc_) x = relu(fc(x));
  return x;
}

AgentForward Agent::forward(const Tensor& obs, const Tensor& received, const Tensor& hidden,
                            const Tensor* encoding) const {
  AgentForward f;
  f.encoding = encoding ? *encoding : encode_observation(obs);
  f.message = message_from_encoding(f.encoding);
  const Tensor msg_enc = encode_messages(received);
  f.hidden = gru_step(concat({f.encoding, msg_enc}), hidden, gru_);
  f.logits = policy_(f.hidden);
  f.value = reshape(value_(f.hidden), {hidden.dim(0)});
  return f;
}

Tensor Agent::decode_observation(const Tensor& message) const {
  if (!decoder_) {
    throw std::logic_error("decode_observation: method " + to_string(spec_.method) +
                           " has no decoder");
  }
  return (*decoder_)[1](relu((*decoder_)[0](message)));
}

AgentStep Agent::act_impl(const env::Observation& obs, const std::vector<Message>& received,
                          const std::vector<double>& hidden, Rng* rng) const {
  if (received.size() != spec_.peers()) {
    throw std::invalid_argument("act: expected " + std::to_string(spec_.peers()) +
                                " received messages");
  }
  std::vector<double> flat;
  for (const Message& m : received) flat.insert(flat.end(), m.begin(), m.end());
  const Tensor o = stack_rows({obs}, spec_.obs_dim());
  const Tensor r = spec_.peers() == 0 ? zeros(1, 1) : Tensor({1, spec_.received_dim()}, flat);
  const Tensor h = stack_rows({hidden}, kHiddenDim);
  const AgentForward f = forward(o, r, h);

  const Tensor logp = log_softmax_rows(f.logits);
  const std::size_t actions = spec_.num_actions();
  std::vector<double> probs(actions);
  AgentStep step;
  for (std::size_t a = 0; a < actions; ++a) {
    probs[a] = std::exp(logp[a]);
    step.entropy -= probs[a] * logp[a];
  }
  std::size_t choice = 0;
  if (rng) {
    choice = rng->categorical(probs);
  } else {
    for (std::size_t a = 1; a < actions; ++a) {
      if (f.logits[a] > f.logits[choice]) choice = a;
    }
  }
  step.action = static_cast<int>(choice);
  step.log_prob = logp[choice];
  step.value = f.value[0];
  for (std::size_t d = 0; d < kMessageDim; ++d) step.message[d] = f.message[d];
  step.hidden.assign(f.hidden.data().begin(), f.hidden.data().end());
  return step;
}

AgentStep Agent::act(const env::Observation& obs, const std::vector<Message>& received,
                     const std::vector<double>& hidden, Rng& rng) const {
  return act_impl(obs, received, hidden, &rng);
}

AgentStep Agent::act_greedy(const env::Observation& obs, const std::vector<Message>& received,
                            const std::vector<double>& hidden) const {
  return act_impl(obs, received, hidden, nullptr);
}

void Agent::spectral_update(int iters) {
  policy_.hidden1.update(iters);
  value_.hidden1.update(iters);
}

std::array<Tensor, 2> Agent::spectral_weights() const {
  return {policy_.hidden1.effective_weight().detach(), value_.hidden1.effective_weight().detach()};
}

ParameterSet Agent::parameters() const {
  ParameterSet p;
  for (std::size_t i = 0; i < obs_conv_.size(); ++i) {
    p.append("obs_enc.conv" + std::to_string(i) + ".", obs_conv_[i].parameters());
  }
  for (std::size_t i = 0; i < obs_fc_.size(); ++i) {
    p.append("obs_enc.fc" + std::to_string(i) + ".", obs_fc_[i].parameters());
  }
  p.append("msg_head.", msg_head_.parameters());
  for (std::size_t i = 0; i < msg_enc_.size(); ++i) {
    p.append("msg_enc.fc" + std::to_string(i) + ".", msg_enc_[i].parameters());
  }
  p.append("gru.", gru_.parameters());
  p.append("policy.fc0.", policy_.hidden0.parameters());
  p.append("policy.fc1.", policy_.hidden1.parameters());
  p.append("policy.out.", policy_.out.parameters());
  p.append("value.fc0.", value_.hidden0.parameters());
  p.append("value.fc1.", value_.hidden1.parameters());
  p.append("value.out.", value_.out.parameters());
  if (decoder_) {
    p.append("decoder.fc0.", (*decoder_)[0].parameters());
    p.append("decoder.fc1.", (*decoder_)[1].parameters());
  }
  return p;
}

ParameterSet Agent::parameters_with_prefix(const std::string& prefix) const {
  ParameterSet out;
  for (const auto& item : parameters()) {
    if (item.name.rfind(prefix, 0) == 0) out.add(item.name, item.tensor);
  }
  return out;
}

ParameterSet Agent::state() const {
  ParameterSet p = parameters();
  p.add("policy.fc1.sn_u", policy_.hidden1.state.u);
  p.add("value.fc1.sn_u", value_.hidden1.state.u);
  return p;
}

Agent Agent::clone() const {
  Rng scratch(0);
  Agent copy = create(spec_, scratch);
  copy.state().copy_values_from(state());
  return copy;
}

}  // namespace cacl::agents
