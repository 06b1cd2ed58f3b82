#include "cacl/evaluation/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cacl/envs/find_goal.hpp"
#include "cacl/numerics/adam.hpp"

namespace cacl::eval {

using agents::Message;
using training::EpisodeResult;

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

ViewSequence record_views(const std::vector<const agents::Agent*>& team, const env::EnvConfig& config,
                          std::uint64_t env_seed, std::uint64_t action_seed) {
  ViewSequence seq;
  training::run_episode(team, config, env_seed, training::ActionMode::kGreedy, action_seed,
                        [&](const training::StepView& v) {
                          seq.views.push_back(*v.observations);
                          seq.active.push_back(*v.comm_active);
                        });
  return seq;
}

}  // namespace

double cosine(const Message& a, const Message& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < agents::kMessageDim; ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine: zero message");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double protocol_symmetry(const std::vector<const Messenger*>& messengers, const ViewSequence& seq) {
  const std::size_t n = messengers.size();
  if (n < 2) throw std::invalid_argument("protocol_symmetry: need at least 2 agents");
  if (seq.views.size() != seq.active.size()) {
    throw std::invalid_argument("protocol_symmetry: views and activity differ in length");
  }
  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t t = 0; t < seq.views.size(); ++t) {
    if (seq.views[t].size() != n || seq.active[t].size() != n) {
      throw std::invalid_argument("protocol_symmetry: one view per agent required");
    }
    // psi[i][j] = messenger i applied to agent j's view
    std::vector<std::vector<Message>> psi(n, std::vector<Message>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) psi[i][j] = messengers[i]->message(seq.views[t][j]);
    double per_t = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || !seq.active[t][j]) continue;
        per_t += cosine(psi[i][j], psi[j][j]);
        ++pairs;
      }
    }
    if (pairs == 0) continue;
    total += per_t / static_cast<double>(pairs);
    ++steps;
  }
  if (steps == 0) throw std::invalid_argument("protocol_symmetry: no timestep with an active pair");
  return total / static_cast<double>(steps);
}

SymmetryResult protocol_symmetry(const std::vector<const agents::Agent*>& team,
                                 const env::EnvConfig& config, int episodes, std::uint64_t seed) {
  std::vector<AgentMessenger> owned;
  owned.reserve(team.size());
  for (const agents::Agent* a : team) owned.emplace_back(*a);
  std::vector<const Messenger*> messengers;
  for (const AgentMessenger& m : owned) messengers.push_back(&m);
  SymmetryResult r;
  r.per_episode.assign(static_cast<std::size_t>(episodes), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < episodes; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const ViewSequence seq = record_views(team, config, mix_seed(seed, uk), mix_seed(seed, uk, 1));
    r.per_episode[uk] = protocol_symmetry(messengers, seq);
  }
  r.mean = mean_of(r.per_episode);
  r.sd = sd_of(r.per_episode);
  return r;
}

CaptureBreakdown capture_breakdown(const std::vector<EpisodeResult>& results,
                                   const env::EnvConfig& config) {
  if (config.id != env::EnvId::kPredatorPrey) {
    throw std::invalid_argument("capture_breakdown: needs a Predator-Prey environment");
  }
  CaptureBreakdown b;
  b.episodes = static_cast<int>(results.size());
  b.percent.assign(static_cast<std::size_t>(config.prey) + 1, 0.0);
  if (results.empty()) return b;
  std::vector<int> counts(b.percent.size(), 0);
  for (const EpisodeResult& r : results) {
    counts.at(static_cast<std::size_t>(std::clamp(r.captures, 0, config.prey)))++;
  }
  // Counts are integers, so percentages sum to 100 up to rounding.
  for (std::size_t k = 0; k < counts.size(); ++k) {
    b.percent[k] = 100.0 * counts[k] / static_cast<double>(results.size());
  }
  return b;
}

CaptureBreakdown capture_breakdown(const std::vector<const agents::Agent*>& team,
                                   const env::EnvConfig& config, int episodes, std::uint64_t seed) {
  if (config.id != env::EnvId::kPredatorPrey) {
    throw std::invalid_argument("capture_breakdown: needs a Predator-Prey environment");
  }
  return capture_breakdown(training::evaluate_team(team, config, episodes, seed), config);
}

std::vector<MessageRecord> record_messages(const std::vector<const agents::Agent*>& team,
                                           const env::EnvConfig& config, const RecordOptions& options) {
  std::vector<std::vector<MessageRecord>> per_episode(static_cast<std::size_t>(std::max(0, options.episodes)));
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < options.episodes; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    auto& out = per_episode[uk];
    training::run_episode(
        team, config, mix_seed(options.seed, uk), options.mode, mix_seed(options.seed, uk, 1),
        [&](const training::StepView& v) {
          for (std::size_t a = 0; a < v.observations->size(); ++a) {
            MessageRecord r;
            r.episode = k;
            r.t = v.t;
            r.agent = static_cast<int>(a);
            r.observation = (*v.observations)[a];
            r.message = options.messenger ? options.messenger->message(r.observation)
                                          : (*v.messages)[a];
            r.info = v.env->probe_info(static_cast<int>(a));
            r.comm_active = (*v.comm_active)[a] != 0;
            out.push_back(std::move(r));
          }
        });
  }
  std::vector<MessageRecord> all;
  for (auto& e : per_episode) all.insert(all.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
  return all;
}

ProbeTask parse_probe_task(const std::string& name) {
  if (name == "visibility") return ProbeTask::kVisibility;
  if (name == "location") return ProbeTask::kLocation;
  throw std::invalid_argument("unknown probe task '" + name + "' (visibility|location)");
}

std::string to_string(ProbeTask task) {
  return task == ProbeTask::kVisibility ? "visibility" : "location";
}

ProbeDataset build_probe_dataset(const std::vector<MessageRecord>& records, ProbeTask task, int grid,
                                 std::uint64_t seed) {
  ProbeDataset d;
  d.task = task;
  d.classes = task == ProbeTask::kVisibility ? 2 : env::kNumGoalRegions;
  std::vector<std::vector<ProbeSample>> by_class(static_cast<std::size_t>(d.classes));
  for (const MessageRecord& r : records) {
    if (!r.comm_active) continue;
    if (task == ProbeTask::kVisibility) {
      by_class[r.info.goal_visible ? 1 : 0].push_back({r.message, r.info.goal_visible ? 1 : 0});
    } else if (r.info.goal_visible && r.info.goal) {
      const int label = static_cast<int>(env::goal_region(*r.info.goal, grid));
      by_class[static_cast<std::size_t>(label)].push_back({r.message, label});
    }
  }
  std::size_t smallest = by_class[0].size();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      throw std::invalid_argument("build_probe_dataset: class " + std::to_string(c) +
                                  " of the " + to_string(task) + " task has no samples");
    }
    smallest = std::min(smallest, by_class[c].size());
  }
  Rng rng(mix_seed(seed, 0x9B0B));
  std::vector<ProbeSample> balanced;
  for (auto& cls : by_class) {
    rng.shuffle(cls.begin(), cls.end());
    balanced.insert(balanced.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(smallest));
  }
  rng.shuffle(balanced.begin(), balanced.end());
  d.per_class = smallest;
  const auto cut = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(balanced.size())));
  d.train.assign(balanced.begin(), balanced.begin() + static_cast<std::ptrdiff_t>(cut));
  d.test.assign(balanced.begin() + static_cast<std::ptrdiff_t>(cut), balanced.end());
  return d;
}

ProbeDataset shuffle_labels(ProbeDataset data, std::uint64_t seed) {
  // Each split is permuted on its own: pooling them would anti-correlate the
  // test labels of a message cluster with its training labels.
  Rng rng(mix_seed(seed, 0x5A1F));
  for (auto* split : {&data.train, &data.test}) {
    std::vector<int> labels;
    for (const auto& s : *split) labels.push_back(s.label);
    rng.shuffle(labels.begin(), labels.end());
    for (std::size_t k = 0; k < split->size(); ++k) (*split)[k].label = labels[k];
  }
  return data;
}

namespace {

struct Probe {
  std::vector<Dense> layers;
  Tensor operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](h);
      if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
  }
  ParameterSet parameters() const {
    ParameterSet p;
    for (std::size_t i = 0; i < layers.size(); ++i) p.append("l" + std::to_string(i) + ".", layers[i].parameters());
    return p;
  }
};

Tensor message_matrix(const std::vector<ProbeSample>& s, std::span<const std::size_t> idx) {
  std::vector<double> flat;
  flat.reserve(idx.size() * agents::kMessageDim);
  for (std::size_t i : idx) flat.insert(flat.end(), s[i].message.begin(), s[i].message.end());
  return Tensor({idx.size(), agents::kMessageDim}, std::move(flat));
}

double accuracy(const Probe& probe, const std::vector<ProbeSample>& s) {
  if (s.empty()) return 0.0;
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor logits = probe(message_matrix(s, idx));
  const std::size_t c = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < s.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (logits[r * c + k] > logits[r * c + best]) best = k;
    }
    hits += static_cast<int>(best) == s[r].label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(s.size());
}

}  // namespace

ProbeResult train_probe(const ProbeDataset& data, const ProbeConfig& config) {
  if (config.layers != 1 && config.layers != 2) throw std::invalid_argument("train_probe: layers must be 1 or 2");
  if (data.train.empty()) throw std::invalid_argument("train_probe: empty training set");
  Rng rng(mix_seed(config.seed, 0x960B));
  Probe probe;
  const auto classes = static_cast<std::size_t>(data.classes);
  if (config.layers == 1) {
    probe.layers.push_back(Dense::create(agents::kMessageDim, classes, rng));
  } else {
    probe.layers.push_back(Dense::create(agents::kMessageDim, 32, rng));
    probe.layers.push_back(Dense::create(32, classes, rng));
  }
  AdamConfig ac;
  ac.lr = config.learning_rate;
  ac.eps = 1e-8;
  const ParameterSet params = probe.parameters();
  Adam adam(params, ac);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(static_cast<std::size_t>(data.train[i].label));
      GradTape tape;
      const Tensor loss = scale(mean(pick(log_softmax_rows(probe(message_matrix(data.train, idx))), labels)), -1.0);
      tape.backward(loss);
      adam.step();
      params.zero_grad();
    }
  }
  ProbeResult r;
  r.train_size = data.train.size();
  r.test_size = data.test.size();
  r.train_accuracy = accuracy(probe, data.train);
  r.test_accuracy = accuracy(probe, data.test);
  return r;
}

double mean_pairwise_cosine(const std::vector<Message>& a, const std::vector<Message>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mean_pairwise_cosine: empty message set");
  double s = 0.0;
  for (const Message& x : a)
    for (const Message& y : b) s += cosine(x, y);
  return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

std::vector<GoalSimilarity> goal_distance_similarity(const std::vector<const agents::Agent*>& team,
                                                     const env::EnvConfig& config, int episodes,
                                                     std::uint64_t seed, env::Pos reference,
                                                     const std::vector<env::Pos>& anchors,
                                                     const Messenger* messenger) {
  if (config.id != env::EnvId::kFindGoal) {
    throw std::invalid_argument("goal_distance_similarity: needs a Find-Goal environment");
  }
  auto visible = [&](env::Pos goal) {
    env::EnvConfig c = config;
    c.fixed_goal = goal;
    c.validate();
    RecordOptions o;
    o.episodes = episodes;
    o.seed = seed;
    o.messenger = messenger;
    std::vector<Message> out;
    for (const MessageRecord& r : record_messages(team, c, o)) {
      if (r.comm_active && r.info.goal_visible) out.push_back(r.message);
    }
    return out;
  };
  const std::vector<Message> ref = visible(reference);
  std::vector<GoalSimilarity> result;
  for (const env::Pos& p : anchors) {
    GoalSimilarity g;
    g.anchor = p;
    const std::vector<Message> other = visible(p);
    g.reference_messages = ref.size();
    g.anchor_messages = other.size();
    if (!ref.empty() && !other.empty()) g.similarity = mean_pairwise_cosine(ref, other);
    result.push_back(g);
  }
  return result;
}

double crossplay_score(const EpisodeResult& r, const env::EnvConfig& config) {
  return config.id == env::EnvId::kFindGoal ? static_cast<double>(r.length) : r.reward;
}

namespace {

std::vector<int> compositions(const env::EnvConfig& config) {
  const int n = config.agents;
  if (n % 2 == 0 && config.id != env::EnvId::kFindGoal) return {n / 2};
  return {(n + 1) / 2, n / 2};
}

// Mean score of one pairing: every composition gets its own slot draw and
// the same evaluation episodes.
double pairing_score(const std::vector<agents::Agent>& x, const std::vector<agents::Agent>& y,
                     const env::EnvConfig& config, int episodes, std::uint64_t episode_seed,
                     std::uint64_t slot_seed) {
  const auto n = static_cast<std::size_t>(config.agents);
  if (x.size() != n || y.size() != n) {
    throw std::invalid_argument("cross-play: team size does not match the environment");
  }
  Rng rng(slot_seed);
  double total = 0.0;
  const std::vector<int> comps = compositions(config);
  for (int from_x : comps) {
    std::vector<std::size_t> slots(n);
    std::iota(slots.begin(), slots.end(), 0);
    rng.shuffle(slots.begin(), slots.end());
    std::vector<const agents::Agent*> mixed(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t s = slots[k];
      mixed[s] = k < static_cast<std::size_t>(from_x) ? &x[s] : &y[s];
    }
    double sum = 0.0;
    for (const EpisodeResult& r : training::evaluate_team(mixed, config, episodes, episode_seed)) {
      sum += crossplay_score(r, config);
    }
    total += sum / static_cast<double>(episodes);
  }
  return total / static_cast<double>(comps.size());
}

}  // namespace

PairingScore evaluate_pairing(const std::vector<agents::Agent>& x, const std::vector<agents::Agent>& y,
                              const env::EnvConfig& config, const CrossplayConfig& cc) {
  if (cc.pairings < 1 || cc.episodes < 1) throw std::invalid_argument("cross-play: pairings and episodes must be >= 1");
  PairingScore s;
  for (int p = 0; p < cc.pairings; ++p) {
    const auto up = static_cast<std::uint64_t>(p);
    s.per_pairing.push_back(pairing_score(x, y, config, cc.episodes, mix_seed(cc.seed, up), mix_seed(cc.seed, up, 1)));
  }
  s.mean = mean_of(s.per_pairing);
  s.sd = sd_of(s.per_pairing);
  s.episodes = cc.pairings * cc.episodes;
  return s;
}

std::vector<CrossplayCell> crossplay_eval(const std::vector<TeamEntry>& teams,
                                          const std::vector<agents::Method>& methods,
                                          const env::EnvConfig& config, const CrossplayConfig& cc) {
  if (cc.pairings < 1 || cc.episodes < 1) throw std::invalid_argument("cross-play: pairings and episodes must be >= 1");
  auto of = [&](agents::Method m) {
    std::vector<const TeamEntry*> v;
    for (const TeamEntry& t : teams) {
      if (t.method == m) v.push_back(&t);
    }
    if (v.empty()) throw std::invalid_argument("cross-play: no team for method " + agents::to_string(m));
    return v;
  };
  std::vector<CrossplayCell> cells;
  for (agents::Method row : methods) {
    for (agents::Method col : methods) {
      const auto xs = of(row);
      const auto ys = of(col);
      if (row == col && xs.size() < 2) {
        throw std::invalid_argument("cross-play: method " + agents::to_string(row) +
                                    " needs at least 2 seeds (agents must not have trained together)");
      }
      CrossplayCell cell;
      cell.row = row;
      cell.col = col;
      for (int p = 0; p < cc.pairings; ++p) {
        const auto up = static_cast<std::uint64_t>(p);
        Rng pick(mix_seed(cc.seed, up, 2));
        const std::size_t ix = pick.below(xs.size());
        std::size_t iy = pick.below(row == col ? ys.size() - 1 : ys.size());
        if (row == col && iy >= ix) ++iy;
        cell.score.per_pairing.push_back(pairing_score(xs[ix]->team, ys[iy]->team, config, cc.episodes,
                                                       mix_seed(cc.seed, up), mix_seed(cc.seed, up, 1)));
      }
      cell.score.mean = mean_of(cell.score.per_pairing);
      cell.score.sd = sd_of(cell.score.per_pairing);
      cell.score.episodes = cc.pairings * cc.episodes;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void dump_messages(const std::vector<MessageRecord>& records, const env::EnvConfig& config,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_messages: cannot write " + path.string());
  out << "episode,t,agent,m1,m2,m3,m4,goal_visible,other_agent_visible,goal_region\n";
  out.precision(17);
  for (const MessageRecord& r : records) {
    out << r.episode << ',' << r.t << ',' << r.agent;
    for (double m : r.message) out << ',' << m;
    out << ',' << (r.info.goal_visible ? 1 : 0) << ',' << (r.info.other_agent_visible ? 1 : 0) << ',';
    if (config.id == env::EnvId::kFindGoal && r.info.goal) {
      out << env::to_string(env::goal_region(*r.info.goal, config.grid));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("dump_messages: write failed for " + path.string());
}

void dump_trajectories(const std::vector<const agents::Agent*>& team, const env::EnvConfig& config,
                       int episodes, std::uint64_t seed, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_trajectories: cannot write " + path.string());
  for (int k = 0; k < episodes; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    training::run_episode(team, config, mix_seed(seed, uk), training::ActionMode::kGreedy,
                          mix_seed(seed, uk, 1), [&](const training::StepView& v) {
                            nlohmann::json msgs = nlohmann::json::array();
                            for (const Message& m : *v.messages) msgs.push_back(m);
                            const nlohmann::json line = {{"episode", k},
                                                         {"t", v.t},
                                                         {"state", v.env->state_summary()},
                                                         {"actions", *v.actions},
                                                         {"messages", msgs}};
                            out << line.dump() << '\n';
                          });
  }
  if (!out) throw std::runtime_error("dump_trajectories: write failed for " + path.string());
}

}  // namespace cacl::eval
