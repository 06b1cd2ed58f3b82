#ifndef CACL_EVALUATION_EVALUATION_HPP_
#define CACL_EVALUATION_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "cacl/agents/agent.hpp"
#include "cacl/envs/env.hpp"
#include "cacl/training/episode.hpp"

namespace cacl::eval {

// Anything that turns an observation into a message: a trained agent's
// encoder + message head, or a synthetic oracle for pipeline checks.
class Messenger {
 public:
  virtual ~Messenger() = default;
  virtual agents::Message message(const env::Observation& obs) const = 0;
};

class AgentMessenger final : public Messenger {
 public:
  explicit AgentMessenger(const agents::Agent& agent) : agent_(agent) {}
  agents::Message message(const env::Observation& obs) const override {
    return agent_.produce_message(obs);
  }

 private:
  const agents::Agent& agent_;
};

class FunctionMessenger final : public Messenger {
 public:
  explicit FunctionMessenger(std::function<agents::Message(const env::Observation&)> f)
      : f_(std::move(f)) {}
  agents::Message message(const env::Observation& obs) const override { return f_(obs); }

 private:
  std::function<agents::Message(const env::Observation&)> f_;
};

double cosine(const agents::Message& a, const agents::Message& b);

// One observation tuple per timestep: views[t][j] is agent j's observation,
// active[t][j] whether j was communicating (inactive views are skipped as
// the j of a pair).
struct ViewSequence {
  std::vector<std::vector<env::Observation>> views;
  std::vector<std::vector<char>> active;
};

// Per timestep, the mean over agents i and others j of
// cos(psi_i(o_j), psi_j(o_j)); then the mean over timesteps with a pair.
double protocol_symmetry(const std::vector<const Messenger*>& messengers, const ViewSequence& seq);

struct SymmetryResult {
  double mean = 0.0;  // over episodes
  double sd = 0.0;
  std::vector<double> per_episode;
};

// Greedy trajectories of the team itself (episode k seeded with
// mix_seed(seed, k)), scored with the team's own messengers.
SymmetryResult protocol_symmetry(const std::vector<const agents::Agent*>& team,
                                 const env::EnvConfig& config, int episodes, std::uint64_t seed);

struct CaptureBreakdown {
  std::vector<double> percent;  // percent[k]: episodes that captured exactly k prey
  int episodes = 0;
};
CaptureBreakdown capture_breakdown(const std::vector<training::EpisodeResult>& results,
                                   const env::EnvConfig& config);
CaptureBreakdown capture_breakdown(const std::vector<const agents::Agent*>& team,
                                   const env::EnvConfig& config, int episodes, std::uint64_t seed);

// One emitted message with what an observer knows about its sender.
struct MessageRecord {
  int episode = 0;
  int t = 0;
  int agent = 0;
  agents::Message message{};
  env::Observation observation;
  env::ProbeInfo info;
  bool comm_active = true;
};

struct RecordOptions {
  int episodes = 10;
  std::uint64_t seed = 0;
  training::ActionMode mode = training::ActionMode::kGreedy;
  // Replaces the agents' messages in the records (actions still come
  // from the team, whose own channel is unchanged).
  const Messenger* messenger = nullptr;
};
std::vector<MessageRecord> record_messages(const std::vector<const agents::Agent*>& team,
                                           const env::EnvConfig& config, const RecordOptions& options);

enum class ProbeTask { kVisibility, kLocation };
ProbeTask parse_probe_task(const std::string& name);
std::string to_string(ProbeTask task);

struct ProbeSample {
  agents::Message message{};
  int label = 0;
};

struct ProbeDataset {
  ProbeTask task = ProbeTask::kVisibility;
  int classes = 2;
  std::size_t per_class = 0;  // after balancing
  std::vector<ProbeSample> train;
  std::vector<ProbeSample> test;
};

// Visibility: label = goal in the sender's view. Location: goal-visible
// messages only, labelled by goal region. Classes are balanced by seeded
// downsampling, then split 70/30 at random. Throws if a class is empty.
ProbeDataset build_probe_dataset(const std::vector<MessageRecord>& records, ProbeTask task, int grid,
                                 std::uint64_t seed);

struct ProbeResult {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct ProbeConfig {
  int layers = 2;  // 1: linear map; 2: hidden 32 + output
  int epochs = 200;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};
ProbeResult train_probe(const ProbeDataset& data, const ProbeConfig& config);

// Labels permuted at random within the training and within the test set.
ProbeDataset shuffle_labels(ProbeDataset data, std::uint64_t seed);

struct GoalSimilarity {
  env::Pos anchor;
  std::optional<double> similarity;  // empty when either message set is empty
  std::size_t reference_messages = 0;
  std::size_t anchor_messages = 0;
};

// Mean pairwise cosine between goal-visible messages collected with the goal
// fixed at `reference` and those collected with it fixed at each anchor.
std::vector<GoalSimilarity> goal_distance_similarity(const std::vector<const agents::Agent*>& team,
                                                     const env::EnvConfig& config, int episodes,
                                                     std::uint64_t seed, env::Pos reference,
                                                     const std::vector<env::Pos>& anchors,
                                                     const Messenger* messenger = nullptr);
double mean_pairwise_cosine(const std::vector<agents::Message>& a,
                            const std::vector<agents::Message>& b);

// A trained team for cross-play.
struct TeamEntry {
  agents::Method method = agents::Method::kIac;
  std::uint64_t seed = 0;
  std::vector<agents::Agent> team;
};

struct CrossplayConfig {
  int pairings = 10;
  int episodes = 10;
  std::uint64_t seed = 0;
};

struct PairingScore {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> per_pairing;
  int episodes = 0;
};

// Slots of team x and team y are mixed while keeping every agent in the slot
// it trained in. Predator-Prey: half the slots from each team. Find-Goal:
// both (n+1)/2-vs-n/2 compositions averaged. Pairing p draws the slot split
// from mix_seed(seed, p, 1) and evaluates mix_seed(seed, p) episodes, so x
// paired with itself is exactly evaluate_team with that seed. The score is
// the episode length for Find-Goal and the episode reward otherwise.
PairingScore evaluate_pairing(const std::vector<agents::Agent>& x, const std::vector<agents::Agent>& y,
                              const env::EnvConfig& config, const CrossplayConfig& cc);
double crossplay_score(const training::EpisodeResult& r, const env::EnvConfig& config);

struct CrossplayCell {
  agents::Method row = agents::Method::kIac;
  agents::Method col = agents::Method::kIac;
  PairingScore score;
};

// Every ordered method pair. Pairing p picks one team per side from
// mix_seed(seed, p, 2); same-method cells always pick two different seeds.
// Throws std::invalid_argument when a method has no team, or only one team
// and an intra-method cell is requested.
std::vector<CrossplayCell> crossplay_eval(const std::vector<TeamEntry>& teams,
                                          const std::vector<agents::Method>& methods,
                                          const env::EnvConfig& config, const CrossplayConfig& cc);

// CSV: episode,t,agent,m1,m2,m3,m4,goal_visible,other_agent_visible,goal_region
void dump_messages(const std::vector<MessageRecord>& records, const env::EnvConfig& config,
                   const std::filesystem::path& path);
// JSON lines, one per step: {"episode", "t", "state", "actions", "messages"}.
void dump_trajectories(const std::vector<const agents::Agent*>& team, const env::EnvConfig& config,
                       int episodes, std::uint64_t seed, const std::filesystem::path& path);

}  // namespace cacl::eval

#endif  // CACL_EVALUATION_EVALUATION_HPP_
