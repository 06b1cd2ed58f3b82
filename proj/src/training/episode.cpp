#include "cacl/training/episode.hpp"

#include <exception>
#include <stdexcept>

namespace cacl::training {

EpisodeResult run_episode(const std::vector<const agents::Agent*>& team, const env::EnvConfig& config,
                          std::uint64_t env_seed, ActionMode mode, std::uint64_t action_seed,
                          const StepObserver& observer) {
  if (static_cast<int>(team.size()) != config.agents) {
    throw std::invalid_argument("run_episode: team size does not match the environment");
  }
  const std::size_t n = team.size();
  for (const agents::Agent* a : team) {
    if (!a) throw std::invalid_argument("run_episode: null agent");
    if (a->spec().obs_dim() != static_cast<std::size_t>(config.obs_dim()) ||
        a->spec().num_actions() != static_cast<std::size_t>(config.num_actions()) ||
        a->spec().env.agents != config.agents) {
      throw std::invalid_argument("run_episode: agent was built for a different environment");
    }
  }
  auto env = env::make_env(config);
  env->reset(env_seed);
  std::vector<Rng> rngs;
  for (std::size_t a = 0; a < n; ++a) rngs.emplace_back(mix_seed(action_seed, a));

  std::vector<env::Observation> obs = env->observations();
  std::vector<std::vector<double>> hidden(n, std::vector<double>(agents::kHiddenDim, 0.0));
  std::vector<agents::Message> last(n, agents::Message{});
  std::vector<char> last_comm(n, 0);
  EpisodeResult result;
  result.agent_rewards.assign(n, 0.0);

  for (int t = 0;; ++t) {
    std::vector<agents::Message> emitted(n);
    std::vector<int> actions(n, 0);
    std::vector<char> comm(n, 0);
    std::vector<char> acting(n, 0);
    for (std::size_t a = 0; a < n; ++a) {
      std::vector<agents::Message> received;
      for (std::size_t s = 0; s < n; ++s) {
        if (s == a) continue;
        received.push_back(last_comm[s] ? last[s] : agents::Message{});
      }
      const agents::AgentStep step = mode == ActionMode::kGreedy
                                         ? team[a]->act_greedy(obs[a], received, hidden[a])
                                         : team[a]->act(obs[a], received, hidden[a], rngs[a]);
      acting[a] = env->acting(static_cast<int>(a));
      comm[a] = env->comm_active(static_cast<int>(a));
      actions[a] = acting[a] ? step.action : 0;
      emitted[a] = step.message;
      hidden[a] = step.hidden;
    }
    if (observer) observer(StepView{t, env.get(), &obs, &emitted, &actions, &comm});
    env::StepResult res = env->step(actions);
    for (std::size_t a = 0; a < n; ++a) result.agent_rewards[a] += res.rewards[a];
    result.captures += res.captures;
    result.collisions += res.collisions;
    for (int a : res.finished) {
      std::fill(hidden[static_cast<std::size_t>(a)].begin(), hidden[static_cast<std::size_t>(a)].end(), 0.0);
    }
    last = emitted;
    last_comm = comm;
    obs = std::move(res.observations);
    if (res.done) break;
  }
  result.length = env->steps();
  result.success = env->episode_success();
  for (double r : result.agent_rewards) result.reward += r;
  result.reward /= static_cast<double>(n);
  return result;
}

std::vector<EpisodeResult> evaluate_team(const std::vector<const agents::Agent*>& team,
                                         const env::EnvConfig& config, int episodes,
                                         std::uint64_t seed, ActionMode mode) {
  if (episodes < 0) throw std::invalid_argument("evaluate_team: episodes must be >= 0");
  std::vector<EpisodeResult> out(static_cast<std::size_t>(episodes));
  std::vector<std::exception_ptr> errors(out.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < episodes; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    try {
      out[uk] = run_episode(team, config, mix_seed(seed, uk), mode, mix_seed(seed, uk, 1));
    } catch (...) {
      errors[uk] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<const agents::Agent*> team_view(const std::vector<agents::Agent>& team) {
  std::vector<const agents::Agent*> v;
  for (const agents::Agent& a : team) v.push_back(&a);
  return v;
}

EvalSummary summarize(const std::vector<EpisodeResult>& results) {
  EvalSummary s;
  s.episodes = static_cast<int>(results.size());
  if (results.empty()) return s;
  for (const EpisodeResult& r : results) {
    s.mean_reward += r.reward;
    s.mean_length += r.length;
    s.success_rate += r.success ? 1.0 : 0.0;
    s.mean_captures += r.captures;
  }
  const double k = static_cast<double>(results.size());
  s.mean_reward /= k;
  s.mean_length /= k;
  s.success_rate /= k;
  s.mean_captures /= k;
  return s;
}

}  // namespace cacl::training
