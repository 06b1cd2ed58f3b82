#include "cacl/training/checkpoint.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "cacl/numerics/serialize.hpp"

namespace cacl::training {

namespace fs = std::filesystem;

namespace {

constexpr const char* kTeamFormat = "cacl-team-v1";

fs::path agent_dir(const fs::path& dir, std::size_t i) { return dir / ("agent_" + std::to_string(i)); }

}  // namespace

std::vector<agents::Agent> make_team(const ExperimentConfig& config) {
  agents::AgentSpec spec;
  spec.env = config.env;
  spec.method = config.method;
  std::vector<agents::Agent> team;
  for (int a = 0; a < config.env.agents; ++a) {
    Rng rng(mix_seed(config.seed, 7, static_cast<std::uint64_t>(a)));
    team.push_back(agents::Agent::create(spec, rng));
  }
  return team;
}

void save_checkpoint(const fs::path& dir, const ExperimentConfig& config,
                     const std::vector<agents::Agent>& team, std::int64_t env_steps,
                     std::int64_t iteration) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < team.size(); ++i) {
    nlohmann::json meta = {{"method", agents::to_string(config.method)},
                           {"env", env::to_string(config.env.id)},
                           {"seed", config.seed},
                           {"env_steps", env_steps},
                           {"agent", i}};
    save_parameters(agent_dir(dir, i), team[i].state(), meta);
  }
  nlohmann::json team_json = {{"format", kTeamFormat},
                              {"config", to_json(config)},
                              {"agents", team.size()},
                              {"env_steps", env_steps},
                              {"iteration", iteration}};
  std::ofstream out(dir / "team.json");
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + (dir / "team.json").string());
  out << team_json.dump(2) << '\n';
  if (!out) throw std::runtime_error("save_checkpoint: write failed in " + dir.string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "team.json");
  if (!in) throw std::runtime_error("load_checkpoint: no team.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed team.json: " + std::string(e.what()));
  }
  if (j.value("format", std::string()) != kTeamFormat) {
    throw std::runtime_error("load_checkpoint: unsupported team format in " + dir.string());
  }
  Checkpoint c;
  c.config = config_from_json(j.at("config"));
  c.env_steps = j.at("env_steps").get<std::int64_t>();
  c.iteration = j.value("iteration", std::int64_t{0});
  c.team = make_team(c.config);
  if (j.at("agents").get<std::size_t>() != c.team.size()) {
    throw std::runtime_error("load_checkpoint: agent count disagrees with the stored config");
  }
  for (std::size_t i = 0; i < c.team.size(); ++i) {
    load_parameters(agent_dir(dir, i), c.team[i].state());
  }
  return c;
}

}  // namespace cacl::training
