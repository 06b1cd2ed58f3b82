#include "cacl/training/config.hpp"

#include <functional>
#include <type_traits>
#include <utility>
#include <sstream>
#include <stdexcept>

namespace cacl::training {

namespace {

using nlohmann::json;

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw std::invalid_argument("setting '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    // Accept integral values written in floating notation (1e6).
    const double d = parse_double(key, v);
    if (d != static_cast<double>(static_cast<long long>(d))) {
      throw std::invalid_argument("setting '" + key + "': expected an integer, got '" + v + "'");
    }
    return static_cast<std::int64_t>(d);
  }
  return out;
}

struct Setting {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

template <typename T>
Setting number(std::string name, T ExperimentConfig::*field) {
  return {name,
          [name, field](ExperimentConfig& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>) {
              c.*field = parse_double(name, v);
            } else {
              c.*field = static_cast<T>(parse_int(name, v));
            }
          },
          [field](const ExperimentConfig& c) { return json(c.*field); }};
}

template <typename T>
Setting env_number(std::string name, T env::EnvConfig::*field) {
  return {name,
          [name, field](ExperimentConfig& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>) {
              c.env.*field = parse_double(name, v);
            } else {
              c.env.*field = static_cast<T>(parse_int(name, v));
            }
          },
          [field](const ExperimentConfig& c) { return json(c.env.*field); }};
}

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = [] {
    std::vector<Setting> s;
    s.push_back({"env",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.env = env::EnvConfig::defaults(env::parse_env_id(v));
                 },
                 [](const ExperimentConfig& c) { return json(env::to_string(c.env.id)); }});
    s.push_back({"method",
                 [](ExperimentConfig& c, const std::string& v) { c.method = agents::parse_method(v); },
                 [](const ExperimentConfig& c) { return json(agents::to_string(c.method)); }});
    s.push_back(number("seed", &ExperimentConfig::seed));
    s.push_back(number("total_env_steps", &ExperimentConfig::total_env_steps));
    s.push_back(number("learning_rate", &ExperimentConfig::learning_rate));
    s.push_back(number("adam_eps", &ExperimentConfig::adam_eps));
    s.push_back(number("gamma", &ExperimentConfig::gamma));
    s.push_back(number("entropy_coef", &ExperimentConfig::entropy_coef));
    s.push_back(number("value_coef", &ExperimentConfig::value_coef));
    s.push_back(number("grad_clip", &ExperimentConfig::grad_clip));
    s.push_back(number("pl_coef", &ExperimentConfig::pl_coef));
    s.push_back(number("aecomm_coef", &ExperimentConfig::aecomm_coef));
    s.push_back(number("instances", &ExperimentConfig::instances));
    s.push_back(number("nstep", &ExperimentConfig::nstep));
    s.push_back(number("segment_length", &ExperimentConfig::segment_length));
    s.push_back({"cacl_window",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.contrastive.window = static_cast<int>(parse_int("cacl_window", v));
                 },
                 [](const ExperimentConfig& c) { return json(c.contrastive.window); }});
    s.push_back({"cacl_temperature",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.contrastive.temperature = parse_double("cacl_temperature", v);
                 },
                 [](const ExperimentConfig& c) { return json(c.contrastive.temperature); }});
    s.push_back({"cacl_kappa",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.contrastive.kappa = parse_double("cacl_kappa", v);
                 },
                 [](const ExperimentConfig& c) { return json(c.contrastive.kappa); }});
    s.push_back({"contrastive_mode",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.contrastive.mode = comm::parse_contrastive_mode(v);
                 },
                 [](const ExperimentConfig& c) { return json(comm::to_string(c.contrastive.mode)); }});
    s.push_back(number("eval_interval", &ExperimentConfig::eval_interval));
    s.push_back(number("eval_episodes", &ExperimentConfig::eval_episodes));
    s.push_back(number("log_interval", &ExperimentConfig::log_interval));
    s.push_back(number("checkpoint_interval", &ExperimentConfig::checkpoint_interval));
    s.push_back(env_number("grid", &env::EnvConfig::grid));
    s.push_back(env_number("agents", &env::EnvConfig::agents));
    s.push_back(env_number("fov", &env::EnvConfig::fov));
    s.push_back(env_number("max_steps", &env::EnvConfig::max_steps));
    s.push_back(env_number("step_penalty", &env::EnvConfig::step_penalty));
    s.push_back(env_number("prey", &env::EnvConfig::prey));
    s.push_back(env_number("capture_reward", &env::EnvConfig::capture_reward));
    s.push_back(env_number("failed_attempt_penalty", &env::EnvConfig::failed_attempt_penalty));
    s.push_back(env_number("obstacle_density", &env::EnvConfig::obstacle_density));
    s.push_back(env_number("goal_reward", &env::EnvConfig::goal_reward));
    s.push_back(env_number("all_reached_bonus", &env::EnvConfig::all_reached_bonus));
    s.push_back(env_number("arrival_min", &env::EnvConfig::arrival_min));
    s.push_back(env_number("arrival_max", &env::EnvConfig::arrival_max));
    s.push_back(env_number("collision_penalty", &env::EnvConfig::collision_penalty));
    s.push_back(env_number("time_penalty", &env::EnvConfig::time_penalty));
    s.push_back({"fixed_goal",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "none" || v.empty()) {
                     c.env.fixed_goal.reset();
                     return;
                   }
                   const auto comma = v.find(',');
                   if (comma == std::string::npos) {
                     throw std::invalid_argument("setting 'fixed_goal': expected x,y or none");
                   }
                   c.env.fixed_goal =
                       env::Pos{static_cast<int>(parse_int("fixed_goal", v.substr(0, comma))),
                                static_cast<int>(parse_int("fixed_goal", v.substr(comma + 1)))};
                 },
                 [](const ExperimentConfig& c) {
                   if (!c.env.fixed_goal) return json("none");
                   return json(std::to_string(c.env.fixed_goal->x) + "," +
                               std::to_string(c.env.fixed_goal->y));
                 }});
    return s;
  }();
  return table;
}

}  // namespace

std::int64_t ExperimentConfig::iterations() const {
  const std::int64_t per = steps_per_iteration();
  return per > 0 ? (total_env_steps + per - 1) / per : 0;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  env.validate();
  contrastive.validate();
  for (auto [name, v] : {std::pair{"learning_rate", learning_rate}, {"adam_eps", adam_eps},
                         {"entropy_coef", entropy_coef}, {"value_coef", value_coef},
                         {"grad_clip", grad_clip}, {"pl_coef", pl_coef},
                         {"aecomm_coef", aecomm_coef}}) {
    if (!(v >= 0.0)) fail(std::string(name) + " must be >= 0");
  }
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (instances < 1) fail("instances must be >= 1");
  if (agents::uses_cacl(method) && instances < 2) {
    fail("the contrastive loss needs negatives from other trajectories: instances must be >= 2");
  }
  if (nstep < 1) fail("nstep must be >= 1");
  if (segment_length < 1) fail("segment_length must be >= 1");
  if (total_env_steps < 1) fail("total_env_steps must be >= 1");
  if (eval_interval < 0 || eval_episodes < 0 || checkpoint_interval < 0) {
    fail("intervals and episode counts must be >= 0");
  }
  if (log_interval < 1) fail("log_interval must be >= 1");
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const Setting& s : settings()) {
    if (s.name == key) {
      s.set(config, value);
      return;
    }
  }
  throw std::invalid_argument("unknown setting '" + key + "'");
}

std::vector<std::string> setting_names() {
  std::vector<std::string> names;
  for (const Setting& s : settings()) names.push_back(s.name);
  return names;
}

nlohmann::json to_json(const ExperimentConfig& config) {
  json j = json::object();
  for (const Setting& s : settings()) j[s.name] = s.get(config);
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  if (j.contains("env")) apply_setting(c, "env", text(j.at("env")));
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "env") apply_setting(c, it.key(), text(it.value()));
  }
  return c;
}

}  // namespace cacl::training
