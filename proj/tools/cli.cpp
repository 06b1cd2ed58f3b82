#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cacl/evaluation/evaluation.hpp"
#include "cacl/training/checkpoint.hpp"
#include "cacl/training/trainer.hpp"

namespace cacl::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using training::ExperimentConfig;

namespace {

// Precondition failures of a command: reported, exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string json_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

// Smallest K such that none of the names exists in dir with suffix ".vK"
// (K = 1 means no suffix), so outputs of one invocation share a version.
std::vector<fs::path> versioned_files(const fs::path& dir, const std::vector<std::string>& names) {
  for (int k = 1;; ++k) {
    std::vector<fs::path> paths;
    bool free = true;
    for (const std::string& name : names) {
      fs::path p(name);
      const std::string suffix = k == 1 ? "" : ".v" + std::to_string(k);
      p = dir / (p.stem().string() + suffix + p.extension().string());
      free = free && !fs::exists(p);
      paths.push_back(p);
    }
    if (free) return paths;
  }
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string env, method, out, config_file, preset, contrastive;
  std::string seed, steps, kappa, window;
  std::vector<std::string> sets;
  bool quiet = false;
};

void apply_preset(ExperimentConfig& c, const std::string& preset) {
  if (preset != "desk") throw std::invalid_argument("unknown preset '" + preset + "' (desk)");
  switch (c.env.id) {
    case env::EnvId::kFindGoal:
      c.env.grid = 9;
      c.env.agents = 2;
      c.total_env_steps = 1'000'000;
      break;
    case env::EnvId::kTrafficJunction:
    case env::EnvId::kPredatorPrey:
      c.total_env_steps = 2'000'000;
      break;
  }
}

std::vector<std::pair<std::string, std::string>> config_file_entries(const fs::path& path) {
  const std::string text = slurp(path);
  if (path.extension() != ".json") return parse_flat_config(text);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  // A run manifest carries its resolved config under "config".
  if (j.contains("config")) j = j.at("config");
  std::vector<std::pair<std::string, std::string>> entries;
  for (auto it = j.begin(); it != j.end(); ++it) entries.emplace_back(it.key(), json_text(it.value()));
  return entries;
}

// Environment defaults, then the preset, then the file, then flags.
ExperimentConfig resolve_train_config(const TrainArgs& a) {
  std::vector<std::pair<std::string, std::string>> file;
  if (!a.config_file.empty()) file = config_file_entries(a.config_file);
  std::string env_name = a.env;
  bool have_method = !a.method.empty();
  for (const auto& [k, v] : file) {
    if (k == "env" && env_name.empty()) env_name = v;
    if (k == "method") have_method = true;
  }
  if (env_name.empty()) throw std::invalid_argument("no environment: pass --env or set env in the config file");
  if (!have_method) throw std::invalid_argument("no method: pass --method or set method in the config file");

  ExperimentConfig c;
  training::apply_setting(c, "env", env_name);
  if (!a.preset.empty()) apply_preset(c, a.preset);
  for (const auto& [k, v] : file) {
    if (k != "env") training::apply_setting(c, k, v);
  }
  const std::pair<const char*, const std::string*> flags[] = {
      {"method", &a.method},       {"seed", &a.seed},          {"total_env_steps", &a.steps},
      {"cacl_kappa", &a.kappa},    {"cacl_window", &a.window}, {"contrastive_mode", &a.contrastive}};
  for (const auto& [key, value] : flags) {
    if (!value->empty()) training::apply_setting(c, key, *value);
  }
  for (const std::string& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    training::apply_setting(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  c.validate();
  return c;
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out,
              std::ostream& err) {
  const ExperimentConfig config = resolve_train_config(a);
  const fs::path dir = fresh_run_dir(a.out);
  fs::create_directories(dir);
  const std::string text = flat_config_text(config);
  const json manifest = {{"format", "cacl-run-v1"},
                         {"config", training::to_json(config)},
                         {"config_hash", git_blob_sha1(text)},
                         {"out_dir", fs::absolute(dir).lexically_normal().string()},
                         {"created", utc_now()},
                         {"command", argv}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(dir / "config.txt", text);
  out << "run directory: " << dir.string() << "\n" << std::flush;

  training::TrainOptions options;
  const std::int64_t total = config.iterations();
  if (!a.quiet) {
    options.on_iteration = [&](const training::IterationStats& s) {
      if (s.iteration % config.log_interval == 0 || s.iteration == total) {
        err << "iteration " << s.iteration << "/" << total << "  env steps " << s.env_steps << "\n";
      }
    };
  }
  try {
    const training::TrainSummary s = training::train(config, dir, options);
    const json done = {{"finished", utc_now()},
                       {"iterations", s.iterations},
                       {"env_steps", s.env_steps},
                       {"final_checkpoint", s.final_checkpoint.lexically_relative(dir).string()},
                       {"final_eval",
                        {{"mean_reward", s.final_eval.mean_reward},
                         {"mean_length", s.final_eval.mean_length},
                         {"success_rate", s.final_eval.success_rate},
                         {"mean_captures", s.final_eval.mean_captures},
                         {"episodes", s.final_eval.episodes}}}};
    write_text(dir / "done.json", done.dump(2) + "\n");
    out << "finished " << s.iterations << " iterations, " << s.env_steps << " env steps; final eval"
        << " reward " << s.final_eval.mean_reward << " length " << s.final_eval.mean_length
        << " success " << s.final_eval.success_rate << "\n";
  } catch (const training::TrainingAborted& e) {
    write_text(dir / "aborted.json", json{{"time", utc_now()}, {"reason", e.what()}}.dump(2) + "\n");
    err << "error: " << e.what() << "\n";
    return kExitAborted;
  }
  return kExitOk;
}

// ---- checkpoint-based commands -------------------------------------------

training::Checkpoint load_checked(const std::string& path, const std::string& env_name,
                                  const std::string& method_name) {
  const fs::path dir = resolve_checkpoint(path);
  training::Checkpoint c;
  try {
    c = training::load_checkpoint(dir);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  if (!env_name.empty() && env::parse_env_id(env_name) != c.config.env.id) {
    throw UsageError("checkpoint " + dir.string() + " was trained on " + env::to_string(c.config.env.id) +
                     ", not " + env_name);
  }
  if (!method_name.empty() && agents::parse_method(method_name) != c.config.method) {
    throw UsageError("checkpoint " + dir.string() + " was trained with " + agents::to_string(c.config.method) +
                     ", not " + method_name);
  }
  return c;
}

struct EvalArgs {
  std::string checkpoint, env, method, out;
  int episodes = 30;
  int symmetry_episodes = 10;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const training::Checkpoint ck = load_checked(a.checkpoint, a.env, a.method);
  const env::EnvConfig& ec = ck.config.env;
  const auto view = training::team_view(ck.team);
  const auto results = training::evaluate_team(view, ec, a.episodes, a.seed);
  const training::EvalSummary s = training::summarize(results);

  json j = {{"checkpoint", resolve_checkpoint(a.checkpoint).string()},
            {"env", env::to_string(ec.id)},
            {"method", agents::to_string(ck.config.method)},
            {"train_seed", ck.config.seed},
            {"env_steps", ck.env_steps},
            {"config_hash", config_hash(ck.config)},
            {"eval_seed", a.seed},
            {"episodes", s.episodes},
            {"mean_reward", s.mean_reward},
            {"mean_length", s.mean_length},
            {"success_rate", s.success_rate},
            {"mean_captures", s.mean_captures}};
  out << "episodes " << s.episodes << "\nmean_reward " << exact(s.mean_reward) << "\nmean_length "
      << exact(s.mean_length) << "\nsuccess_rate " << exact(s.success_rate) << "\n";

  if (ec.id == env::EnvId::kPredatorPrey) {
    const eval::CaptureBreakdown b = eval::capture_breakdown(results, ec);
    json cap = json::object();
    for (std::size_t k = 0; k < b.percent.size(); ++k) {
      const std::string name = k == 0 ? "no_prey" : k == 1 ? "one_prey" : k == 2 ? "two_prey"
                                                                                 : std::to_string(k) + "_prey";
      cap[name] = b.percent[k];
      out << "captured " << k << " prey: " << b.percent[k] << "%\n";
    }
    j["capture_breakdown"] = cap;
  }
  if (a.symmetry_episodes > 0) {
    try {
      const eval::SymmetryResult sym = eval::protocol_symmetry(view, ec, a.symmetry_episodes, a.seed);
      j["symmetry"] = {{"mean", sym.mean}, {"sd", sym.sd}, {"episodes", a.symmetry_episodes}};
      out << "protocol_symmetry " << sym.mean << " +- " << sym.sd << "\n";
    } catch (const std::invalid_argument& e) {
      j["symmetry"] = {{"missing", e.what()}};
    }
  }
  // Anchors of the goal-similarity test only exist on grids reaching (13, 13).
  if (ec.id == env::EnvId::kFindGoal && ec.grid > 13) {
    const auto sims = eval::goal_distance_similarity(view, ec, a.episodes, a.seed, {1, 1},
                                                     {{5, 5}, {9, 9}, {13, 13}});
    json g = json::array();
    for (const auto& sim : sims) {
      json row = {{"anchor", {sim.anchor.x, sim.anchor.y}},
                  {"reference_messages", sim.reference_messages},
                  {"anchor_messages", sim.anchor_messages}};
      row["similarity"] = sim.similarity ? json(*sim.similarity) : json(nullptr);
      g.push_back(row);
    }
    j["goal_similarity"] = g;
  }

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const auto paths = versioned_files(a.out, {"eval.json", "episodes.csv"});
    write_text(paths[0], j.dump(2) + "\n");
    std::ostringstream csv;
    csv << "episode,reward,length,success,captures,collisions\n";
    for (std::size_t k = 0; k < results.size(); ++k) {
      const auto& r = results[k];
      csv << k << ',' << exact(r.reward) << ',' << r.length << ',' << (r.success ? 1 : 0) << ','
          << r.captures << ',' << r.collisions << '\n';
    }
    write_text(paths[1], csv.str());
    out << "wrote " << paths[0].string() << "\n";
  }
  return kExitOk;
}

struct ProbeArgs {
  std::string checkpoint, task = "location", out;
  int layers = 2;
  int episodes = 30;
  std::uint64_t seed = 0;
  bool shuffled = false;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  const training::Checkpoint ck = load_checked(a.checkpoint, "", "");
  if (ck.config.env.id != env::EnvId::kFindGoal) {
    throw UsageError("probing needs a find_goal checkpoint, got " + env::to_string(ck.config.env.id));
  }
  const eval::ProbeTask task = eval::parse_probe_task(a.task);
  eval::RecordOptions ro;
  ro.episodes = a.episodes;
  ro.seed = a.seed;
  ro.mode = training::ActionMode::kSample;
  const auto records = eval::record_messages(training::team_view(ck.team), ck.config.env, ro);
  eval::ProbeDataset data = eval::build_probe_dataset(records, task, ck.config.env.grid, a.seed);
  if (a.shuffled) data = eval::shuffle_labels(std::move(data), a.seed);
  eval::ProbeConfig pc;
  pc.layers = a.layers;
  pc.seed = a.seed;
  const eval::ProbeResult r = eval::train_probe(data, pc);
  out << "accuracy " << exact(r.test_accuracy) << "  (task " << a.task << ", layers " << a.layers
      << ", train " << r.train_size << ", test " << r.test_size << ", per class " << data.per_class
      << (a.shuffled ? ", shuffled labels" : "") << ")\n";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const auto paths = versioned_files(a.out, {"probe_" + a.task + "_l" + std::to_string(a.layers) + ".json"});
    const json j = {{"checkpoint", resolve_checkpoint(a.checkpoint).string()},
                    {"task", a.task},
                    {"layers", a.layers},
                    {"episodes", a.episodes},
                    {"seed", a.seed},
                    {"shuffled_labels", a.shuffled},
                    {"classes", data.classes},
                    {"per_class", data.per_class},
                    {"train_size", r.train_size},
                    {"test_size", r.test_size},
                    {"train_accuracy", r.train_accuracy},
                    {"test_accuracy", r.test_accuracy}};
    write_text(paths[0], j.dump(2) + "\n");
  }
  return kExitOk;
}

struct DumpArgs {
  std::string checkpoint, out;
  int episodes = 10;
  std::uint64_t seed = 0;
  bool messages_only = false, trajectories_only = false;
};

int cmd_dump(const DumpArgs& a, std::ostream& out) {
  const training::Checkpoint ck = load_checked(a.checkpoint, "", "");
  const auto view = training::team_view(ck.team);
  fs::create_directories(a.out);
  const auto paths = versioned_files(a.out, {"messages.csv", "trajectories.jsonl"});
  if (!a.trajectories_only) {
    eval::RecordOptions ro;
    ro.episodes = a.episodes;
    ro.seed = a.seed;
    eval::dump_messages(eval::record_messages(view, ck.config.env, ro), ck.config.env, paths[0]);
    out << "wrote " << paths[0].string() << "\n";
  }
  if (!a.messages_only) {
    eval::dump_trajectories(view, ck.config.env, a.episodes, a.seed, paths[1]);
    out << "wrote " << paths[1].string() << "\n";
  }
  return kExitOk;
}

struct CrossplayArgs {
  std::vector<std::string> runs;
  std::string methods, out;
  int seeds = 2;
  int pairings = 10;
  int episodes = 10;
  std::uint64_t seed = 0;
};

// Every checkpoint below the given paths: a path holding team.json is taken
// as is, otherwise each run's checkpoints/final.
std::vector<fs::path> find_checkpoints(const std::vector<std::string>& roots) {
  std::vector<fs::path> found;
  for (const std::string& r : roots) {
    const fs::path root(r);
    if (!fs::exists(root)) throw UsageError("no such path: " + r);
    if (fs::exists(root / "team.json")) {
      found.push_back(root);
      continue;
    }
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_directory() && e.path().filename() == "final" &&
          e.path().parent_path().filename() == "checkpoints" && fs::exists(e.path() / "team.json")) {
        found.push_back(e.path());
      }
    }
  }
  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end()), found.end());
  return found;
}

int cmd_crossplay(const CrossplayArgs& a, std::ostream& out) {
  if (a.seeds < 2) {
    throw UsageError("--seeds " + std::to_string(a.seeds) +
                     ": intra-method cells need at least 2 independently trained seeds");
  }
  std::vector<agents::Method> methods;
  std::stringstream ss(a.methods);
  for (std::string m; std::getline(ss, m, ',');) methods.push_back(agents::parse_method(trim(m)));
  if (methods.empty()) throw UsageError("--methods lists no method");

  std::map<agents::Method, std::map<std::uint64_t, training::Checkpoint>> by_method;
  std::optional<json> env_ref;
  for (const fs::path& p : find_checkpoints(a.runs)) {
    training::Checkpoint c = training::load_checkpoint(p);
    if (std::find(methods.begin(), methods.end(), c.config.method) == methods.end()) continue;
    // Teams are compatible when their environments are; training knobs may differ.
    ExperimentConfig env_only;
    env_only.env = c.config.env;
    const json env_json = training::to_json(env_only);
    if (!env_ref) env_ref = env_json;
    if (env_json != *env_ref) {
      throw UsageError("checkpoint " + p.string() + " uses a different environment configuration than the others");
    }
    by_method[c.config.method].emplace(c.config.seed, std::move(c));
  }
  std::vector<eval::TeamEntry> teams;
  env::EnvConfig ec;
  for (agents::Method m : methods) {
    auto& seeds = by_method[m];
    if (static_cast<int>(seeds.size()) < a.seeds) {
      throw UsageError("method " + agents::to_string(m) + ": " + std::to_string(seeds.size()) +
                       " trained seed(s) found, " + std::to_string(a.seeds) + " requested");
    }
    int taken = 0;
    for (auto& [seed, ck] : seeds) {
      if (taken++ == a.seeds) break;
      ec = ck.config.env;
      teams.push_back({m, seed, std::move(ck.team)});
    }
  }
  eval::CrossplayConfig cc;
  cc.pairings = a.pairings;
  cc.episodes = a.episodes;
  cc.seed = a.seed;
  const auto cells = eval::crossplay_eval(teams, methods, ec, cc);
  std::ostringstream csv;
  csv << "row,col,mean,sd,pairings,episodes\n";
  const char* what = ec.id == env::EnvId::kFindGoal ? "episode length" : "episode reward";
  out << "cross-play (" << what << ", " << a.pairings << " pairings x " << a.episodes << " episodes)\n";
  for (const auto& cell : cells) {
    csv << agents::to_string(cell.row) << ',' << agents::to_string(cell.col) << ',' << exact(cell.score.mean)
        << ',' << exact(cell.score.sd) << ',' << cell.score.per_pairing.size() << ',' << cell.score.episodes
        << '\n';
    out << agents::to_string(cell.row) << " x " << agents::to_string(cell.col) << ": " << cell.score.mean
        << " +- " << cell.score.sd << "\n";
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const auto paths = versioned_files(a.out, {"crossplay.csv"});
    write_text(paths[0], csv.str());
    out << "wrote " << paths[0].string() << "\n";
  }
  return kExitOk;
}

}  // namespace

std::string flat_config_text(const ExperimentConfig& config) {
  std::string text;
  const json j = training::to_json(config);  // keys come out sorted
  for (auto it = j.begin(); it != j.end(); ++it) text += it.key() + " = " + json_text(it.value()) + "\n";
  return text;
}

std::vector<std::pair<std::string, std::string>> parse_flat_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  int number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return entries;
}

std::string git_blob_sha1(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string config_hash(const ExperimentConfig& config) { return git_blob_sha1(flat_config_text(config)); }

fs::path fresh_run_dir(const fs::path& dir) {
  auto usable = [](const fs::path& p) { return !fs::exists(p) || (fs::is_directory(p) && fs::is_empty(p)); };
  if (usable(dir)) return dir;
  for (int k = 2;; ++k) {
    fs::path p = dir;
    p += ".v" + std::to_string(k);
    if (usable(p)) return p;
  }
}

fs::path resolve_checkpoint(const fs::path& path) {
  if (fs::exists(path / "team.json")) return path;
  if (fs::exists(path / "checkpoints" / "final" / "team.json")) return path / "checkpoints" / "final";
  throw std::invalid_argument("no checkpoint at " + path.string() +
                              " (expected team.json or checkpoints/final/team.json)");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decentralized multi-agent communication learning: train, evaluate, probe, cross-play, dump."};
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Train a team and write a versioned run directory");
  train->add_option("--env", ta.env, "pp | fg | tj");
  train->add_option("--method", ta.method, "iac | dial | pl | aecomm | cacl | cacl_dial | aecomm_dial");
  train->add_option("--seed", ta.seed);
  train->add_option("--steps", ta.steps, "Total environment steps");
  train->add_option("--out", ta.out, "Run directory (DIR.vK is used if DIR is taken)")->required();
  train->add_option("--config", ta.config_file, "Flat key = value file, or a run's manifest.json");
  train->add_option("--kappa", ta.kappa, "Contrastive loss coefficient");
  train->add_option("--window", ta.window, "Contrastive positive window (odd)");
  train->add_option("--contrastive", ta.contrastive, "supcon | simclr");
  train->add_option("--preset", ta.preset, "desk: reduced step budgets");
  train->add_option("--set", ta.sets, "Any setting as key=value (repeatable)");
  train->add_flag("--quiet", ta.quiet, "No progress lines");

  EvalArgs ea;
  CLI::App* evalc = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  evalc->add_option("--checkpoint", ea.checkpoint, "Checkpoint or run directory")->required();
  evalc->add_option("--env", ea.env, "Fail unless the checkpoint is for this environment");
  evalc->add_option("--method", ea.method, "Fail unless the checkpoint uses this method");
  evalc->add_option("--episodes", ea.episodes)->check(CLI::PositiveNumber);
  evalc->add_option("--symmetry-episodes", ea.symmetry_episodes)->check(CLI::NonNegativeNumber);
  evalc->add_option("--seed", ea.seed);
  evalc->add_option("--out", ea.out, "Directory for eval.json and episodes.csv");

  ProbeArgs pa;
  CLI::App* probe = app.add_subcommand("probe", "Train a probing classifier on a Find-Goal team's messages");
  probe->add_option("--checkpoint", pa.checkpoint)->required();
  probe->add_option("--task", pa.task)->check(CLI::IsMember({"visibility", "location"}));
  probe->add_option("--layers", pa.layers)->check(CLI::IsMember({1, 2}));
  probe->add_option("--episodes", pa.episodes)->check(CLI::PositiveNumber);
  probe->add_option("--seed", pa.seed);
  probe->add_flag("--shuffle-labels", pa.shuffled, "Control run on permuted labels");
  probe->add_option("--out", pa.out);

  CrossplayArgs ca;
  CLI::App* cross = app.add_subcommand("crossplay", "Zero-shot cross-play between independently trained teams");
  cross->add_option("--runs", ca.runs, "Run directories, checkpoints, or folders containing runs")->required();
  cross->add_option("--methods", ca.methods, "Comma-separated methods, e.g. cacl,iac")->required();
  cross->add_option("--seeds", ca.seeds, "Seeds per method (>= 2)");
  cross->add_option("--pairings", ca.pairings)->check(CLI::PositiveNumber);
  cross->add_option("--episodes", ca.episodes)->check(CLI::PositiveNumber);
  cross->add_option("--seed", ca.seed);
  cross->add_option("--out", ca.out);

  DumpArgs da;
  CLI::App* dump = app.add_subcommand("dump", "Export messages (CSV) and trajectories (JSON lines)");
  dump->add_option("--checkpoint", da.checkpoint)->required();
  dump->add_option("--out", da.out)->required();
  dump->add_option("--episodes", da.episodes)->check(CLI::PositiveNumber);
  dump->add_option("--seed", da.seed);
  auto* only_m = dump->add_flag("--messages-only", da.messages_only);
  dump->add_flag("--trajectories-only", da.trajectories_only)->excludes(only_m);

  if (args.empty()) return kExitUsage;
  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(ta, args, out, err);
    if (*evalc) return cmd_eval(ea, out);
    if (*probe) return cmd_probe(pa, out);
    if (*cross) return cmd_crossplay(ca, out);
    if (*dump) return cmd_dump(da, out);
  } catch (const training::TrainingAborted& e) {
    err << "error: " << e.what() << "\n";
    return kExitAborted;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run_cli(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace cacl::cli
