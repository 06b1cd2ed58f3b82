#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

using namespace cacl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cacl");
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

const std::vector<std::string> kSmall = {"--steps", "480", "--quiet", "--set", "eval_episodes=2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("git-style config hash and flat config files") {
  CHECK(cli::git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(cli::git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(cli::git_blob_sha1("a = 1\n") == "1337a530cbc1bd7d20aee2d80f1f174a9182417d");

  const auto entries = cli::parse_flat_config("# comment\n  gamma = 0.9  \n\nmethod=cacl # trailing\n");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0] == std::pair<std::string, std::string>{"gamma", "0.9"});
  CHECK(entries[1] == std::pair<std::string, std::string>{"method", "cacl"});
  CHECK_THROWS_AS(cli::parse_flat_config("gamma 0.9\n"), std::invalid_argument);

  // The flat text round-trips through the parser to the same config.
  training::ExperimentConfig c;
  training::apply_setting(c, "env", "fg");
  c.method = agents::Method::kCaclDial;
  c.contrastive.kappa = 0.25;
  training::ExperimentConfig back;
  const auto parsed = cli::parse_flat_config(cli::flat_config_text(c));
  for (const auto& [k, v] : parsed) {
    if (k == "env") training::apply_setting(back, k, v);
  }
  for (const auto& [k, v] : parsed) {
    if (k != "env") training::apply_setting(back, k, v);
  }
  CHECK(cli::config_hash(back) == cli::config_hash(c));
  c.seed = 1;
  CHECK(cli::config_hash(back) != cli::config_hash(c));
}

TEST_CASE("train: manifest, defaults, overrides and versioned run directories") {
  TempDir tmp("cacl_cli_train");
  const Result r = run(with({"train", "--env", "tj", "--method", "cacl", "--seed", "4", "--out", tmp / "run"}, kSmall));
  REQUIRE(r.code == cli::kExitOk);
  const fs::path dir = tmp / "run";
  for (const char* f : {"manifest.json", "config.txt", "metrics.csv", "eval.csv", "done.json"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(fs::exists(dir / "checkpoints" / "final" / "team.json"));
  const json m = read_json(dir / "manifest.json");
  const json& cfg = m.at("config");
  CHECK(cfg.at("learning_rate") == 3e-4);
  CHECK(cfg.at("adam_eps") == 1e-3);
  CHECK(cfg.at("gamma") == 0.99);
  CHECK(cfg.at("cacl_kappa") == 0.5);
  CHECK(cfg.at("cacl_temperature") == 0.1);
  CHECK(cfg.at("cacl_window") == 5);
  CHECK(cfg.at("grad_clip") == 2500.0);
  CHECK(cfg.at("instances") == 12);
  CHECK(cfg.at("nstep") == 5);
  CHECK(cfg.at("seed") == 4);
  CHECK(m.at("config_hash") == cli::git_blob_sha1(slurp(dir / "config.txt")));

  // Same output directory again: a new versioned directory, the old one untouched.
  const std::string before = slurp(dir / "metrics.csv");
  const Result again = run(with({"train", "--env", "tj", "--method", "cacl", "--seed", "4", "--out", tmp / "run"}, kSmall));
  REQUIRE(again.code == cli::kExitOk);
  CHECK(fs::exists(tmp.path / "run.v2" / "manifest.json"));
  CHECK(slurp(dir / "metrics.csv") == before);
  CHECK(slurp(tmp.path / "run.v2" / "metrics.csv") == before);

  // A manifest alone reproduces the run.
  const Result replay = run({"train", "--config", (dir / "manifest.json").string(), "--out", tmp / "replay", "--quiet"});
  REQUIRE(replay.code == cli::kExitOk);
  CHECK(slurp(tmp.path / "replay" / "metrics.csv") == before);
  CHECK(read_json(tmp.path / "replay" / "manifest.json").at("config_hash") == m.at("config_hash"));

  // File values sit under flags; the desk preset sits under both.
  {
    std::ofstream f(tmp.path / "exp.cfg");
    f << "env = fg\nmethod = cacl\ncacl_window = 3\ngamma = 0.9\ntotal_env_steps = 240\n";
  }
  const Result layered = run({"train", "--config", tmp / "exp.cfg", "--preset", "desk", "--window", "1",
                              "--contrastive", "simclr", "--out", tmp / "layered", "--quiet", "--set",
                              "eval_episodes=0"});
  REQUIRE(layered.code == cli::kExitOk);
  const json lc = read_json(tmp.path / "layered" / "manifest.json").at("config");
  CHECK(lc.at("env") == "find_goal");
  CHECK(lc.at("grid") == 9);
  CHECK(lc.at("agents") == 2);
  CHECK(lc.at("total_env_steps") == 240);
  CHECK(lc.at("gamma") == 0.9);
  CHECK(lc.at("cacl_window") == 1);
  CHECK(lc.at("contrastive_mode") == "simclr");

  const Result desk = run({"train", "--env", "tj", "--method", "iac", "--preset", "desk", "--out", tmp / "never",
                           "--set", "gamma=2"});
  CHECK(desk.code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(tmp.path / "never"));
}

TEST_CASE("train: exit codes") {
  TempDir tmp("cacl_cli_codes");
  CHECK(run({"train", "--env", "pp", "--method", "bogus", "--out", tmp / "a"}).code == cli::kExitUsage);
  CHECK(run({"train", "--env", "xx", "--method", "iac", "--out", tmp / "a"}).code == cli::kExitUsage);
  CHECK(run({"train", "--env", "pp", "--out", tmp / "a"}).code == cli::kExitUsage);
  CHECK(run({"train", "--env", "pp", "--method", "iac", "--window", "2", "--out", tmp / "a"}).code ==
        cli::kExitUsage);
  CHECK(run({"train", "--env", "pp", "--method", "iac", "--config", tmp / "missing.cfg", "--out", tmp / "a"}).code ==
        cli::kExitUsage);
  CHECK(run({"train", "--env", "pp", "--method", "iac"}).code == cli::kExitUsage);
  CHECK(run({"bogus"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);

  const Result nan = run({"train", "--env", "pp", "--method", "iac", "--steps", "4800", "--out", tmp / "nan",
                          "--quiet", "--set", "learning_rate=1e300"});
  CHECK(nan.code == cli::kExitAborted);
  // The manifest precedes training, so even an aborted run is documented.
  CHECK(fs::exists(tmp.path / "nan" / "manifest.json"));
  CHECK(fs::exists(tmp.path / "nan" / "aborted.json"));
  CHECK_FALSE(fs::exists(tmp.path / "nan" / "done.json"));
}

TEST_CASE("eval, probe, dump and crossplay commands") {
  TempDir tmp("cacl_cli_eval");
  REQUIRE(run(with({"train", "--env", "pp", "--method", "cacl", "--seed", "1", "--out", tmp / "pp1"}, kSmall)).code == 0);
  REQUIRE(run(with({"train", "--env", "pp", "--method", "cacl", "--seed", "2", "--out", tmp / "pp2"}, kSmall)).code == 0);
  REQUIRE(run(with({"train", "--env", "pp", "--method", "iac", "--seed", "1", "--out", tmp / "pp3"}, kSmall)).code == 0);
  REQUIRE(run(with({"train", "--env", "fg", "--method", "cacl", "--seed", "1", "--out", tmp / "fg"}, kSmall)).code == 0);

  const Result e = run({"eval", "--checkpoint", tmp / "pp1", "--episodes", "6", "--out", tmp / "pp1/eval"});
  REQUIRE(e.code == cli::kExitOk);
  const json ej = read_json(tmp.path / "pp1" / "eval" / "eval.json");
  const json& cap = ej.at("capture_breakdown");
  CHECK(cap.at("no_prey").get<double>() + cap.at("one_prey").get<double>() + cap.at("two_prey").get<double>() ==
        doctest::Approx(100.0));
  CHECK(ej.at("episodes") == 6);
  CHECK(ej.at("symmetry").at("mean").get<double>() <= 1.0);
  const std::string episodes = slurp(tmp.path / "pp1" / "eval" / "episodes.csv");
  CHECK(std::count(episodes.begin(), episodes.end(), '\n') == 7);
  // A second evaluation appends versioned files.
  REQUIRE(run({"eval", "--checkpoint", tmp / "pp1", "--episodes", "6", "--out", tmp / "pp1/eval"}).code == 0);
  CHECK(fs::exists(tmp.path / "pp1" / "eval" / "eval.v2.json"));
  CHECK(read_json(tmp.path / "pp1" / "eval" / "eval.v2.json").at("mean_reward") == ej.at("mean_reward"));

  CHECK(run({"eval", "--checkpoint", tmp / "nowhere"}).code == cli::kExitUsage);
  CHECK(run({"eval", "--checkpoint", tmp / "pp1", "--env", "fg"}).code == cli::kExitUsage);
  CHECK(run({"eval", "--checkpoint", tmp / "pp1", "--method", "iac"}).code == cli::kExitUsage);
  CHECK(run({"eval", "--checkpoint", tmp / "pp1", "--method", "cacl", "--env", "pp", "--episodes", "1"}).code == 0);

  const Result p = run({"probe", "--checkpoint", tmp / "fg", "--task", "location", "--layers", "2", "--out", tmp / "fg/probe"});
  REQUIRE(p.code == cli::kExitOk);
  CHECK(p.out.rfind("accuracy ", 0) == 0);
  CHECK(std::count(p.out.begin(), p.out.end(), '\n') == 1);
  CHECK(p.out.find("train ") != std::string::npos);
  CHECK(p.out.find("test ") != std::string::npos);
  const json pj = read_json(tmp.path / "fg" / "probe" / "probe_location_l2.json");
  CHECK(pj.at("train_size").get<int>() + pj.at("test_size").get<int>() == 5 * pj.at("per_class").get<int>());
  CHECK(run({"probe", "--checkpoint", tmp / "pp1"}).code == cli::kExitUsage);
  CHECK(run({"probe", "--checkpoint", tmp / "fg", "--layers", "3"}).code == cli::kExitUsage);

  REQUIRE(run({"dump", "--checkpoint", tmp / "fg", "--out", tmp / "fg/dump", "--episodes", "2"}).code == 0);
  CHECK(fs::exists(tmp.path / "fg" / "dump" / "messages.csv"));
  CHECK(fs::exists(tmp.path / "fg" / "dump" / "trajectories.jsonl"));

  CHECK(run({"crossplay", "--runs", tmp.path.string(), "--methods", "cacl,iac", "--seeds", "1"}).code ==
        cli::kExitUsage);
  // iac has only one seed.
  CHECK(run({"crossplay", "--runs", tmp / "pp1", tmp / "pp2", tmp / "pp3", "--methods", "cacl,iac", "--seeds", "2"})
            .code == cli::kExitUsage);
  // Find-Goal and Predator-Prey teams cannot be mixed.
  CHECK(run({"crossplay", "--runs", tmp / "pp1", tmp / "fg", "--methods", "cacl", "--seeds", "2"}).code ==
        cli::kExitUsage);
  const Result x = run({"crossplay", "--runs", tmp / "pp1", tmp / "pp2", "--methods", "cacl", "--seeds", "2",
                        "--pairings", "2", "--episodes", "2", "--out", tmp / "x"});
  REQUIRE(x.code == cli::kExitOk);
  const std::string csv = slurp(tmp.path / "x" / "crossplay.csv");
  CHECK(csv.rfind("row,col,mean,sd,pairings,episodes\ncacl,cacl,", 0) == 0);
}
