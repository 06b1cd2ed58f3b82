#ifndef CACL_TOOLS_CLI_HPP_
#define CACL_TOOLS_CLI_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cacl/training/config.hpp"

namespace cacl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;  // bad config, missing checkpoint, mismatched inputs
inline constexpr int kExitAborted = 3;  // non-finite values during training

// Entry point shared by the executable and the tests; never calls exit().
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// `key = value` lines, one per setting, sorted by key.
std::string flat_config_text(const training::ExperimentConfig& config);
// Lines of `key = value`; '#' starts a comment. Throws std::invalid_argument
// on a line without '=' (with its line number).
std::vector<std::pair<std::string, std::string>> parse_flat_config(const std::string& text);

// SHA-1 of "blob <size>\0<content>", hex: what `git hash-object` prints.
std::string git_blob_sha1(const std::string& content);
std::string config_hash(const training::ExperimentConfig& config);

// DIR itself when absent or empty, otherwise the first free DIR.vK (K >= 2).
std::filesystem::path fresh_run_dir(const std::filesystem::path& dir);

// A checkpoint directory (holding team.json) or a run directory whose
// checkpoints/final is used. Throws std::invalid_argument when neither exists.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

}  // namespace cacl::cli

#endif  // CACL_TOOLS_CLI_HPP_
