#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zirrel/io.hpp"
#include "zirrel/mdp.hpp"
#include "zirrel/rcrl.hpp"

namespace zirrel {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitIo = 4,
};

const std::vector<std::string>& command_names();

struct RunOptions {
  std::filesystem::path config_path;
  std::filesystem::path out_dir = "out";
  /// Replaces the config's "seeds" list when set.
  std::optional<std::vector<std::uint64_t>> seeds;
};

struct RunOutcome {
  int exit_code = kExitOk;
  /// The one-line stdout summary.
  Json summary;
};

/// Runs one command end to end: parses the config, writes data files and
/// manifest.json into out_dir, and never throws.
RunOutcome run_command(const std::string& command, const RunOptions& options);

/// Parses "1,2,3". Throws PreconditionError on malformed input.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// FNV-1a 64 over the canonical (sorted-key, compact) serialisation.
std::string config_hash(const Json& config);

/// Builds the MDP described by an "mdp" config block. Relative file paths
/// resolve against base_dir; seed_override replaces a generator seed.
TabularMdp mdp_from_config(const Json& spec, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override = std::nullopt);

/// Builds the policy described by a "policy" config block (default uniform).
Policy policy_from_config(const Json& spec, const TabularMdp& mdp,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

/// Reads an "rcrl" config block; missing keys keep their defaults.
RcrlConfig rcrl_config_from_json(const Json& spec);

}  // namespace zirrel
