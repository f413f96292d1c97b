#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "zirrel/mdp.hpp"

namespace zirrel {

using Json = nlohmann::json;

/// MDP file format: {"num_states", "num_actions", "gamma", "r_min", "r_max",
/// "horizon_cap", "initial_state", "transition": [s][a][s'], "reward": [s][a]}
/// plus an optional "episodic" flag. Doubles round-trip bit-exactly.
Json mdp_to_json(const TabularMdp& mdp);
/// Throws PreconditionError naming the missing or mistyped field.
TabularMdp mdp_from_json(const Json& j);

/// {"probs": [[...], ...], "deterministic": bool}
Json policy_to_json(const Policy& policy);
Policy policy_from_json(const Json& j);

TabularMdp load_mdp_file(const std::filesystem::path& path);
void save_mdp_file(const std::filesystem::path& path, const TabularMdp& mdp);

/// Parses a JSON document from disk; IoError if unreadable, PreconditionError
/// if malformed.
Json load_json_file(const std::filesystem::path& path);

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

/// Writes `contents` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace zirrel
