#include "zirrel/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "zirrel/error.hpp"

namespace zirrel {

namespace {

template <typename T>
T field(const Json& j, const char* name) {
  if (!j.contains(name)) throw PreconditionError(std::string("MDP file is missing \"") + name + "\"");
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("MDP field \"") + name + "\" has the wrong type: " + e.what());
  }
}

}  // namespace

Json mdp_to_json(const TabularMdp& mdp) {
  Json j;
  j["num_states"] = mdp.num_states;
  j["num_actions"] = mdp.num_actions;
  j["gamma"] = mdp.gamma;
  j["r_min"] = mdp.r_min;
  j["r_max"] = mdp.r_max;
  j["horizon_cap"] = mdp.horizon_cap;
  j["initial_state"] = mdp.initial_state;
  j["episodic"] = mdp.episodic;
  Json transition = Json::array();
  Json reward = Json::array();
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    Json t_s = Json::array();
    Json r_s = Json::array();
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const auto row = mdp.row(s, a);
      t_s.push_back(std::vector<double>(row.begin(), row.end()));
      r_s.push_back(mdp.r(s, a));
    }
    transition.push_back(std::move(t_s));
    reward.push_back(std::move(r_s));
  }
  j["transition"] = std::move(transition);
  j["reward"] = std::move(reward);
  return j;
}

TabularMdp mdp_from_json(const Json& j) {
  if (!j.is_object()) throw PreconditionError("MDP document must be a JSON object");
  TabularMdp mdp;
  mdp.num_states = field<std::size_t>(j, "num_states");
  mdp.num_actions = field<std::size_t>(j, "num_actions");
  mdp.gamma = field<double>(j, "gamma");
  mdp.r_min = field<double>(j, "r_min");
  mdp.r_max = field<double>(j, "r_max");
  mdp.horizon_cap = field<std::size_t>(j, "horizon_cap");
  mdp.initial_state = field<std::size_t>(j, "initial_state");
  mdp.episodic = j.value("episodic", false);

  const auto transition = field<std::vector<std::vector<std::vector<double>>>>(j, "transition");
  const auto reward = field<std::vector<std::vector<double>>>(j, "reward");
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  if (transition.size() != S || reward.size() != S) {
    throw PreconditionError("transition/reward outer dimension does not match num_states");
  }
  mdp.transition.reserve(S * A * S);
  mdp.reward.reserve(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    if (transition[s].size() != A || reward[s].size() != A) {
      throw PreconditionError("state " + std::to_string(s) + " does not list num_actions entries");
    }
    for (std::size_t a = 0; a < A; ++a) {
      if (transition[s][a].size() != S) {
        throw PreconditionError("transition row (s=" + std::to_string(s) +
                                ", a=" + std::to_string(a) + ") does not have num_states entries");
      }
      mdp.transition.insert(mdp.transition.end(), transition[s][a].begin(), transition[s][a].end());
      mdp.reward.push_back(reward[s][a]);
    }
  }
  return mdp;
}

Json policy_to_json(const Policy& policy) {
  Json probs = Json::array();
  for (std::size_t s = 0; s < policy.num_states; ++s) {
    const auto row = policy.row(s);
    probs.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return Json{{"probs", std::move(probs)}, {"deterministic", policy.deterministic}};
}

Policy policy_from_json(const Json& j) {
  std::vector<std::vector<double>> rows;
  try {
    rows = j.at("probs").get<std::vector<std::vector<double>>>();
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("policy \"probs\" is missing or malformed: ") + e.what());
  }
  Policy pi;
  pi.num_states = rows.size();
  pi.num_actions = rows.empty() ? 0 : rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != pi.num_actions) throw PreconditionError("policy rows have unequal lengths");
    pi.probs.insert(pi.probs.end(), row.begin(), row.end());
  }
  pi.deterministic = j.value("deterministic", false);
  return pi;
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return Json::parse(buffer.str());
  } catch (const Json::parse_error& e) {
    throw PreconditionError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

TabularMdp load_mdp_file(const std::filesystem::path& path) {
  return mdp_from_json(load_json_file(path));
}

void save_mdp_file(const std::filesystem::path& path, const TabularMdp& mdp) {
  write_file_atomic(path, mdp_to_json(mdp).dump(2) + "\n");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace zirrel
