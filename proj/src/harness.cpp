#include "zirrel/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "zirrel/abstraction.hpp"
#include "zirrel/error.hpp"
#include "zirrel/metric_learning.hpp"
#include "zirrel/return_dist.hpp"
#include "zirrel/z_learning.hpp"

namespace zirrel {

namespace fs = std::filesystem;

namespace {

// ---- config access ---------------------------------------------------------

[[noreturn]] void config_error(const std::string& what) { throw PreconditionError("config: " + what); }

bool has(const Json& j, const std::string& key) {
  return j.is_object() && j.contains(key) && !j.at(key).is_null();
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!has(j, key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    config_error("\"" + key + "\" has the wrong type (" + e.what() + ")");
  }
}

std::size_t get_count_or(const Json& j, const std::string& key, std::size_t fallback) {
  if (!has(j, key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    config_error("\"" + key + "\" must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::size_t get_count(const Json& j, const std::string& key) {
  if (!has(j, key)) config_error("missing \"" + key + "\"");
  return get_count_or(j, key, 0);
}

double get_number_or(const Json& j, const std::string& key, double fallback) {
  if (!has(j, key)) return fallback;
  if (!j.at(key).is_number()) config_error("\"" + key + "\" must be a number");
  return j.at(key).get<double>();
}

std::vector<std::size_t> get_count_list(const Json& j, const std::string& key,
                                        std::vector<std::size_t> fallback) {
  if (!has(j, key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_array()) config_error("\"" + key + "\" must be an array");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0)) {
      config_error("\"" + key + "\" entries must be non-negative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

void require_object(const Json& j, const std::string& what) {
  if (!j.is_object()) config_error(what + " must be a JSON object");
}

void allow_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) config_error("unknown key \"" + key + "\" in " + where);
  }
}

// ---- output helpers --------------------------------------------------------

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

class Csv {
 public:
  explicit Csv(std::initializer_list<const char*> header) { row_strings(header); }

  template <typename... Ts>
  void row(const Ts&... fields) {
    std::vector<std::string> cells{fmt(fields)...};
    row_strings(cells);
  }

  std::string str() const { return out_.str(); }

 private:
  template <typename Seq>
  void row_strings(const Seq& cells) {
    bool first = true;
    for (const auto& c : cells) {
      if (!first) out_ << ',';
      out_ << c;
      first = false;
    }
    out_ << '\n';
  }

  std::ostringstream out_;
};

std::string seed_suffix(std::uint64_t seed, bool multi) {
  return multi ? "_seed" + std::to_string(seed) : "";
}

struct Context {
  Json config;
  fs::path base_dir;
  fs::path out_dir;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> outputs;
  Json seed_status = Json::array();

  void write(const std::string& name, const std::string& contents) {
    write_file_atomic(out_dir / name, contents);
    outputs.push_back(name);
  }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
  void seed_ok(std::uint64_t seed) { seed_status.push_back({{"seed", seed}, {"status", "ok"}}); }
};

struct CommandResult {
  int exit_code = kExitOk;
  Json details = Json::object();
};

// ---- shared builders -------------------------------------------------------

BinningConfig binning_from_config(const Json& config, const TabularMdp& mdp, std::size_t k) {
  if (k == 0) config_error("\"k\" must be positive");
  BinningConfig cfg = default_binning(mdp, k);
  cfg.return_min = get_number_or(config, "return_min", cfg.return_min);
  cfg.return_max = get_number_or(config, "return_max", cfg.return_max);
  if (!(cfg.return_min < cfg.return_max)) config_error("return_min must be below return_max");
  return cfg;
}

std::string abstraction_csv(const Abstraction& phi) {
  Csv csv{"x_index", "class"};
  for (std::size_t x = 0; x < phi.size(); ++x) csv.row(x, phi(x));
  return csv.str();
}

std::string partition_csv(const StatePartition& part) {
  Csv csv{"state_index", "block"};
  for (std::size_t s = 0; s < part.assignment.size(); ++s) csv.row(s, part.assignment[s]);
  return csv.str();
}

std::string metric_csv(const AbstractionMetric& d) {
  Csv csv{"x1", "x2", "value", "defined"};
  for (std::size_t i = 0; i < d.size; ++i) {
    for (std::size_t j = 0; j < d.size; ++j) csv.row(i, j, d(i, j), d.is_defined(i, j));
  }
  return csv.str();
}

Json violations_json(const std::vector<MetricViolation>& v) {
  Json out = Json::array();
  for (const auto& e : v) out.push_back({{"i", e.i}, {"j", e.j}, {"k", e.k}, {"value", e.value}});
  return out;
}

Json semimetric_json(const SemimetricReport& r) {
  return {{"identity", violations_json(r.identity)},
          {"symmetry", violations_json(r.symmetry)},
          {"triangle", violations_json(r.triangle)},
          {"boundedness", violations_json(r.boundedness)},
          {"undefined_entries", r.undefined_entries},
          {"ok", r.ok()}};
}

Json report_json(const RepresentationReport& r) {
  Json j = {{"probe_count", r.probe_count}};
  if (r.empty()) return j;
  j["pos_mean"] = r.pos_mean;
  j["pos_std"] = r.pos_std;
  j["neg_mean"] = r.neg_mean;
  j["neg_std"] = r.neg_std;
  j["separation"] = r.separation();
  return j;
}

// ---- commands --------------------------------------------------------------

CommandResult cmd_eval_returns(Context& ctx) {
  const Json& c = ctx.config;
  allow_keys(c, {"mdp", "policy", "k", "return_min", "return_max", "method", "atom_count",
                 "max_iterations", "tolerance", "horizon", "prune_eps", "node_budget",
                 "q_tolerance", "seeds"},
             "eval-returns config");
  if (!has(c, "mdp")) config_error("missing \"mdp\"");
  const TabularMdp mdp = mdp_from_config(c.at("mdp"), ctx.base_dir);
  require_valid(mdp);
  const Policy policy = policy_from_config(c.value("policy", Json::object()), mdp);
  require_valid(mdp, policy);
  const std::size_t k = get_count_or(c, "k", 4);
  const BinningConfig cfg = binning_from_config(c, mdp, k);
  const std::string method = get_or<std::string>(c, "method", "auto");
  if (method != "auto" && method != "exact" && method != "categorical") {
    config_error("\"method\" must be auto, exact or categorical");
  }

  std::vector<BinnedReturnDistribution> table;
  std::string used = method;
  Json extra = Json::object();
  if (method != "categorical") {
    EnumerationOptions eo;
    eo.prune_eps = get_number_or(c, "prune_eps", eo.prune_eps);
    eo.node_budget = get_count_or(c, "node_budget", eo.node_budget);
    try {
      table = bin_table(exact_return_table(mdp, policy, eo), cfg);
      used = "exact";
    } catch (const BudgetExceeded&) {
      if (method == "exact") throw;
      used = "categorical";
    }
  }
  if (used == "categorical") {
    CategoricalOptions co;
    co.atom_count = get_count_or(c, "atom_count", co.atom_count);
    co.max_iterations = get_count_or(c, "max_iterations", co.max_iterations);
    co.tolerance = get_number_or(c, "tolerance", co.tolerance);
    const std::string horizon = get_or<std::string>(c, "horizon", "fixed_point");
    if (horizon == "fixed_point") {
      co.horizon = HorizonMode::kFixedPoint;
    } else if (horizon == "truncated") {
      co.horizon = HorizonMode::kTruncated;
    } else {
      config_error("\"horizon\" must be fixed_point or truncated");
    }
    table = categorical_bellman(mdp, policy, cfg, co);
    extra["atom_count"] = co.atom_count;
    extra["horizon"] = horizon;
  }
  PolicyEvalOptions po;
  po.tolerance = get_number_or(c, "q_tolerance", po.tolerance);
  const auto q = policy_eval_q(mdp, policy, po);

  Csv returns{"x_index", "state", "action", "bin_index", "probability"};
  Csv qcsv{"x_index", "state", "action", "q"};
  for (std::size_t x = 0; x < mdp.num_pairs(); ++x) {
    const StateAction sa = mdp.pair(x);
    for (std::size_t b = 0; b < k; ++b) returns.row(x, sa.state, sa.action, b + 1, table[x].probs[b]);
    qcsv.row(x, sa.state, sa.action, q[x]);
  }
  ctx.write("returns.csv", returns.str());
  ctx.write("q_values.csv", qcsv.str());
  CommandResult r;
  r.details = {{"method", used}, {"k", k}, {"rows", mdp.num_pairs() * k},
               {"return_min", cfg.return_min}, {"return_max", cfg.return_max}};
  r.details.update(extra);
  return r;
}

CommandResult cmd_zlearn(Context& ctx) {
  const Json& c = ctx.config;
  allow_keys(c, {"mdp", "policy", "k", "return_min", "return_max", "n_classes", "n_schedule",
                 "seeds", "delta", "log_phi_card", "sampling_dist", "method", "restarts",
                 "max_sweeps", "corollary_tol"},
             "zlearn config");
  if (!has(c, "mdp")) config_error("missing \"mdp\"");
  const TabularMdp mdp = mdp_from_config(c.at("mdp"), ctx.base_dir);
  require_valid(mdp);
  const Policy policy = policy_from_config(c.value("policy", Json::object()), mdp);
  const BinningConfig cfg = binning_from_config(c, mdp, get_count_or(c, "k", 2));

  ZlearnRunConfig run;
  run.n_classes = get_count_or(c, "n_classes", run.n_classes);
  run.n_schedule = get_count_list(c, "n_schedule", run.n_schedule);
  if (!ctx.seeds.empty()) run.seeds = ctx.seeds;
  run.delta = get_number_or(c, "delta", run.delta);
  if (has(c, "log_phi_card")) run.log_phi_card = get_number_or(c, "log_phi_card", 0.0);
  run.sampling_dist = get_or<std::vector<double>>(c, "sampling_dist", {});
  const std::string method = get_or<std::string>(c, "method", "auto");
  if (method == "auto") {
    run.method = FitMethod::kAuto;
  } else if (method == "enumerate") {
    run.method = FitMethod::kEnumerate;
  } else if (method == "local_search") {
    run.method = FitMethod::kLocalSearch;
  } else {
    config_error("\"method\" must be auto, enumerate or local_search");
  }
  run.restarts = get_count_or(c, "restarts", run.restarts);
  run.max_sweeps = get_count_or(c, "max_sweeps", run.max_sweeps);
  run.corollary_tol = get_number_or(c, "corollary_tol", run.corollary_tol);
  if (run.n_schedule.empty()) config_error("\"n_schedule\" must not be empty");
  if (!(run.delta > 0.0 && run.delta < 1.0)) config_error("\"delta\" must lie in (0, 1)");

  const ZlearnSweep sweep = run_zlearn_sweep(mdp, policy, cfg, run);
  const CorollaryReport cor = corollary_report(sweep, run);
  const auto audit = theorem_audit(sweep, run);

  // The fit at the largest n for the first seed.
  const SweepFit* last = nullptr;
  for (const auto& f : sweep.fits) {
    if (f.seed == run.seeds.front() && f.n == run.n_schedule.back()) last = &f;
  }
  Json w = Json::array();
  for (std::size_t i = 0; i < last->fit.w.n; ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < last->fit.w.n; ++j) row.push_back(last->fit.w(i, j));
    w.push_back(std::move(row));
  }
  ctx.write_json("fit.json", {{"assignment", last->fit.phi.assignment},
                              {"n_classes", last->fit.phi.n_classes},
                              {"loss", last->fit.loss},
                              {"w", std::move(w)},
                              {"n", last->n},
                              {"seed", last->seed},
                              {"method", last->fit.method}});
  const ContrastiveDataset data =
      sweep_dataset(mdp, policy, cfg, sweep.sampling_dist, last->n, last->seed);
  Csv dataset{"x1", "x2", "y"};
  for (const auto& t : data.tuples) dataset.row(t.x1, t.x2, static_cast<std::size_t>(t.y));
  ctx.write("dataset.csv", dataset.str());

  Csv corollary{"n", "seed", "statistic", "loss", "classes_used"};
  for (const auto& row : cor.rows) {
    corollary.row(row.n, static_cast<std::size_t>(row.seed), row.statistic, row.loss,
                  row.classes_used);
  }
  ctx.write("corollary.csv", corollary.str());

  Csv bound{"n", "seed", "x_probe", "lhs", "rhs", "satisfied"};
  std::size_t violations = 0;
  for (const auto& row : audit) {
    bound.row(row.n, static_cast<std::size_t>(row.seed), row.x_probe, row.lhs, row.rhs,
              row.satisfied);
    if (!row.satisfied) ++violations;
  }
  ctx.write("bound_audit.csv", bound.str());
  for (std::uint64_t seed : run.seeds) ctx.seed_ok(seed);

  CommandResult r;
  r.details = {{"oracle_n_classes", sweep.oracle_n_classes},
               {"n_schedule", run.n_schedule},
               {"medians", cor.medians},
               {"non_increasing", cor.non_increasing},
               {"converged", cor.converged},
               {"audit_rows", audit.size()},
               {"audit_violations", violations}};
  return r;
}

CommandResult cmd_metrics(Context& ctx) {
  const Json& c = ctx.config;
  allow_keys(c, {"mdp", "policies", "guard", "tol", "seeds"}, "metrics config");
  if (!has(c, "mdp")) config_error("missing \"mdp\"");
  const TabularMdp mdp = mdp_from_config(c.at("mdp"), ctx.base_dir);
  require_valid(mdp);
  if (!mdp.has_deterministic_dynamics()) {
    throw PreconditionError("metrics require an MDP with deterministic dynamics");
  }
  std::vector<Policy> policies;
  if (!has(c, "policies") || (c.at("policies").is_string() && c.at("policies") == "all")) {
    policies = enumerate_det_policies(mdp, get_count_or(c, "guard", kDefaultPolicyGuard));
  } else if (c.at("policies").is_array()) {
    for (const auto& actions : c.at("policies")) {
      std::vector<std::size_t> a;
      try {
        a = actions.get<std::vector<std::size_t>>();
      } catch (const Json::exception&) {
        config_error("\"policies\" entries must be action lists");
      }
      if (a.size() != mdp.num_states) config_error("policy action list length != num_states");
      for (std::size_t v : a) {
        if (v >= mdp.num_actions) config_error("policy action out of range");
      }
      policies.push_back(Policy::from_actions(a, mdp.num_actions));
    }
  } else {
    config_error("\"policies\" must be \"all\" or a list of action lists");
  }
  if (policies.empty()) config_error("no policies given");
  const double tol = get_number_or(c, "tol", 1e-12);

  const AbstractionMetric d1 = closed_form_d1(mdp, policies);
  const AbstractionMetric d2 = closed_form_d2(mdp, policies);
  const LabeledPairSet exact = collect_pairs_exact(mdp, policies);
  const LabeledPairSet visited = collect_pairs_visited(mdp, policies);
  const AbstractionMetric fit_exact = fit_metric(exact);
  const AbstractionMetric fit_visited = fit_metric(visited);
  const SemimetricReport s1 = check_semimetric(d1, tol);
  const SemimetricReport s2 = check_semimetric(d2, tol);
  const OrderingReport order = check_d2_le_d1(d1, d2, tol);
  const double diff1 = max_abs_diff(fit_exact, d1);
  const double diff2 = max_abs_diff(fit_visited, d2);

  ctx.write("d1.csv", metric_csv(d1));
  ctx.write("d2.csv", metric_csv(d2));
  ctx.write("fit_exact.csv", metric_csv(fit_exact));
  ctx.write("fit_visited.csv", metric_csv(fit_visited));
  Json report = {
      {"policies", policies.size()},
      {"num_pairs", mdp.num_pairs()},
      {"revisited", exact.revisited},
      {"fit_exact_vs_d1_max_abs_diff", diff1},
      {"fit_visited_vs_d2_max_abs_diff", diff2},
      {"d1_semimetric", semimetric_json(s1)},
      {"d2_semimetric", semimetric_json(s2)},
      {"d2_le_d1",
       {{"d2_above_d1", violations_json(order.d2_above_d1)},
        {"zero_implication", violations_json(order.zero_implication)},
        {"one_implication", violations_json(order.one_implication)},
        {"pairs_checked", order.pairs_checked},
        {"ok", order.ok()}}}};
  ctx.write_json("metric_report.json", report);

  CommandResult r;
  r.details = {{"policies", policies.size()},
               {"fit_exact_vs_d1_max_abs_diff", diff1},
               {"fit_visited_vs_d2_max_abs_diff", diff2},
               {"d1_semimetric_ok", s1.ok()},
               {"d2_triangle_violations", s2.triangle.size()},
               {"d2_le_d1_ok", order.ok()}};
  return r;
}

CommandResult cmd_abstraction_compare(Context& ctx) {
  const Json& c = ctx.config;
  allow_keys(c, {"mdp", "policy", "k_values", "tol", "seeds", "corrupt", "compare"},
             "abstraction-compare config");
  if (!has(c, "mdp")) config_error("missing \"mdp\"");
  const std::vector<std::size_t> k_values = get_count_list(c, "k_values", {2, 4, 8});
  if (k_values.empty()) config_error("\"k_values\" must not be empty");
  const double tol = get_number_or(c, "tol", 1e-9);
  const Json policy_spec = c.value("policy", Json{{"kind", "block_random"}});

  std::vector<std::optional<std::uint64_t>> runs;
  if (ctx.seeds.empty()) {
    runs.push_back(std::nullopt);
  } else {
    for (std::uint64_t s : ctx.seeds) runs.push_back(s);
  }

  Csv chain{"seed",           "k",           "n_zpi",         "n_support",
            "n_bisim_blocks", "n_pi_bisim",  "bisim_classes", "lifted_finer_than_zpi",
            "support_finer_than_zpi", "chain_ok", "zpi_violations"};
  Json rows = Json::array();
  bool all_chain = true;
  bool all_finer = true;
  std::size_t total_violations = 0;
  Json negative_control = nullptr;
  for (std::size_t run_index = 0; run_index < runs.size(); ++run_index) {
    const auto seed = runs[run_index];
    const std::uint64_t seed_value = seed.value_or(0);
    const TabularMdp mdp = mdp_from_config(c.at("mdp"), ctx.base_dir, seed);
    require_valid(mdp);
    const StatePartition bisim = coarsest_bisimulation(mdp, tol);
    const Policy policy = policy_from_config(policy_spec, mdp, seed);
    const StatePartition pib = pi_bisimulation(mdp, policy, tol);
    const Abstraction lifted = lift_bisim_to_state_action(bisim, mdp.num_actions);
    const auto exact = exact_return_table(mdp, policy);
    const Abstraction support = support_irrelevance_oracle(exact, tol);
    if (run_index == 0) {
      ctx.write("bisim_partition.csv", partition_csv(bisim));
      ctx.write("pi_bisim_partition.csv", partition_csv(pib));
      ctx.write("lifted_bisim.csv", abstraction_csv(lifted));
    }
    for (std::size_t k : k_values) {
      const BinningConfig cfg = binning_from_config(Json::object(), mdp, k);
      const Abstraction zpi = zpi_irrelevance_oracle(bin_table(exact, cfg), tol);
      const bool finer = is_finer(lifted, zpi);
      const bool support_finer = is_finer(support, zpi);
      const std::size_t bisim_classes = bisim.n_blocks * mdp.num_actions;
      const bool chain_ok = zpi.n_classes <= support.n_classes &&
                            support.n_classes <= bisim_classes && finer;
      std::size_t violations = 0;
      if (is_block_constant(policy, bisim)) {
        violations = check_bisim_induces_zpi(mdp, bisim, policy, cfg, tol).violations.size();
      }
      all_chain = all_chain && chain_ok;
      all_finer = all_finer && finer;
      total_violations += violations;
      chain.row(static_cast<std::size_t>(seed_value), k, zpi.n_classes, support.n_classes,
                bisim.n_blocks, pib.n_blocks, bisim_classes, finer, support_finer, chain_ok,
                violations);
      const Comparison cmp = compare(lifted, zpi);
      rows.push_back({{"seed", seed_value}, {"k", k}, {"finer", cmp.finer},
                      {"coarser", cmp.coarser}, {"n1", cmp.n1}, {"n2", cmp.n2}});
      if (run_index == 0) ctx.write("zpi_k" + std::to_string(k) + ".csv", abstraction_csv(zpi));
    }
    if (run_index == 0 && has(c, "corrupt")) {
      const auto merge = get_count_list(c, "corrupt", {});
      if (merge.size() != 2 || merge[0] >= mdp.num_states || merge[1] >= mdp.num_states) {
        config_error("\"corrupt\" must name two valid states");
      }
      std::vector<std::size_t> labels = bisim.assignment;
      const std::size_t from = labels[merge[1]];
      for (auto& l : labels) {
        if (l == from) l = labels[merge[0]];
      }
      const StatePartition corrupted = StatePartition::from_labels(labels);
      const std::size_t k_max = *std::max_element(k_values.begin(), k_values.end());
      const BinningConfig cfg = binning_from_config(Json::object(), mdp, k_max);
      const ZpiReport report =
          check_bisim_induces_zpi(mdp, corrupted, Policy::uniform(mdp.num_states, mdp.num_actions),
                                  cfg, tol);
      Json list = Json::array();
      for (const auto& v : report.violations) {
        list.push_back({{"state1", v.state1}, {"state2", v.state2}, {"action", v.action},
                        {"gap", v.gap}});
      }
      negative_control = {{"merged", merge}, {"k", k_max}, {"violations", list}};
    }
    if (seed) ctx.seed_ok(*seed);
  }
  ctx.write("chain.csv", chain.str());

  Json comparison = {{"rows", rows},
                     {"all_lifted_finer", all_finer},
                     {"all_chain_ok", all_chain},
                     {"zpi_violations", total_violations},
                     {"negative_control", negative_control}};
  if (has(c, "compare")) {
    const Json& spec = c.at("compare");
    require_object(spec, "\"compare\"");
    const auto l1 = get_count_list(spec, "phi1", {});
    const auto l2 = get_count_list(spec, "phi2", {});
    const Comparison cmp = compare(Abstraction::from_labels(l1), Abstraction::from_labels(l2));
    comparison["custom"] = {{"finer", cmp.finer}, {"coarser", cmp.coarser}, {"n1", cmp.n1},
                            {"n2", cmp.n2}};
  }
  ctx.write_json("comparison.json", comparison);

  CommandResult r;
  r.details = {{"runs", runs.size()},
               {"all_lifted_finer", all_finer},
               {"all_chain_ok", all_chain},
               {"zpi_violations", total_violations}};
  if (!negative_control.is_null()) {
    r.details["negative_control_violations"] = negative_control["violations"].size();
  }
  return r;
}

CommandResult cmd_rcrl_demo(Context& ctx) {
  const Json& c = ctx.config;
  allow_keys(c, {"mdp", "rcrl", "seeds"}, "rcrl-demo config");
  if (!has(c, "mdp")) config_error("missing \"mdp\"");
  const TabularMdp env = mdp_from_config(c.at("mdp"), ctx.base_dir);
  require_valid(env);
  RcrlConfig base = rcrl_config_from_json(c.value("rcrl", Json::object()));
  std::vector<std::uint64_t> seeds = ctx.seeds;
  if (seeds.empty()) seeds.push_back(base.seed);
  const bool multi = seeds.size() > 1;

  Json per_seed = Json::array();
  for (std::uint64_t seed : seeds) {
    RcrlConfig rc = base;
    rc.seed = seed;
    const RcrlResult result = train_rcrl_demo(env, rc);
    Csv log{"epoch",      "aux_loss",     "pos_cos_mean", "pos_cos_std",
            "neg_cos_mean", "neg_cos_std", "episode_return"};
    for (const auto& row : result.log) {
      log.row(row.epoch, row.aux_loss, row.pos_cos_mean, row.pos_cos_std, row.neg_cos_mean,
              row.neg_cos_std, row.episode_return);
    }
    ctx.write("training_log" + seed_suffix(seed, multi) + ".csv", log.str());
    Json report = {{"seed", seed},
                   {"epochs", rc.epochs},
                   {"buffer_steps", result.buffer_steps},
                   {"initial", report_json(result.initial_report)},
                   {"final", report_json(result.final_report)}};
    if (!result.final_report.empty()) {
      const double sep = result.final_report.separation();
      const double base_sep = result.initial_report.separation();
      report["separation"] = sep;
      report["initial_separation"] = base_sep;
      report["separation_ok"] = sep >= 0.2 && std::abs(base_sep) <= 0.05;
    }
    ctx.write_json("representation_report" + seed_suffix(seed, multi) + ".json", report);
    per_seed.push_back({{"seed", seed}, {"separation", report.value("separation", Json())}});
    ctx.seed_ok(seed);
  }
  CommandResult r;
  r.details = {{"seeds", per_seed}};
  return r;
}

CommandResult cmd_validate(Context& ctx) {
  const Json& c = ctx.config;
  allow_keys(c, {"mdp", "policy", "seeds"}, "validate config");
  if (!has(c, "mdp")) config_error("missing \"mdp\"");
  const TabularMdp mdp = mdp_from_config(c.at("mdp"), ctx.base_dir);
  const auto mdp_issues = validate_mdp(mdp);
  std::vector<std::string> policy_issues;
  if (has(c, "policy") && mdp_issues.empty()) {
    const Policy policy = policy_from_config(c.at("policy"), mdp);
    policy_issues = validate_policy(policy);
  }
  const bool valid = mdp_issues.empty() && policy_issues.empty();
  ctx.write_json("validation.json", {{"valid", valid},
                                     {"mdp_violations", mdp_issues},
                                     {"policy_violations", policy_issues}});
  CommandResult r;
  r.details = {{"valid", valid}, {"violations", mdp_issues.size() + policy_issues.size()}};
  if (!valid) {
    r.exit_code = kExitConfig;
    r.details["message"] =
        "invalid input: " + (mdp_issues.empty() ? policy_issues.front() : mdp_issues.front());
  }
  return r;
}

using Handler = std::function<CommandResult(Context&)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = {
      {"eval-returns", cmd_eval_returns},   {"zlearn", cmd_zlearn},
      {"metrics", cmd_metrics},             {"abstraction-compare", cmd_abstraction_compare},
      {"rcrl-demo", cmd_rcrl_demo},         {"validate", cmd_validate},
  };
  return table;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::uint64_t> seeds_from_config(const Json& config) {
  if (!has(config, "seeds")) return {};
  const Json& v = config.at("seeds");
  if (!v.is_array()) config_error("\"seeds\" must be an array");
  std::vector<std::uint64_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0)) {
      config_error("\"seeds\" entries must be non-negative integers");
    }
    out.push_back(e.get<std::uint64_t>());
  }
  return out;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"eval-returns", "zlearn",    "metrics",
                                                 "abstraction-compare", "rcrl-demo", "validate"};
  return names;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw PreconditionError("--seeds expects comma-separated non-negative integers, got \"" +
                              text + "\"");
    }
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw PreconditionError("seed out of range: " + item);
    }
  }
  if (out.empty()) throw PreconditionError("--seeds is empty");
  return out;
}

std::string config_hash(const Json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TabularMdp mdp_from_config(const Json& spec, const fs::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
  require_object(spec, "\"mdp\"");
  const std::string source = get_or<std::string>(spec, "source", "");
  const auto seed = [&] {
    return seed_override.value_or(static_cast<std::uint64_t>(get_count_or(spec, "seed", 0)));
  };
  const auto reward_options = [&] {
    RandomMdpOptions o;
    o.r_min = get_number_or(spec, "r_min", o.r_min);
    o.r_max = get_number_or(spec, "r_max", o.r_max);
    o.reward_levels = get_count_or(spec, "reward_levels", o.reward_levels);
    return o;
  };
  if (source == "file") {
    allow_keys(spec, {"source", "path"}, "mdp");
    fs::path path = get_or<std::string>(spec, "path", "");
    if (path.empty()) config_error("mdp source \"file\" needs \"path\"");
    if (path.is_relative()) path = base_dir / path;
    if (!fs::exists(path)) config_error("MDP file does not exist: " + path.string());
    return load_mdp_file(path);
  }
  if (source == "random") {
    allow_keys(spec, {"source", "seed", "num_states", "num_actions", "branching", "gamma",
                      "r_min", "r_max", "reward_levels"},
               "mdp");
    return random_mdp(seed(), get_count(spec, "num_states"), get_count(spec, "num_actions"),
                      get_count_or(spec, "branching", 2), get_number_or(spec, "gamma", 0.9),
                      reward_options());
  }
  if (source == "lumpable") {
    allow_keys(spec, {"source", "seed", "blocks", "copies", "num_actions", "branching", "gamma",
                      "r_min", "r_max", "reward_levels"},
               "mdp");
    return random_lumpable_mdp(seed(), get_count(spec, "blocks"), get_count_or(spec, "copies", 2),
                               get_count(spec, "num_actions"), get_count_or(spec, "branching", 2),
                               get_number_or(spec, "gamma", 0.9), reward_options())
        .mdp;
  }
  if (source == "gridworld") {
    allow_keys(spec, {"source", "width", "height", "goal", "step_reward", "goal_reward", "gamma",
                      "horizon_cap"},
               "mdp");
    const std::size_t w = get_count(spec, "width");
    const std::size_t h = get_count(spec, "height");
    const auto goal = get_count_list(spec, "goal", {w == 0 ? 0 : w - 1, h == 0 ? 0 : h - 1});
    if (goal.size() != 2) config_error("\"goal\" must be [x, y]");
    return gridworld(w, h, {goal[0], goal[1]}, get_number_or(spec, "step_reward", 0.0),
                     get_number_or(spec, "goal_reward", 1.0), get_number_or(spec, "gamma", 0.9),
                     get_count_or(spec, "horizon_cap", 0));
  }
  if (source == "planted_two_class") {
    allow_keys(spec, {"source", "stay", "gamma", "horizon_cap"}, "mdp");
    return planted_two_class_mdp(get_number_or(spec, "stay", 0.7),
                                 get_number_or(spec, "gamma", 0.9),
                                 get_count_or(spec, "horizon_cap", 10));
  }
  if (source == "coin_flip") {
    allow_keys(spec, {"source", "gamma", "num_actions"}, "mdp");
    return coin_flip_mdp(get_number_or(spec, "gamma", 0.9), get_count_or(spec, "num_actions", 1));
  }
  config_error("unknown mdp source \"" + source +
               "\" (expected file, random, lumpable, gridworld, planted_two_class or coin_flip)");
}

Policy policy_from_config(const Json& spec, const TabularMdp& mdp,
                          std::optional<std::uint64_t> seed_override) {
  require_object(spec, "\"policy\"");
  const std::string kind = get_or<std::string>(spec, "kind", "uniform");
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  const auto rng = [&] {
    const std::uint64_t seed =
        seed_override.value_or(static_cast<std::uint64_t>(get_count_or(spec, "seed", 0)));
    return Rng(mix_seed(seed, 0x9011c7));
  };
  Policy policy;
  if (kind == "uniform") {
    allow_keys(spec, {"kind"}, "policy");
    policy = Policy::uniform(S, A);
  } else if (kind == "deterministic") {
    allow_keys(spec, {"kind", "actions"}, "policy");
    const auto actions = get_count_list(spec, "actions", {});
    if (actions.size() != S) config_error("policy \"actions\" must list one action per state");
    for (std::size_t a : actions) {
      if (a >= A) config_error("policy action out of range");
    }
    policy = Policy::from_actions(actions, A);
  } else if (kind == "table") {
    allow_keys(spec, {"kind", "probs", "deterministic"}, "policy");
    policy = policy_from_json(spec);
  } else if (kind == "random") {
    allow_keys(spec, {"kind", "seed"}, "policy");
    Rng r = rng();
    policy = Policy::random(S, A, r);
  } else if (kind == "greedy") {
    allow_keys(spec, {"kind"}, "policy");
    policy = greedy_policy(mdp, optimal_q(mdp));
  } else if (kind == "block_random") {
    allow_keys(spec, {"kind", "seed"}, "policy");
    const StatePartition blocks = coarsest_bisimulation(mdp);
    Rng r = rng();
    const Policy per_block = Policy::random(blocks.n_blocks, A, r);
    policy.num_states = S;
    policy.num_actions = A;
    for (std::size_t s = 0; s < S; ++s) {
      const auto row = per_block.row(blocks.assignment[s]);
      policy.probs.insert(policy.probs.end(), row.begin(), row.end());
    }
  } else {
    config_error("unknown policy kind \"" + kind +
                 "\" (expected uniform, deterministic, table, random, greedy or block_random)");
  }
  if (policy.num_states != S || policy.num_actions != A) {
    config_error("policy shape does not match the MDP");
  }
  return policy;
}

RcrlConfig rcrl_config_from_json(const Json& spec) {
  require_object(spec, "\"rcrl\"");
  allow_keys(spec, {"epochs", "episodes_per_epoch", "updates_per_epoch", "batch_size",
                    "learning_rate", "d_emb", "init_scale", "optimizer", "adam_beta1",
                    "adam_beta2", "adam_eps", "epsilon", "q_learning_rate", "segment_mode",
                    "threshold", "random_start", "buffer_capacity", "probe_count", "seed"},
             "rcrl");
  RcrlConfig rc;
  rc.epochs = get_count_or(spec, "epochs", rc.epochs);
  rc.episodes_per_epoch = get_count_or(spec, "episodes_per_epoch", rc.episodes_per_epoch);
  rc.updates_per_epoch = get_count_or(spec, "updates_per_epoch", rc.updates_per_epoch);
  rc.batch_size = get_count_or(spec, "batch_size", rc.batch_size);
  rc.learning_rate = get_number_or(spec, "learning_rate", rc.learning_rate);
  rc.d_emb = get_count_or(spec, "d_emb", rc.d_emb);
  rc.init_scale = get_number_or(spec, "init_scale", rc.init_scale);
  const std::string optimizer = get_or<std::string>(spec, "optimizer", "adam");
  if (optimizer == "adam") {
    rc.optimizer = OptimizerKind::kAdam;
  } else if (optimizer == "sgd") {
    rc.optimizer = OptimizerKind::kSgd;
  } else {
    config_error("\"optimizer\" must be adam or sgd");
  }
  rc.adam_beta1 = get_number_or(spec, "adam_beta1", rc.adam_beta1);
  rc.adam_beta2 = get_number_or(spec, "adam_beta2", rc.adam_beta2);
  rc.adam_eps = get_number_or(spec, "adam_eps", rc.adam_eps);
  rc.epsilon = get_number_or(spec, "epsilon", rc.epsilon);
  rc.q_learning_rate = get_number_or(spec, "q_learning_rate", rc.q_learning_rate);
  const std::string mode = get_or<std::string>(spec, "segment_mode", "sparse");
  if (mode == "sparse") {
    rc.segments.mode = SegmentMode::kSparse;
  } else if (mode == "threshold") {
    rc.segments.mode = SegmentMode::kThreshold;
  } else {
    config_error("\"segment_mode\" must be sparse or threshold");
  }
  rc.segments.threshold = get_number_or(spec, "threshold", rc.segments.threshold);
  rc.random_start = get_or<bool>(spec, "random_start", rc.random_start);
  rc.buffer_capacity = get_count_or(spec, "buffer_capacity", rc.buffer_capacity);
  rc.probe_count = get_count_or(spec, "probe_count", rc.probe_count);
  rc.seed = get_count_or(spec, "seed", rc.seed);
  validate_rcrl_config(rc);
  return rc;
}

RunOutcome run_command(const std::string& command, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  RunOutcome outcome;
  Context ctx;
  ctx.out_dir = options.out_dir;
  std::string message;
  Json details = Json::object();
  std::string hash;
  bool out_dir_ready = false;

  try {
    const auto it = handlers().find(command);
    if (it == handlers().end()) {
      throw PreconditionError("unknown command \"" + command + "\"");
    }
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + ctx.out_dir.string() + ": " + ec.message());
    out_dir_ready = true;
    if (options.config_path.empty()) throw PreconditionError("--config is required");
    if (!fs::exists(options.config_path)) {
      throw PreconditionError("config file does not exist: " + options.config_path.string());
    }
    ctx.config = load_json_file(options.config_path);
    require_object(ctx.config, "config");
    ctx.base_dir = options.config_path.parent_path();
    ctx.seeds = options.seeds ? *options.seeds : seeds_from_config(ctx.config);
    Json effective = ctx.config;
    if (options.seeds) effective["seeds"] = *options.seeds;
    hash = config_hash(effective);
    CommandResult result = it->second(ctx);
    outcome.exit_code = result.exit_code;
    details = std::move(result.details);
    if (details.contains("message")) {
      message = details["message"].get<std::string>();
      details.erase("message");
    }
  } catch (const PreconditionError& e) {
    outcome.exit_code = kExitConfig;
    message = e.what();
  } catch (const NumericError& e) {
    outcome.exit_code = kExitNumeric;
    message = e.what();
  } catch (const IoError& e) {
    outcome.exit_code = kExitIo;
    message = e.what();
  } catch (const Json::exception& e) {
    outcome.exit_code = kExitConfig;
    message = std::string("config: ") + e.what();
  } catch (const std::exception& e) {
    outcome.exit_code = kExitInternal;
    message = e.what();
  }

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string status = outcome.exit_code == kExitOk ? "ok" : "error";
  if (out_dir_ready) {
    Json manifest = {{"tool", "zirrel"},
                     {"version", kToolVersion},
                     {"command", command},
                     {"config_path", options.config_path.string()},
                     {"config_hash", hash.empty() ? Json() : Json(hash)},
                     {"started_at", utc_timestamp()},
                     {"wall_clock_seconds", seconds},
                     {"status", status},
                     {"exit_code", outcome.exit_code},
                     {"seeds", ctx.seed_status},
                     {"outputs", ctx.outputs}};
    if (!message.empty()) manifest["error"] = message;
    try {
      write_file_atomic(ctx.out_dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const IoError& e) {
      if (outcome.exit_code == kExitOk) {
        outcome.exit_code = kExitIo;
        message = e.what();
      }
    }
  }

  outcome.summary = {{"command", command},
                     {"status", outcome.exit_code == kExitOk ? "ok" : "error"},
                     {"exit_code", outcome.exit_code},
                     {"out_dir", ctx.out_dir.string()},
                     {"outputs", ctx.outputs}};
  if (!hash.empty()) outcome.summary["config_hash"] = hash;
  if (!message.empty()) outcome.summary["message"] = message;
  if (!details.empty()) outcome.summary["result"] = details;
  return outcome;
}

}  // namespace zirrel
