#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "zirrel/abstraction.hpp"
#include "zirrel/error.hpp"
#include "zirrel/harness.hpp"
#include "zirrel/io.hpp"
#include "zirrel/mdp.hpp"
#include "zirrel/metric_learning.hpp"
#include "zirrel/rcrl.hpp"
#include "zirrel/return_dist.hpp"
#include "zirrel/z_learning.hpp"

namespace py = pybind11;
using namespace zirrel;

namespace {

std::vector<std::vector<std::optional<double>>> metric_rows(const AbstractionMetric& d) {
  std::vector<std::vector<std::optional<double>>> rows(d.size);
  for (std::size_t i = 0; i < d.size; ++i) {
    for (std::size_t j = 0; j < d.size; ++j) {
      rows[i].push_back(d.is_defined(i, j) ? std::optional<double>(d(i, j)) : std::nullopt);
    }
  }
  return rows;
}

std::vector<std::vector<double>> binned_rows(const std::vector<BinnedReturnDistribution>& table) {
  std::vector<std::vector<double>> out;
  for (const auto& z : table) out.push_back(z.probs);
  return out;
}

std::vector<BinnedReturnDistribution> binned_table(const TabularMdp& mdp, const Policy& policy,
                                                   std::size_t k, const std::string& method,
                                                   std::size_t atom_count) {
  const BinningConfig cfg = default_binning(mdp, k);
  if (method == "exact") return bin_table(exact_return_table(mdp, policy), cfg);
  if (method == "categorical") {
    CategoricalOptions co;
    co.atom_count = atom_count;
    return categorical_bellman(mdp, policy, cfg, co);
  }
  throw PreconditionError("method must be exact or categorical");
}

}  // namespace

PYBIND11_MODULE(_zirrel, m) {
  m.doc() = "Return-distribution abstractions toolkit";
  m.attr("__version__") = kToolVersion;

  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<TabularMdp>(m, "Mdp")
      .def_readonly("num_states", &TabularMdp::num_states)
      .def_readonly("num_actions", &TabularMdp::num_actions)
      .def_readonly("gamma", &TabularMdp::gamma)
      .def_readonly("r_min", &TabularMdp::r_min)
      .def_readonly("r_max", &TabularMdp::r_max)
      .def_readonly("horizon_cap", &TabularMdp::horizon_cap)
      .def_readonly("transition", &TabularMdp::transition)
      .def_readonly("reward", &TabularMdp::reward)
      .def_property_readonly("num_pairs", &TabularMdp::num_pairs)
      .def("validate", [](const TabularMdp& mdp) { return validate_mdp(mdp); })
      .def("to_json", [](const TabularMdp& mdp) { return mdp_to_json(mdp).dump(); })
      .def_static("from_json", [](const std::string& text) {
        return mdp_from_json(Json::parse(text));
      });

  py::class_<Policy>(m, "Policy")
      .def_readonly("num_states", &Policy::num_states)
      .def_readonly("num_actions", &Policy::num_actions)
      .def_readonly("probs", &Policy::probs)
      .def_static("uniform", &Policy::uniform, py::arg("num_states"), py::arg("num_actions"))
      .def_static(
          "from_actions",
          [](const std::vector<std::size_t>& actions, std::size_t num_actions) {
            return Policy::from_actions(actions, num_actions);
          },
          py::arg("actions"), py::arg("num_actions"));

  m.def(
      "mdp_from_config",
      [](const std::string& spec, const std::string& base_dir) {
        return mdp_from_config(Json::parse(spec), base_dir);
      },
      py::arg("spec_json"), py::arg("base_dir") = ".");
  m.def("gridworld",
        [](std::size_t w, std::size_t h, std::size_t gx, std::size_t gy, double step,
           double goal, double gamma, std::size_t horizon_cap) {
          return gridworld(w, h, {gx, gy}, step, goal, gamma, horizon_cap);
        },
        py::arg("width"), py::arg("height"), py::arg("goal_x"), py::arg("goal_y"),
        py::arg("step_reward") = 0.0, py::arg("goal_reward") = 1.0, py::arg("gamma") = 0.9,
        py::arg("horizon_cap") = 0);
  m.def("planted_two_class_mdp", &planted_two_class_mdp, py::arg("stay") = 0.7,
        py::arg("gamma") = 0.9, py::arg("horizon_cap") = 10);
  m.def("coin_flip_mdp", &coin_flip_mdp, py::arg("gamma") = 0.9, py::arg("num_actions") = 1);

  m.def("policy_eval_q", [](const TabularMdp& mdp, const Policy& policy) {
    return policy_eval_q(mdp, policy);
  });
  m.def(
      "exact_return_table",
      [](const TabularMdp& mdp, const Policy& policy) {
        std::vector<std::vector<std::pair<double, double>>> out;
        for (const auto& dist : exact_return_table(mdp, policy)) {
          auto& row = out.emplace_back();
          for (const auto& atom : dist.atoms) row.emplace_back(atom.value, atom.prob);
        }
        return out;
      },
      "Per state-action list of (return, probability) atoms.");
  m.def(
      "binned_returns",
      [](const TabularMdp& mdp, const Policy& policy, std::size_t k, const std::string& method,
         std::size_t atom_count) {
        return binned_rows(binned_table(mdp, policy, k, method, atom_count));
      },
      py::arg("mdp"), py::arg("policy"), py::arg("k"), py::arg("method") = "exact",
      py::arg("atom_count") = 201);
  m.def(
      "zpi_oracle",
      [](const TabularMdp& mdp, const Policy& policy, std::size_t k) {
        return zpi_irrelevance_oracle(bin_table(exact_return_table(mdp, policy),
                                                default_binning(mdp, k)))
            .assignment;
      },
      py::arg("mdp"), py::arg("policy"), py::arg("k"));
  m.def(
      "coarsest_bisimulation",
      [](const TabularMdp& mdp, double tol) { return coarsest_bisimulation(mdp, tol).assignment; },
      py::arg("mdp"), py::arg("tol") = 1e-9);
  m.def("closed_form_d1", [](const TabularMdp& mdp) {
    return metric_rows(closed_form_d1(mdp, enumerate_det_policies(mdp)));
  });
  m.def("closed_form_d2", [](const TabularMdp& mdp) {
    return metric_rows(closed_form_d2(mdp, enumerate_det_policies(mdp)));
  });
  m.def(
      "bound_rhs",
      [](std::size_t n, std::size_t n_classes, std::size_t domain_size, double delta) {
        BoundInputs b;
        b.n = n;
        b.n_classes = n_classes;
        b.domain_size = domain_size;
        b.delta = delta;
        return theorem_bound_rhs(b);
      },
      py::arg("n"), py::arg("n_classes"), py::arg("domain_size"), py::arg("delta") = 0.1);
  m.def(
      "run_command",
      [](const std::string& command, const std::string& config_path, const std::string& out_dir,
         std::optional<std::vector<std::uint64_t>> seeds) {
        RunOptions options;
        options.config_path = config_path;
        options.out_dir = out_dir;
        options.seeds = std::move(seeds);
        RunOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = run_command(command, options);
        }
        return std::make_pair(outcome.exit_code, outcome.summary.dump());
      },
      py::arg("command"), py::arg("config_path"), py::arg("out_dir") = "out",
      py::arg("seeds") = py::none());
}
