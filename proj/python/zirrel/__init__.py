"""Python bindings for the zirrel return-distribution toolkit."""

import json

from ._zirrel import (
    IoError,
    Mdp,
    NumericError,
    Policy,
    PreconditionError,
    __version__,
    binned_returns,
    bound_rhs,
    closed_form_d1,
    closed_form_d2,
    coarsest_bisimulation,
    coin_flip_mdp,
    exact_return_table,
    gridworld,
    planted_two_class_mdp,
    policy_eval_q,
    zpi_oracle,
)
from ._zirrel import mdp_from_config as _mdp_from_config
from ._zirrel import run_command as _run_command


def mdp_from_config(spec, base_dir="."):
    """Builds an MDP from an "mdp" config block given as a dict."""
    return _mdp_from_config(json.dumps(spec), str(base_dir))


def run(command, config_path, out_dir="out", seeds=None):
    """Runs a CLI command in-process. Returns (exit_code, summary dict)."""
    code, summary = _run_command(command, str(config_path), str(out_dir),
                                 None if seeds is None else list(seeds))
    return code, json.loads(summary)


__all__ = [
    "IoError", "Mdp", "NumericError", "Policy", "PreconditionError", "__version__",
    "binned_returns", "bound_rhs", "closed_form_d1", "closed_form_d2",
    "coarsest_bisimulation", "coin_flip_mdp", "exact_return_table", "gridworld",
    "mdp_from_config", "planted_two_class_mdp", "policy_eval_q", "run", "zpi_oracle",
]
