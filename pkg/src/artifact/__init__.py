"""Exact-arithmetic market equilibrium toolkit.

Computes and certifies equilibria of markets where budget-constrained agents
buy bundles of unit-supply goods to satisfy covering constraints at minimum
delay.  Everything is exact rational arithmetic end to end.

Modules
    rational_lp        exact simplex with duals and lexicographic staging
    submodular         set-function minimization and submodularity checking
    market_model       instance types, builders, validation, file format
    scheduling_solver  fast solver for single-machine slot markets
    general_solver     parametric solver for arbitrary covering markets
    verifier           independent certification and property checks
    cli                command-line front end
"""

from .market_model import (
    Agent,
    CoveringRow,
    MarketInstance,
    build_flow_market,
    build_laminar_restricted,
    build_multi_type_scheduling,
    build_single_machine,
    parse_instance,
    write_instance,
)
from .rational_lp import Rational, rat
from .scheduling_solver import marginal_payment, solve_scheduling
from .general_solver import solve_general
from .verifier import (
    check_envy_free,
    check_pareto,
    check_price_equilibrium,
    check_sharing_incentive,
    ic_experiment,
    verify_equilibrium,
)

__all__ = [
    "Agent",
    "CoveringRow",
    "MarketInstance",
    "Rational",
    "build_flow_market",
    "build_laminar_restricted",
    "build_multi_type_scheduling",
    "build_single_machine",
    "check_envy_free",
    "check_pareto",
    "check_price_equilibrium",
    "check_sharing_incentive",
    "ic_experiment",
    "marginal_payment",
    "parse_instance",
    "rat",
    "solve_general",
    "solve_scheduling",
    "verify_equilibrium",
    "write_instance",
]

__version__ = "0.1.0"
