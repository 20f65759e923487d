"""Climate-economy integrated assessment solver kit.

Deterministic optimal-control solves of a six-state climate-economy
model, stochastic dynamic programming with Epstein-Zin preferences over
productivity and climate-tipping Markov chains, certainty-equivalent
rolling re-solves, and robust decision rules over scenario sets.
"""

from .calibration import Calibration, CalibrationError, LrrParams, TippingSpec, load_calibration
from .core import (
    Decision,
    DomainError,
    ExogenousPaths,
    FeasibilityError,
    ModelParams,
    StateVector,
)
from .det_solver import (
    Horizon,
    Trajectory,
    objective_gradient,
    refine_from_coarse,
    rollout_adjoint,
    scc_deterministic,
    solve_deterministic,
)
from .optimize import SolverError, minimize_box
from .approx import ChebApprox, Domain, build_time_varying_domains
from .stochastic import (
    ConfigurationError,
    EZParams,
    LrrChain,
    MarkovChain,
    TippingChain,
    build_tipping_chain,
    discretize_lrr,
    tipping_probability,
)
from .vfi import (
    DiscreteStates,
    PolicyTable,
    ValueFunction,
    default_domains,
    scc_stochastic,
    solve_vfi,
    terminal_value,
)
from .simulate import PathEnsemble, path_rng, sceq_path, simulate_policy
from .robust import (
    DecisionPath,
    MonteCarloReport,
    RobustDecision,
    Scenario,
    ScenarioSet,
    expected_welfare_decision,
    max_min,
    min_max_regret,
    monte_carlo,
    welfare_under,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Calibration", "CalibrationError", "LrrParams", "TippingSpec", "load_calibration",
    "ModelParams", "ExogenousPaths", "StateVector", "Decision",
    "DomainError", "FeasibilityError",
    "Horizon", "Trajectory", "solve_deterministic", "rollout_adjoint",
    "objective_gradient", "refine_from_coarse", "scc_deterministic",
    "SolverError", "minimize_box",
    "Domain", "ChebApprox", "build_time_varying_domains",
    "ConfigurationError", "MarkovChain", "LrrChain", "TippingChain", "EZParams",
    "discretize_lrr", "tipping_probability", "build_tipping_chain",
    "DiscreteStates", "ValueFunction", "PolicyTable", "solve_vfi",
    "terminal_value", "default_domains", "scc_stochastic",
    "PathEnsemble", "path_rng", "simulate_policy", "sceq_path",
    "Scenario", "ScenarioSet", "DecisionPath", "RobustDecision", "MonteCarloReport",
    "welfare_under", "max_min", "min_max_regret", "expected_welfare_decision", "monte_carlo",
]
