"""Sequential trial search: learning when to stop trying treatments.

Outcome models estimate p(Y(a) | h, x) from observational trajectories.
Policies built on them pick the next action and decide when the best
outcome seen so far is, with high probability, near-optimal.
"""

from trialsearch.core import (
    STOP,
    UNTRIED,
    Context,
    Dataset,
    History,
    ProblemSpec,
    RepeatedAction,
    SpecMismatch,
    Subject,
    Trajectory,
    TrialRecord,
    TrialSearchError,
    extend,
)
from trialsearch.kernels import BACKEND
from trialsearch.model import (
    DegenerateData,
    DegenerateDataWarning,
    LatentOutcomeModel,
    LogisticModel,
    LogisticModelConfig,
    OutcomeModel,
    PriorKind,
    SmoothingConfig,
    TabularModel,
    fit_logistic,
    fit_tabular,
)
from trialsearch.stopping import BoundMode, StoppingConfig, gamma, rho
from trialsearch.solvers import (
    CdpPolicy,
    GreedyPolicy,
    InstanceTooLarge,
    NdpPolicy,
    Policy,
    brute_force_optimal,
    expected_search_length,
    solve_cdp,
    solve_ndp,
)
from trialsearch.dgp import DgpInstance, DgpParams, build_instance, build_toy
from trialsearch.evaluation import EvalConfig, Metrics, evaluate, sweep

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "STOP", "UNTRIED", "BoundMode", "CdpPolicy", "Context", "Dataset",
    "DegenerateData", "DegenerateDataWarning", "DgpInstance", "DgpParams", "EvalConfig",
    "GreedyPolicy", "History", "InstanceTooLarge", "LatentOutcomeModel", "LogisticModel",
    "LogisticModelConfig", "Metrics", "NdpPolicy", "OutcomeModel", "Policy", "PriorKind",
    "ProblemSpec", "RepeatedAction", "SmoothingConfig", "SpecMismatch", "StoppingConfig",
    "Subject", "TabularModel", "Trajectory", "TrialRecord", "TrialSearchError",
    "brute_force_optimal", "build_instance", "build_toy", "evaluate", "expected_search_length",
    "extend", "fit_logistic", "fit_tabular", "gamma", "rho", "solve_cdp", "solve_ndp", "sweep",
]
