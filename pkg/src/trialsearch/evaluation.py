"""Off-policy evaluation against revealed potential outcomes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from trialsearch.core import (
    STOP,
    Context,
    Dataset,
    History,
    ProblemSpec,
    RepeatedAction,
    Subject,
    Trajectory,
    TrialRecord,
    canonicalize,
    extend,
    untried,
)
from trialsearch.dgp import STREAM_EVAL, stream_rng
from trialsearch.model import (
    LogisticModelConfig,
    OutcomeModel,
    PriorKind,
    SmoothingConfig,
    fit_logistic,
    fit_tabular,
)
from trialsearch.solvers import GreedyPolicy, Policy, solve_cdp, solve_ndp
from trialsearch.stopping import StoppingConfig


class PolicyRepeatedAction(RepeatedAction):
    """A policy proposed an action that was already tried."""


@dataclass(frozen=True)
class EvalConfig:
    epsilon: float = 0.0
    max_steps: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class Metrics:
    efficacy: float
    mean_search_time: float
    worst_search_time: int
    best_so_far_curve: list[float]
    n_subjects: int
    efficacy_se: float = 0.0
    search_time_se: float = 0.0

    def row(self) -> dict:
        d = asdict(self)
        d.pop("best_so_far_curve")
        return d


def rollout(policy: Policy, subject: Subject, max_steps: int | None = None,
            rng: np.random.Generator | None = None) -> Trajectory:
    """Run ``policy`` on ``subject``, revealing its fixed potential outcomes."""
    k = len(subject.potential_outcomes)
    max_steps = k if max_steps is None else max_steps
    h = History(subject.context)
    trials = []
    while len(trials) < max_steps:
        a = policy.decide(h, rng)
        if a == STOP:
            return Trajectory(subject.context, tuple(trials), terminal=True)
        if a in h or not 0 <= a < k:
            raise PolicyRepeatedAction(f"policy proposed action {a} at history {sorted(h.trials)}")
        y = subject.outcome(a)
        trials.append(TrialRecord(a, y))
        h = extend(h, a, y)
    return Trajectory(subject.context, tuple(trials), terminal=len(trials) >= k)


def _weighted_mean_se(x: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    if len(x) == 0:
        return math.nan, math.nan
    w = w / w.sum()
    m = float(np.dot(w, x))
    n = len(x)
    if n < 2:
        return m, 0.0
    var = float(np.dot(w, (x - m) ** 2)) * n / (n - 1)
    return m, math.sqrt(var / n)


def evaluate(policy: Policy, subjects: list[Subject], cfg: EvalConfig | None = None,
             spec: ProblemSpec | None = None, weights=None) -> Metrics:
    """Efficacy, search time and best-so-far curve over ``subjects``.

    ``weights`` (optional) gives each subject a probability mass, which lets
    an exactly enumerated subject distribution be scored without sampling.
    """
    cfg = cfg or EvalConfig()
    spec = spec or policy.spec
    values = np.asarray(spec.outcome_values)
    k = spec.k
    n = len(subjects)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    success = np.zeros(n)
    length = np.zeros(n)
    terminal = np.zeros(n, dtype=bool)
    curve = np.full((n, k), np.nan)
    for i, s in enumerate(subjects):
        tr = rollout(policy, s, cfg.max_steps, stream_rng(cfg.seed, STREAM_EVAL, i))
        length[i] = len(tr)
        terminal[i] = tr.terminal
        found = [values[t.outcome_index] for t in tr.trials]
        best = max(found) if found else -math.inf
        success[i] = best >= s.best_value(spec) - cfg.epsilon
        if found:
            running = np.maximum.accumulate(found)
            curve[i, : len(running)] = running
            curve[i, len(running):] = running[-1]
    eff, eff_se = _weighted_mean_se(success, w)
    t_mean, t_se = _weighted_mean_se(length[terminal], w[terminal])
    tried = ~np.isnan(curve[:, 0])
    if tried.any():
        ww = w[tried] / w[tried].sum()
        curve_mean = [float(np.dot(ww, curve[tried, t])) for t in range(k)]
    else:
        curve_mean = [math.nan] * k
    worst = int(length[w > 0].max()) if n else 0
    return Metrics(eff, t_mean, worst, curve_mean, n, eff_se, t_se)


# -- emulated behavior policy -------------------------------------------------


class EmulatedBehaviorPolicy(Policy):
    """Tabular estimate of the observed policy, sampled at decision time.

    ``table[key]`` holds counts of each next action plus STOP (last slot).
    Unseen histories fall back to STOP with the marginal stop rate and a
    uniform choice among untried actions otherwise.
    """

    kind = "behavior"

    def __init__(self, spec: ProblemSpec, table: dict[tuple, np.ndarray], stop_rate: float,
                 seed: int = 0):
        self.spec = spec
        self.table = table
        self.stop_rate = stop_rate
        self._rng = np.random.default_rng(seed)

    def probabilities(self, h: History) -> np.ndarray:
        k = self.spec.k
        open_ = untried(h, k)
        p = np.zeros(k + 1)
        if not open_:
            p[k] = 1.0
            return p
        counts = self.table.get(canonicalize(h, k))
        if counts is not None and counts.sum() > 0:
            p[:] = counts
            for t in h.trials:
                p[t.action] = 0.0
            if p.sum() > 0:
                return p / p.sum()
        p[open_] = (1.0 - self.stop_rate) / len(open_)
        p[k] = self.stop_rate
        return p

    def decide(self, h: History, rng: np.random.Generator | None = None) -> int:
        rng = rng or self._rng
        p = self.probabilities(h)
        a = int(rng.choice(len(p), p=p))
        return STOP if a == self.spec.k else a


def fit_emulated_behavior(dataset: Dataset, seed: int = 0) -> EmulatedBehaviorPolicy:
    spec = dataset.spec
    k = spec.k
    table: dict[tuple, np.ndarray] = {}
    stops = decisions = 0
    for tr in dataset.trajectories:
        for h, t in tr.prefixes():
            table.setdefault(canonicalize(h, k), np.zeros(k + 1))[t.action] += 1
            decisions += 1
        if tr.terminal:
            table.setdefault(canonicalize(tr.history(), k), np.zeros(k + 1))[k] += 1
            stops += 1
            decisions += 1
    stop_rate = stops / decisions if decisions else 0.0
    return EmulatedBehaviorPolicy(spec, table, stop_rate, seed)


# -- sweeps ------------------------------------------------------------------


def fit_model(dataset: Dataset, estimator: str, beta0: float = 0.1,
              logistic: LogisticModelConfig | None = None) -> OutcomeModel:
    estimator = estimator.lower()
    if estimator == "tabular":
        return fit_tabular(dataset, SmoothingConfig(PriorKind.UNINFORMED, beta0))
    if estimator == "historical":
        return fit_tabular(dataset, SmoothingConfig(PriorKind.HISTORICAL, beta0))
    if estimator == "logistic":
        return fit_logistic(dataset, logistic)
    raise ValueError(f"unknown estimator {estimator!r}")


def build_policy(solver: str, model: OutcomeModel, value: float, stopping: StoppingConfig,
                 contexts: list[Context] | None = None) -> Policy:
    """Solve ``solver`` with ``value`` as delta (cdp, greedy) or lambda (ndp)."""
    solver = solver.lower()
    if solver == "cdp":
        return solve_cdp(model, _with_delta(stopping, value), contexts=contexts)
    if solver == "greedy":
        return GreedyPolicy(model, _with_delta(stopping, value))
    if solver == "ndp":
        return solve_ndp(model, value, contexts=contexts)
    raise ValueError(f"unknown solver {solver!r}")


def _with_delta(cfg: StoppingConfig, delta: float) -> StoppingConfig:
    return StoppingConfig(cfg.epsilon, delta, cfg.alpha, cfg.bound_mode, cfg.average_orders)


@dataclass
class SweepRow:
    value: float
    metrics: Metrics
    first_actions: dict[Context, int] = field(default_factory=dict)


@dataclass
class SweepResult:
    solver: str
    parameter: str
    rows: list[SweepRow]


def sweep(solver: str, grid, model: OutcomeModel | Dataset, test_subjects: list[Subject],
          cfg: EvalConfig | None = None, stopping: StoppingConfig | None = None,
          estimator: str = "historical", weights=None) -> SweepResult:
    """Solve once per grid value and evaluate each policy on ``test_subjects``.

    ``model`` may be a fitted model or a training :class:`Dataset`, in which
    case it is fitted once with ``estimator``.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    cfg = cfg or EvalConfig()
    stopping = stopping or StoppingConfig()
    if isinstance(model, Dataset):
        model = fit_model(model, estimator)
    contexts = sorted({s.context for s in test_subjects})
    rows = []
    for value in grid:
        policy = build_policy(solver, model, value, stopping, contexts)
        metrics = evaluate(policy, test_subjects, cfg, model.spec, weights)
        firsts = {c: policy.decide(History(c)) for c in contexts}
        rows.append(SweepRow(float(value), metrics, firsts))
    return SweepResult(solver, "lambda" if solver == "ndp" else "delta", rows)


def mean_and_se(xs) -> tuple[float, float]:
    """Mean and standard error across independent realizations."""
    xs = np.asarray(xs, dtype=float)
    if len(xs) < 2:
        return float(xs.mean()), 0.0
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(len(xs)))
