"""Policy optimization.

* :func:`solve_cdp` -- constrained dynamic programming: minimize expected
  trials, with STOP allowed only where the stop indicator holds.
* :class:`GreedyPolicy` / :func:`decide_greedy` -- pick the action with the
  largest expected improving outcome until stopping is permitted.
* :func:`solve_ndp` -- reward-shaped baseline: best outcome so far minus
  ``lam`` per trial, collected at STOP.
* :func:`brute_force_optimal` -- enumerates every non-repeating decision
  tree; an oracle for small instances.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from trialsearch import kernels
from trialsearch.core import (
    STOP,
    Context,
    History,
    ProblemSpec,
    RepeatedAction,
    SpecMismatch,
    TrialSearchError,
    best_so_far,
    extend,
    history_grid,
    history_index,
    key_to_str,
    canonicalize,
    index_to_history,
    untried,
)
from trialsearch.model import OutcomeModel
from trialsearch.stopping import StoppingConfig, gamma, gamma_table

# Q-values closer than this are treated as tied
TIE_TOLERANCE = 1e-12


class InstanceTooLarge(TrialSearchError):
    pass


class Policy(ABC):
    spec: ProblemSpec
    kind: str = "policy"

    @abstractmethod
    def decide(self, h: History, rng: np.random.Generator | None = None) -> int:
        """Next action for ``h``, or :data:`STOP`."""


@dataclass
class TablePolicy(Policy):
    """Deterministic policy backed by per-context decision tables."""

    spec: ProblemSpec
    choices: dict[Context, np.ndarray] = field(default_factory=dict)
    values: dict[Context, np.ndarray] = field(default_factory=dict)

    def decide(self, h: History, rng=None) -> int:
        table = self.choices.get(h.context)
        if table is None:
            raise SpecMismatch(f"policy was not solved for context {h.context.coords}")
        return int(table[history_index(h, self.spec)])

    def value(self, h: History) -> float:
        return float(self.values[h.context][history_index(h, self.spec)])

    def contexts(self) -> list[Context]:
        return sorted(self.choices)

    def _tables_dict(self) -> dict:
        out = {}
        for ctx in self.contexts():
            rows = {}
            for i, (c, v) in enumerate(zip(self.choices[ctx], self.values[ctx])):
                key = canonicalize(index_to_history(i, ctx, self.spec), self.spec.k)
                rows[key_to_str(key)] = [int(c), float(v)]
            out[key_to_str(ctx.coords)] = rows
        return out

    @staticmethod
    def _tables_from_dict(spec: ProblemSpec, d: dict):
        from trialsearch.core import key_to_history, str_to_key

        choices, values = {}, {}
        for ctx_s, rows in d.items():
            ctx = Context(str_to_key(ctx_s))
            c = np.full(spec.n_histories, STOP, dtype=np.int64)
            v = np.zeros(spec.n_histories)
            for key_s, (choice, value) in rows.items():
                i = history_index(key_to_history(str_to_key(key_s), spec), spec)
                c[i], v[i] = choice, value
            choices[ctx], values[ctx] = c, v
        return choices, values


@dataclass
class CdpPolicy(TablePolicy):
    stopping: StoppingConfig = field(default_factory=StoppingConfig)
    context_weights: dict[Context, float] = field(default_factory=dict)
    kind: str = "cdp"

    def expected_search_length(self) -> float:
        """``E_X[-V(H_0)]`` over the solved contexts."""
        total = sum(self.context_weights.values())
        return sum(w * -float(self.values[c][0]) for c, w in self.context_weights.items()) / total

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "stopping": self.stopping.to_dict(),
            "context_weights": {key_to_str(c.coords): w for c, w in self.context_weights.items()},
            "tables": self._tables_dict(),
        }

    @classmethod
    def from_dict(cls, spec: ProblemSpec, d: dict) -> "CdpPolicy":
        from trialsearch.core import str_to_key

        choices, values = cls._tables_from_dict(spec, d["tables"])
        weights = {Context(str_to_key(c)): float(w) for c, w in d["context_weights"].items()}
        return cls(spec, choices, values, StoppingConfig.from_dict(d["stopping"]), weights)


@dataclass
class NdpPolicy(TablePolicy):
    lam: float = 0.35
    q_tables: dict[Context, np.ndarray] = field(default_factory=dict)
    kind: str = "ndp"

    def q(self, h: History, a: int) -> float:
        """Q-value of action ``a`` (or STOP) at ``h``."""
        i = history_index(h, self.spec)
        if a == STOP:
            if len(h) == 0:
                return -math.inf
            return best_so_far(h, self.spec) - self.lam * len(h)
        return float(self.q_tables[h.context][i, a])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda": self.lam, "tables": self._tables_dict()}

    @classmethod
    def from_dict(cls, spec: ProblemSpec, d: dict) -> "NdpPolicy":
        choices, values = cls._tables_from_dict(spec, d["tables"])
        return cls(spec, choices, values, float(d["lambda"]))


def _weights(model: OutcomeModel, contexts, weights) -> dict[Context, float]:
    if weights is not None:
        return dict(weights)
    model_w = getattr(model, "context_weights", None)
    if model_w:
        sel = {c: model_w.get(c, 0.0) for c in contexts}
        if sum(sel.values()) > 0:
            return sel
    return {c: 1.0 for c in contexts}


def _default_contexts(model: OutcomeModel, spec: ProblemSpec, contexts):
    if contexts is not None:
        return list(contexts)
    if hasattr(model, "contexts"):
        return list(model.contexts())
    return spec.contexts()


def solve_cdp(model: OutcomeModel, cfg: StoppingConfig, spec: ProblemSpec | None = None,
              contexts=None, weights: dict[Context, float] | None = None) -> CdpPolicy:
    """Backward induction with reward -1 per trial and STOP only where permitted."""
    spec = spec or model.spec
    contexts = _default_contexts(model, spec, contexts)
    grid = history_grid(spec)
    choices, values = {}, {}
    for ctx in contexts:
        stop_ok = gamma_table(model, ctx, cfg).astype(np.uint8)
        V, choice, _ = kernels.backward_induction(
            model.table(ctx), -1.0, np.zeros(grid.n), stop_ok, grid.slot, grid.stride
        )
        choices[ctx], values[ctx] = choice, V
    return CdpPolicy(spec, choices, values, cfg, _weights(model, contexts, weights))


def solve_ndp(model: OutcomeModel, lam: float, spec: ProblemSpec | None = None,
              contexts=None) -> NdpPolicy:
    """Backward induction with STOP reward ``mu(h) - lam |h|``; no STOP before the first trial."""
    if not lam > 0:
        raise ValueError("lam must be > 0")
    spec = spec or model.spec
    contexts = _default_contexts(model, spec, contexts)
    grid = history_grid(spec)
    values_arr = np.asarray(spec.outcome_values)
    mu = np.where(grid.best >= 0, values_arr[np.maximum(grid.best, 0)], 0.0)
    stop_reward = mu - lam * grid.size
    stop_ok = (grid.size >= 1).astype(np.uint8)
    choices, vals, qs = {}, {}, {}
    for ctx in contexts:
        V, choice, Q = kernels.backward_induction(
            model.table(ctx), 0.0, stop_reward, stop_ok, grid.slot, grid.stride
        )
        choices[ctx], vals[ctx], qs[ctx] = choice, V, Q
    return NdpPolicy(spec, choices, vals, lam, qs)


def greedy_score(model: OutcomeModel, h: History, a: int) -> float:
    """Expected outcome value of ``a`` counted only where it beats the best so far."""
    if a in h:
        raise RepeatedAction(f"action {a} already tried")
    spec = model.spec
    mu = best_so_far(h, spec)
    p = model.predict(h, a)
    return float(sum(p[y] * v for y, v in enumerate(spec.outcome_values) if mu is None or v > mu))


def decide_greedy(model: OutcomeModel, cfg: StoppingConfig, h: History) -> int:
    if gamma(model, h, cfg):
        return STOP
    best_a, best_f = STOP, -math.inf
    for a in untried(h, model.spec.k):
        f = greedy_score(model, h, a)
        if f > best_f + TIE_TOLERANCE:
            best_a, best_f = a, f
    return best_a


class GreedyPolicy(Policy):
    """Greedy policy; decisions for a whole context are tabulated on first use."""

    kind = "greedy"

    def __init__(self, model: OutcomeModel, cfg: StoppingConfig):
        self.model = model
        self.spec = model.spec
        self.stopping = cfg
        self._tables: dict[Context, np.ndarray] = {}

    def table(self, context: Context) -> np.ndarray:
        if context not in self._tables:
            spec = self.spec
            grid = history_grid(spec)
            P = self.model.table(context)
            vals = np.asarray(spec.outcome_values)
            mu = np.where(grid.best >= 0, vals[np.maximum(grid.best, 0)], -np.inf)
            improves = vals[None, :] > mu[:, None]
            scores = np.einsum("iay,iy->ia", P, improves * vals[None, :])
            scores[grid.slot >= 0] = -np.inf
            choice = np.full(grid.n, STOP, dtype=np.int64)
            best = np.full(grid.n, -np.inf)
            for a in range(spec.k):
                better = scores[:, a] > best + TIE_TOLERANCE
                choice = np.where(better, a, choice)
                best = np.where(better, scores[:, a], best)
            choice[gamma_table(self.model, context, self.stopping)] = STOP
            self._tables[context] = choice
        return self._tables[context]

    def decide(self, h: History, rng=None) -> int:
        return int(self.table(h.context)[history_index(h, self.spec)])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "stopping": self.stopping.to_dict(), "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, spec: ProblemSpec, d: dict) -> "GreedyPolicy":
        from trialsearch.model import model_from_dict

        return cls(model_from_dict(spec, d["model"]), StoppingConfig.from_dict(d["stopping"]))


# -- exact policy evaluation under a model -----------------------------------


def expected_search_length(policy: Policy, model: OutcomeModel, context: Context) -> float:
    """Expected number of trials when ``policy`` runs on outcomes drawn from ``model``."""

    def go(h: History) -> float:
        a = policy.decide(h)
        if a == STOP:
            return 0.0
        p = model.predict(h, a)
        return 1.0 + sum(p[y] * go(extend(h, a, y)) for y in range(len(p)) if p[y] > 0)

    return go(History(context))


def worst_case_length(policy: Policy, model: OutcomeModel, context: Context) -> int:
    """Longest search over outcome sequences with positive model probability."""

    def go(h: History) -> int:
        a = policy.decide(h)
        if a == STOP:
            return 0
        p = model.predict(h, a)
        return 1 + max((go(extend(h, a, y)) for y in range(len(p)) if p[y] > 0), default=0)

    return go(History(context))


def reachable_histories(policy: Policy, model: OutcomeModel, context: Context) -> list[History]:
    out = []

    def go(h: History):
        out.append(h)
        a = policy.decide(h)
        if a == STOP:
            return
        p = model.predict(h, a)
        for y in range(len(p)):
            if p[y] > 0:
                go(extend(h, a, y))

    go(History(context))
    return out


# -- brute-force oracle ------------------------------------------------------

MAX_ORACLE_TREES = 2_000_000


def count_policies(model: OutcomeModel, cfg: StoppingConfig, context: Context) -> int:
    """Number of feasible non-repeating decision trees rooted at the empty history."""
    k, ny = model.spec.k, model.spec.n_outcomes

    def go(h: History) -> int:
        n = 1 if gamma(model, h, cfg) else 0
        for a in untried(h, k):
            prod = 1
            for y in range(ny):
                prod *= go(extend(h, a, y))
                if prod > MAX_ORACLE_TREES:
                    return MAX_ORACLE_TREES + 1
            n += prod
            if n > MAX_ORACLE_TREES:
                return MAX_ORACLE_TREES + 1
        return n

    return go(History(context))


def brute_force_optimal(model: OutcomeModel, cfg: StoppingConfig, spec: ProblemSpec | None = None,
                        context: Context | None = None) -> tuple[float, list[int]]:
    """Minimum expected search length over all feasible policies, and the first actions attaining it.

    Every policy is enumerated explicitly as the list of expected lengths of
    all subtrees; no Bellman maximization is used.
    """
    spec = spec or model.spec
    context = context or Context((0,) * len(spec.context_dims))
    if spec.k > 4 or spec.n_outcomes > 3:
        raise InstanceTooLarge(f"k={spec.k}, n_y={spec.n_outcomes} exceeds k<=4, n_y<=3")
    if count_policies(model, cfg, context) > MAX_ORACLE_TREES:
        raise InstanceTooLarge("too many policies to enumerate")

    def trees(h: History) -> list[tuple[float, int]]:
        """``(expected length, first action)`` of every feasible tree rooted at ``h``."""
        out = [(0.0, STOP)] if gamma(model, h, cfg) else []
        for a in untried(h, spec.k):
            p = model.predict(h, a)
            combos = [1.0]
            for y in range(spec.n_outcomes):
                children = [v for v, _ in trees(extend(h, a, y))]
                combos = [c + p[y] * v for c in combos for v in children]
            out.extend((c, a) for c in combos)
        return out

    all_trees = trees(History(context))
    best = min(v for v, _ in all_trees)
    firsts = sorted({a for v, a in all_trees if v <= best + 1e-9})
    return best, firsts
