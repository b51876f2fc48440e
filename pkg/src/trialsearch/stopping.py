"""Near-optimality statistic ``rho(h)`` and the stop indicator.

``rho(h)`` is the probability that some untried action beats the best
observed outcome by more than ``epsilon``.  It is computed exactly by
chaining one-step conditionals over a future action ordering, or bounded
from above (union bound) or below (best single action).

Two routes are provided: :func:`rho` recurses through
:meth:`OutcomeModel.predict` for one history; :func:`rho_table` evaluates
every history of a context through the dense kernels.  They agree to
rounding and serve as checks on each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from trialsearch import kernels
from trialsearch.core import Context, History, best_so_far, extend, history_grid, untried
from trialsearch.model import OutcomeModel

# absorbs rounding in rho sums compared against the threshold
STOP_TOLERANCE = 1e-12


class BoundMode(str, Enum):
    EXACT = "exact"
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class StoppingConfig:
    epsilon: float = 0.0
    delta: float = 0.0
    alpha: float = 1.0
    bound_mode: BoundMode = BoundMode.EXACT
    average_orders: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bound_mode", BoundMode(self.bound_mode))
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not 0 <= self.delta <= 1:
            raise ValueError("delta must lie in [0, 1]")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.average_orders and self.bound_mode is not BoundMode.EXACT:
            raise ValueError("average_orders only applies to the exact statistic")

    @property
    def threshold(self) -> float:
        """Confounding-adjusted confidence level ``delta / alpha``."""
        return self.delta / self.alpha

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "alpha": self.alpha,
            "bound_mode": self.bound_mode.value,
            "average_orders": self.average_orders,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StoppingConfig":
        return cls(**d)


def may_stop(rho_value: float, cfg: StoppingConfig) -> bool:
    return rho_value <= cfg.threshold + STOP_TOLERANCE


def rho(model: OutcomeModel, h: History, epsilon: float = 0.0,
        mode: BoundMode | str = BoundMode.EXACT, average_orders: bool = False) -> float:
    mode = BoundMode(mode)
    spec = model.spec
    values = spec.outcome_values
    actions = untried(h, spec.k)
    if not actions:
        return 0.0
    mu = best_so_far(h, spec)
    thr = -np.inf if mu is None else mu + epsilon

    if mode is not BoundMode.EXACT:
        exceed = []
        for a in actions:
            p = model.predict(h, a)
            exceed.append(sum(p[y] for y in range(spec.n_outcomes) if values[y] > thr))
        return min(1.0, sum(exceed)) if mode is BoundMode.UPPER else max(exceed)

    def tail(g: History, remaining: tuple[int, ...]) -> float:
        if not remaining:
            return 0.0
        firsts = remaining if average_orders else remaining[:1]
        total = 0.0
        for a in firsts:
            rest = tuple(b for b in remaining if b != a)
            p = model.predict(g, a)
            acc = 0.0
            for y in range(spec.n_outcomes):
                if values[y] > thr:
                    acc += p[y]
                else:
                    acc += p[y] * tail(extend(g, a, y), rest)
            total += acc
        return total / len(firsts)

    return tail(h, tuple(actions))


def gamma(model: OutcomeModel, h: History, cfg: StoppingConfig) -> bool:
    """True when stopping at ``h`` satisfies the ``(epsilon, delta/alpha)`` constraint."""
    if not untried(h, model.spec.k):
        return True
    return may_stop(rho(model, h, cfg.epsilon, cfg.bound_mode, cfg.average_orders), cfg)


def rho_table(model: OutcomeModel, context: Context, epsilon: float = 0.0,
              mode: BoundMode | str = BoundMode.EXACT, average_orders: bool = False) -> np.ndarray:
    """``rho`` for every history index of ``context``."""
    mode = BoundMode(mode)
    spec = model.spec
    grid = history_grid(spec)
    P = model.table(context)
    values = np.asarray(spec.outcome_values, dtype=np.float64)
    if mode is BoundMode.EXACT:
        return kernels.rho_exact_table(P, values, grid.slot, grid.best, grid.stride,
                                       float(epsilon), bool(average_orders))
    return kernels.rho_bound_table(P, values, grid.slot, grid.best, float(epsilon),
                                   mode is BoundMode.UPPER)


def gamma_table(model: OutcomeModel, context: Context, cfg: StoppingConfig) -> np.ndarray:
    """Boolean stop-permitted flag for every history index of ``context``."""
    grid = history_grid(model.spec)
    r = rho_table(model, context, cfg.epsilon, cfg.bound_mode, cfg.average_orders)
    return (r <= cfg.threshold + STOP_TOLERANCE) | (grid.size == model.spec.k)
