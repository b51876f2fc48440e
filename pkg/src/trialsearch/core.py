"""Domain types: problem spec, contexts, histories, trajectories and datasets.

Histories are stored as an unordered mapping ``action -> outcome index``.
The canonical key of a history is the context coordinates followed by one
slot per action holding either :data:`UNTRIED` or the observed outcome
index, so two histories with the same trials in a different order share a
key.

Every history over ``k`` actions and ``n_y`` outcomes also has a dense
integer index in ``[0, (n_y + 1) ** k)``: slot ``a`` contributes
``(y + 1) * (n_y + 1) ** a``.  Extending a history always increases the
index, which the solvers rely on for backward induction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

UNTRIED = -1
STOP = -1


class TrialSearchError(Exception):
    """Base class for package errors."""


class RepeatedAction(TrialSearchError):
    """An action was tried twice within one history."""


class SpecMismatch(TrialSearchError):
    """Data does not conform to the problem spec."""


@dataclass(frozen=True)
class ProblemSpec:
    num_actions: int
    outcome_values: tuple[float, ...]
    context_dims: tuple[int, ...] = (1,)

    def __post_init__(self):
        object.__setattr__(self, "outcome_values", tuple(float(v) for v in self.outcome_values))
        object.__setattr__(self, "context_dims", tuple(int(c) for c in self.context_dims))
        if self.num_actions < 1:
            raise ValueError("num_actions must be >= 1")
        if len(self.outcome_values) < 2:
            raise ValueError("need at least two outcome values")
        if any(b <= a for a, b in zip(self.outcome_values, self.outcome_values[1:])):
            raise ValueError("outcome_values must be strictly increasing")
        if any(c < 1 for c in self.context_dims):
            raise ValueError("context cardinalities must be >= 1")

    @property
    def k(self) -> int:
        return self.num_actions

    @property
    def n_outcomes(self) -> int:
        return len(self.outcome_values)

    @property
    def n_histories(self) -> int:
        """Histories per context, ``sum_s C(k, s) n_y^s == (n_y + 1)^k``."""
        return (self.n_outcomes + 1) ** self.num_actions

    def contexts(self) -> list["Context"]:
        return [Context(c) for c in itertools.product(*(range(d) for d in self.context_dims))]

    def value(self, y: int) -> float:
        return self.outcome_values[y]

    def validate_context(self, context: "Context") -> None:
        if len(context.coords) != len(self.context_dims):
            raise SpecMismatch(
                f"context has {len(context.coords)} coordinates, spec expects {len(self.context_dims)}"
            )
        for c, d in zip(context.coords, self.context_dims):
            if not 0 <= c < d:
                raise SpecMismatch(f"context coordinate {c} out of range [0, {d})")

    def validate_trial(self, action: int, y: int) -> None:
        if not 0 <= action < self.num_actions:
            raise SpecMismatch(f"action {action} out of range [0, {self.num_actions})")
        if not 0 <= y < self.n_outcomes:
            raise SpecMismatch(f"outcome index {y} out of range [0, {self.n_outcomes})")

    def to_dict(self) -> dict:
        return {
            "num_actions": self.num_actions,
            "outcome_values": list(self.outcome_values),
            "context_dims": list(self.context_dims),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProblemSpec":
        return cls(int(d["num_actions"]), tuple(d["outcome_values"]), tuple(d.get("context_dims", (1,))))


@dataclass(frozen=True, order=True)
class Context:
    coords: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))


@dataclass(frozen=True, order=True)
class TrialRecord:
    action: int
    outcome_index: int


@dataclass(frozen=True)
class History:
    """A context plus an unordered set of trials with distinct actions."""

    context: Context
    trials: frozenset = frozenset()

    def __post_init__(self):
        trials = frozenset(
            t if isinstance(t, TrialRecord) else TrialRecord(*t) for t in self.trials
        )
        actions = [t.action for t in trials]
        if len(actions) != len(set(actions)):
            raise RepeatedAction(f"history repeats an action: {sorted(actions)}")
        object.__setattr__(self, "trials", trials)

    @classmethod
    def empty(cls, context: Context | Sequence[int] = (0,)) -> "History":
        if not isinstance(context, Context):
            context = Context(tuple(context))
        return cls(context)

    def __len__(self) -> int:
        return len(self.trials)

    def __contains__(self, action: int) -> bool:
        return any(t.action == action for t in self.trials)

    def outcome_of(self, action: int) -> int | None:
        for t in self.trials:
            if t.action == action:
                return t.outcome_index
        return None

    def sorted_trials(self) -> list[TrialRecord]:
        return sorted(self.trials)


def extend(h: History, action: int, y: int) -> History:
    """Return ``h`` with the trial ``(action, y)`` added; ``h`` is untouched."""
    if action in h:
        raise RepeatedAction(f"action {action} already tried")
    return History(h.context, h.trials | {TrialRecord(action, y)})


def untried(h: History, k: int) -> list[int]:
    tried = {t.action for t in h.trials}
    return [a for a in range(k) if a not in tried]


def best_so_far(h: History, spec: ProblemSpec) -> float | None:
    """Best observed outcome value, or ``None`` (minus infinity) if nothing was tried."""
    if not h.trials:
        return None
    return max(spec.value(t.outcome_index) for t in h.trials)


def slots(h: History, k: int) -> tuple[int, ...]:
    s = [UNTRIED] * k
    for t in h.trials:
        s[t.action] = t.outcome_index
    return tuple(s)


def canonicalize(h: History, k: int) -> tuple[int, ...]:
    """Fixed-length integer key: context coords then one slot per action."""
    return h.context.coords + slots(h, k)


def key_to_history(key: Sequence[int], spec: ProblemSpec) -> History:
    n_ctx = len(spec.context_dims)
    ctx = Context(tuple(key[:n_ctx]))
    trials = frozenset(
        TrialRecord(a, y) for a, y in enumerate(key[n_ctx:]) if y != UNTRIED
    )
    return History(ctx, trials)


def key_to_str(key: Sequence[int]) -> str:
    return ",".join(str(int(v)) for v in key)


def str_to_key(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",")) if s else ()


# -- dense history indexing --------------------------------------------------


def history_index(h: History, spec: ProblemSpec) -> int:
    base = spec.n_outcomes + 1
    idx = 0
    for t in h.trials:
        idx += (t.outcome_index + 1) * base ** t.action
    return idx


def index_to_slots(idx: int, spec: ProblemSpec) -> tuple[int, ...]:
    base = spec.n_outcomes + 1
    out = []
    for _ in range(spec.num_actions):
        idx, r = divmod(idx, base)
        out.append(r - 1)
    return tuple(out)


def index_to_history(idx: int, context: Context, spec: ProblemSpec) -> History:
    trials = frozenset(
        TrialRecord(a, y) for a, y in enumerate(index_to_slots(idx, spec)) if y != UNTRIED
    )
    return History(context, trials)


@dataclass(frozen=True)
class HistoryGrid:
    """Precomputed per-index facts for every history of one context size.

    ``slot[i, a]`` is the outcome index of action ``a`` at history ``i`` or -1,
    ``size[i]`` is ``|h|`` and ``best[i]`` the index of the best outcome value
    (-1 for the empty history).  ``stride[a]`` is added to the index when
    action ``a`` is extended with outcome ``y`` as ``(y + 1) * stride[a]``.
    """

    k: int
    n_y: int
    slot: np.ndarray
    size: np.ndarray
    best: np.ndarray
    stride: np.ndarray

    @classmethod
    def build(cls, k: int, n_y: int) -> "HistoryGrid":
        base = n_y + 1
        n = base**k
        idx = np.arange(n, dtype=np.int64)
        slot = np.empty((n, k), dtype=np.int64)
        rem = idx.copy()
        for a in range(k):
            slot[:, a] = rem % base - 1
            rem //= base
        size = (slot >= 0).sum(axis=1).astype(np.int64)
        best = slot.max(axis=1).astype(np.int64)
        stride = base ** np.arange(k, dtype=np.int64)
        return cls(k, n_y, slot, size, best, stride)

    @property
    def n(self) -> int:
        return self.slot.shape[0]


_GRIDS: dict[tuple[int, int], HistoryGrid] = {}


def history_grid(spec: ProblemSpec) -> HistoryGrid:
    key = (spec.num_actions, spec.n_outcomes)
    if key not in _GRIDS:
        _GRIDS[key] = HistoryGrid.build(*key)
    return _GRIDS[key]


def iter_histories(context: Context, spec: ProblemSpec) -> Iterator[History]:
    for i in range(spec.n_histories):
        yield index_to_history(i, context, spec)


# -- trajectories, subjects, datasets ----------------------------------------


@dataclass(frozen=True)
class Trajectory:
    context: Context
    trials: tuple[TrialRecord, ...]
    terminal: bool = True

    def __post_init__(self):
        trials = tuple(t if isinstance(t, TrialRecord) else TrialRecord(*t) for t in self.trials)
        actions = [t.action for t in trials]
        if len(actions) != len(set(actions)):
            raise RepeatedAction(f"trajectory repeats an action: {actions}")
        object.__setattr__(self, "trials", trials)

    def __len__(self) -> int:
        return len(self.trials)

    def prefixes(self) -> Iterator[tuple[History, TrialRecord]]:
        """Yield ``(h_{s-1}, (a_s, y_s))`` for each step."""
        h = History(self.context)
        for t in self.trials:
            yield h, t
            h = extend(h, t.action, t.outcome_index)

    def history(self) -> History:
        return History(self.context, frozenset(self.trials))


@dataclass(frozen=True)
class Subject:
    context: Context
    potential_outcomes: tuple[int, ...]
    moderator: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "potential_outcomes", tuple(int(y) for y in self.potential_outcomes))

    def outcome(self, action: int) -> int:
        return self.potential_outcomes[action]

    def best_value(self, spec: ProblemSpec) -> float:
        return max(spec.value(y) for y in self.potential_outcomes)


@dataclass
class Dataset:
    spec: ProblemSpec
    trajectories: list[Trajectory] = field(default_factory=list)
    subjects: list[Subject] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        k = self.spec.num_actions
        for tr in self.trajectories:
            self.spec.validate_context(tr.context)
            if len(tr) > k:
                raise SpecMismatch(f"trajectory longer than {k} actions")
            for t in tr.trials:
                self.spec.validate_trial(t.action, t.outcome_index)
        for s in self.subjects:
            self.spec.validate_context(s.context)
            if len(s.potential_outcomes) != k:
                raise SpecMismatch(f"subject has {len(s.potential_outcomes)} outcomes, expected {k}")
            for a, y in enumerate(s.potential_outcomes):
                self.spec.validate_trial(a, y)

    def __len__(self) -> int:
        return len(self.trajectories) or len(self.subjects)

    def contexts(self) -> list[Context]:
        seen = {tr.context for tr in self.trajectories} | {s.context for s in self.subjects}
        return sorted(seen)


def distinct_keys(spec: ProblemSpec, context: Context) -> int:
    """Closed-form count of histories for one context."""
    k, n_y = spec.num_actions, spec.n_outcomes
    return sum(math.comb(k, s) * n_y**s for s in range(k + 1))


def as_context(c: Context | Iterable[int] | int) -> Context:
    if isinstance(c, Context):
        return c
    if isinstance(c, int):
        return Context((c,))
    return Context(tuple(c))
