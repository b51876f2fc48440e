"""Outcome models ``p(Y(a) = y | h)``.

Three families are provided:

* :class:`TabularModel` -- per-history counts with a Dirichlet prior, either
  uniform or the historical prior built from sub-histories.
* :class:`LogisticModel` -- multinomial logistic regression on a
  permutation-invariant featurization of ``(h, a)``.
* :class:`LatentOutcomeModel` -- exact conditionals of a finite latent-class
  model; used for the toy instances and as the DGP ground truth.

Every model answers single queries through :meth:`OutcomeModel.predict` and
whole contexts at once through :meth:`OutcomeModel.table`, which returns an
array ``P[history_index, action, outcome]`` consumed by the kernels.
"""

from __future__ import annotations

import itertools
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from trialsearch import kernels
from trialsearch.core import (
    Context,
    Dataset,
    History,
    ProblemSpec,
    TrialSearchError,
    canonicalize,
    history_grid,
    history_index,
    index_to_history,
    key_to_str,
    str_to_key,
)


class DegenerateDataWarning(UserWarning):
    """Training data contained a single outcome class."""


class DegenerateData(TrialSearchError):
    pass


class OutcomeModel(ABC):
    spec: ProblemSpec

    @abstractmethod
    def predict(self, h: History, a: int) -> np.ndarray:
        """Probability vector over outcome indices for action ``a`` after ``h``."""

    def table(self, context: Context) -> np.ndarray:
        """Dense ``(n_histories, k, n_y)`` array of conditionals for one context.

        Entries for already-tried actions are unspecified.  Results are cached;
        models are immutable once fitted.
        """
        cache = self.__dict__.setdefault("_table_cache", {})
        if context not in cache:
            P = np.ascontiguousarray(self._build_table(context), dtype=np.float64)
            P.setflags(write=False)
            cache[context] = P
        return cache[context]

    def _build_table(self, context: Context) -> np.ndarray:
        spec = self.spec
        grid = history_grid(spec)
        P = np.full((grid.n, spec.k, spec.n_outcomes), 1.0 / spec.n_outcomes)
        for i in range(grid.n):
            h = index_to_history(i, context, spec)
            for a in range(spec.k):
                if grid.slot[i, a] < 0:
                    P[i, a] = self.predict(h, a)
        return P


# -- tabular -----------------------------------------------------------------


class PriorKind(str, Enum):
    UNINFORMED = "uninformed"
    HISTORICAL = "historical"


@dataclass(frozen=True)
class SmoothingConfig:
    prior_kind: PriorKind = PriorKind.UNINFORMED
    beta0: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "prior_kind", PriorKind(self.prior_kind))
        if not self.beta0 > 0:
            raise ValueError("beta0 must be > 0")


@dataclass
class CountTable:
    """Outcome counts ``n_y(a, h)`` stored densely per context."""

    spec: ProblemSpec
    cells: dict[Context, np.ndarray] = field(default_factory=dict)

    def _array(self, context: Context) -> np.ndarray:
        if context not in self.cells:
            self.cells[context] = np.zeros((self.spec.n_histories, self.spec.k, self.spec.n_outcomes))
        return self.cells[context]

    def add(self, h: History, a: int, y: int, n: float = 1.0) -> None:
        self._array(h.context)[history_index(h, self.spec), a, y] += n

    def counts(self, h: History, a: int) -> np.ndarray:
        arr = self.cells.get(h.context)
        if arr is None:
            return np.zeros(self.spec.n_outcomes)
        return arr[history_index(h, self.spec), a].copy()

    def dense(self, context: Context) -> np.ndarray:
        arr = self.cells.get(context)
        if arr is None:
            return np.zeros((self.spec.n_histories, self.spec.k, self.spec.n_outcomes))
        return arr

    def is_empty(self) -> bool:
        return not any(arr.any() for arr in self.cells.values())

    def items(self):
        """Yield ``(canonical_key, action, counts)`` for every nonzero cell."""
        for ctx in sorted(self.cells):
            arr = self.cells[ctx]
            for i, a in zip(*np.nonzero(arr.sum(axis=2))):
                h = index_to_history(int(i), ctx, self.spec)
                yield canonicalize(h, self.spec.k), int(a), arr[i, a]

    def to_dict(self) -> dict:
        return {
            "counts": {
                f"{key_to_str(key)}|{a}": [int(c) if float(c).is_integer() else float(c) for c in cnt]
                for key, a, cnt in self.items()
            }
        }

    @classmethod
    def from_dict(cls, spec: ProblemSpec, d: dict) -> "CountTable":
        from trialsearch.core import key_to_history

        table = cls(spec)
        for name, cnt in d["counts"].items():
            key_s, a_s = name.split("|")
            h = key_to_history(str_to_key(key_s), spec)
            arr = table._array(h.context)
            arr[history_index(h, spec), int(a_s)] += np.asarray(cnt, dtype=float)
        return table


def fit_counts(dataset: Dataset) -> CountTable:
    """Count ``(prefix history, action, outcome)`` for every step of every trajectory."""
    table = CountTable(dataset.spec)
    for tr in dataset.trajectories:
        for h, t in tr.prefixes():
            table.add(h, t.action, t.outcome_index)
    return table


def historical_weight(len_h: int, len_sub: int) -> float:
    """Kernel weight of a sub-history of length ``len_sub`` inside one of length ``len_h``."""
    if not 0 <= len_sub < len_h:
        raise ValueError("need 0 <= len_sub < len_h")
    d = len_h - len_sub - 1
    return math.exp(-(d * d)) / (len_h * (2.0**d))


def _strict_subhistories(h: History):
    trials = h.sorted_trials()
    for r in range(len(trials)):
        for sub in itertools.combinations(trials, r):
            yield History(h.context, frozenset(sub))


def posterior_distribution(
    table: CountTable, cfg: SmoothingConfig, h: History, a: int, _memo: dict | None = None
) -> np.ndarray:
    """Dirichlet posterior mean of ``p(Y(a) | h)``.

    The historical prior recurses over every strict sub-history; ``_memo``
    caches results by canonical key and may be shared across calls.
    """
    spec = table.spec
    ny = spec.n_outcomes
    memo = {} if _memo is None else _memo
    key = (canonicalize(h, spec.k), a)
    if key in memo:
        return memo[key]
    n = table.counts(h, a)
    if cfg.prior_kind is PriorKind.HISTORICAL and len(h) > 0:
        beta = np.zeros(ny)
        wsum = 0.0
        for sub in _strict_subhistories(h):
            w = historical_weight(len(h), len(sub))
            wsum += w
            beta += w * posterior_distribution(table, cfg, sub, a, memo)
        beta *= cfg.beta0 * ny / wsum
    else:
        beta = np.full(ny, cfg.beta0)
    post = (n + beta) / (n + beta).sum()
    memo[key] = post
    return post


class TabularModel(OutcomeModel):
    kind = "tabular"

    def __init__(self, counts: CountTable, smoothing: SmoothingConfig | None = None):
        self.spec = counts.spec
        self.counts = counts
        self.smoothing = smoothing or SmoothingConfig()
        self._memo: dict = {}

    def predict(self, h: History, a: int) -> np.ndarray:
        return posterior_distribution(self.counts, self.smoothing, h, a, self._memo).copy()

    def _build_table(self, context: Context) -> np.ndarray:
        grid = history_grid(self.spec)
        counts = np.ascontiguousarray(self.counts.dense(context), dtype=np.float64)
        return kernels.smooth_table(
            counts,
            float(self.smoothing.beta0),
            self.smoothing.prior_kind is PriorKind.HISTORICAL,
            grid.slot,
            grid.size,
            grid.stride,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "smoothing": {"prior_kind": self.smoothing.prior_kind.value, "beta0": self.smoothing.beta0},
            **self.counts.to_dict(),
        }

    @classmethod
    def from_dict(cls, spec: ProblemSpec, d: dict) -> "TabularModel":
        return cls(CountTable.from_dict(spec, d), SmoothingConfig(**d["smoothing"]))


def fit_tabular(dataset: Dataset, smoothing: SmoothingConfig | None = None) -> TabularModel:
    return TabularModel(fit_counts(dataset), smoothing)


# -- logistic ----------------------------------------------------------------


@dataclass(frozen=True)
class LogisticModelConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    l2_penalty: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")


def feature_dim(spec: ProblemSpec) -> int:
    k, ny = spec.k, spec.n_outcomes
    return 1 + sum(spec.context_dims) + k + k * ny + k


def featurize(spec: ProblemSpec, h: History, a: int) -> np.ndarray:
    """``[1; one-hot context; tried indicators; per-action outcome one-hots; one-hot a]``."""
    k, ny = spec.k, spec.n_outcomes
    phi = np.zeros(feature_dim(spec))
    phi[0] = 1.0
    off = 1
    for c, d in zip(h.context.coords, spec.context_dims):
        phi[off + c] = 1.0
        off += d
    for t in h.trials:
        phi[off + t.action] = 1.0
        phi[off + k + t.action * ny + t.outcome_index] = 1.0
    off += k + k * ny
    phi[off + a] = 1.0
    return phi


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class LogisticModel(OutcomeModel):
    kind = "logistic"

    def __init__(self, spec: ProblemSpec, weights: np.ndarray, degenerate: bool = False,
                 loss_history: list[float] | None = None):
        self.spec = spec
        self.weights = np.asarray(weights, dtype=float)
        self.degenerate = degenerate
        self.loss_history = loss_history or []

    def predict(self, h: History, a: int) -> np.ndarray:
        return _softmax(featurize(self.spec, h, a) @ self.weights)

    def predict_features(self, phi: np.ndarray) -> np.ndarray:
        return _softmax(phi @ self.weights)

    def _build_table(self, context: Context) -> np.ndarray:
        spec = self.spec
        grid = history_grid(spec)
        k, ny = spec.k, spec.n_outcomes
        # build features for every (history, action) pair at once
        base = np.zeros((grid.n, feature_dim(spec)))
        base[:, 0] = 1.0
        off = 1
        for c, d in zip(context.coords, spec.context_dims):
            base[:, off + c] = 1.0
            off += d
        tried = grid.slot >= 0
        base[:, off : off + k] = tried
        rows, acts = np.nonzero(tried)
        base[rows, off + k + acts * ny + grid.slot[rows, acts]] = 1.0
        off += k + k * ny
        P = np.empty((grid.n, k, ny))
        for a in range(k):
            phi = base.copy()
            phi[:, off + a] = 1.0
            P[:, a] = self.predict_features(phi)
        return P

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, spec: ProblemSpec, d: dict) -> "LogisticModel":
        return cls(spec, np.asarray(d["weights"]), bool(d.get("degenerate", False)))


def training_triples(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    spec = dataset.spec
    X, y = [], []
    for tr in dataset.trajectories:
        for h, t in tr.prefixes():
            X.append(featurize(spec, h, t.action))
            y.append(t.outcome_index)
    return np.asarray(X).reshape(-1, feature_dim(spec)), np.asarray(y, dtype=np.int64)


def fit_logistic(dataset: Dataset, cfg: LogisticModelConfig | None = None) -> LogisticModel:
    """Full-batch gradient descent on mean cross-entropy plus an L2 penalty.

    The bias row is not penalized.  If only one outcome class occurs, a
    point-mass model is returned with ``degenerate=True`` and a
    :class:`DegenerateDataWarning` is issued.
    """
    cfg = cfg or LogisticModelConfig()
    spec = dataset.spec
    X, y = training_triples(dataset)
    if len(y) == 0:
        raise DegenerateData("no training triples")
    ny = spec.n_outcomes
    classes = np.unique(y)
    if len(classes) == 1:
        warnings.warn(f"only outcome {classes[0]} observed; returning a point-mass model",
                      DegenerateDataWarning, stacklevel=2)
        W = np.zeros((X.shape[1], ny))
        W[0] = -50.0
        W[0, classes[0]] = 50.0
        return LogisticModel(spec, W, degenerate=True)

    rng = np.random.default_rng(cfg.seed)
    W = rng.normal(scale=1e-3, size=(X.shape[1], ny))
    Y = np.zeros((len(y), ny))
    Y[np.arange(len(y)), y] = 1.0
    penalty_mask = np.ones((X.shape[1], 1))
    penalty_mask[0] = 0.0
    n = len(y)
    losses = []

    def loss_grad(W):
        Z = X @ W
        Z = Z - Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        reg = 0.5 * cfg.l2_penalty * float(((W * penalty_mask) ** 2).sum())
        loss = -float((Y * logp).sum()) / n + reg
        grad = X.T @ (np.exp(logp) - Y) / n + cfg.l2_penalty * W * penalty_mask
        return loss, grad

    for _ in range(cfg.epochs):
        loss, grad = loss_grad(W)
        losses.append(loss)
        W = W - cfg.learning_rate * grad
    losses.append(loss_grad(W)[0])
    return LogisticModel(spec, W, loss_history=losses)


# -- exact latent-class model -------------------------------------------------


class LatentOutcomeModel(OutcomeModel):
    """Potential outcomes independent across actions given a latent class ``z``.

    ``prior[ctx]`` is ``p(z | x)`` and ``outcome[ctx][z, a, y]`` is
    ``p(Y(a) = y | z, x)``.  Conditionals are exact posterior predictives.
    """

    kind = "latent"

    def __init__(self, spec: ProblemSpec, prior: dict[Context, np.ndarray],
                 outcome: dict[Context, np.ndarray], context_weights: dict[Context, float] | None = None):
        self.spec = spec
        self.prior = {c: np.asarray(p, dtype=float) for c, p in prior.items()}
        self.outcome = {c: np.asarray(o, dtype=float) for c, o in outcome.items()}
        if context_weights is None:
            context_weights = {c: 1.0 / len(self.prior) for c in self.prior}
        self.context_weights = dict(context_weights)

    def contexts(self) -> list[Context]:
        return sorted(self.prior)

    def posterior_z(self, h: History) -> np.ndarray:
        post = self.prior[h.context].copy()
        out = self.outcome[h.context]
        for t in h.trials:
            post = post * out[:, t.action, t.outcome_index]
        s = post.sum()
        return post / s if s > 0 else self.prior[h.context].copy()

    def predict(self, h: History, a: int) -> np.ndarray:
        return self.posterior_z(h) @ self.outcome[h.context][:, a, :]

    def _build_table(self, context: Context) -> np.ndarray:
        grid = history_grid(self.spec)
        prior, out = self.prior[context], self.outcome[context]
        like = np.ones((grid.n, len(prior)))
        for a in range(self.spec.k):
            tried = grid.slot[:, a] >= 0
            like[tried] *= out[:, a, grid.slot[tried, a]].T
        post = like * prior
        s = post.sum(axis=1, keepdims=True)
        post = np.where(s > 0, post / np.where(s > 0, s, 1.0), prior)
        return np.einsum("iz,zay->iay", post, out)

    def joint(self, context: Context):
        """Yield ``(probability, z, outcome tuple)`` over the full joint support."""
        prior, out = self.prior[context], self.outcome[context]
        k, ny = self.spec.k, self.spec.n_outcomes
        for z, pz in enumerate(prior):
            if pz == 0:
                continue
            for ys in itertools.product(range(ny), repeat=k):
                p = pz
                for a, y in enumerate(ys):
                    p *= out[z, a, y]
                if p > 0:
                    yield p, z, ys

    def marginal(self, context: Context) -> np.ndarray:
        """``p(Y(a) = y | x)`` as a ``(k, n_y)`` array."""
        return np.einsum("z,zay->ay", self.prior[context], self.outcome[context])

    def sample_subject(self, rng: np.random.Generator, context: Context | None = None):
        from trialsearch.core import Subject

        if context is None:
            ctxs = self.contexts()
            w = np.array([self.context_weights[c] for c in ctxs])
            context = ctxs[rng.choice(len(ctxs), p=w / w.sum())]
        prior, out = self.prior[context], self.outcome[context]
        z = int(rng.choice(len(prior), p=prior))
        ys = tuple(int(rng.choice(self.spec.n_outcomes, p=out[z, a])) for a in range(self.spec.k))
        return Subject(context, ys, z)

    def to_dict(self) -> dict:
        ctxs = self.contexts()
        return {
            "kind": self.kind,
            "contexts": [list(c.coords) for c in ctxs],
            "context_weights": [self.context_weights[c] for c in ctxs],
            "prior": [self.prior[c].tolist() for c in ctxs],
            "outcome": [self.outcome[c].tolist() for c in ctxs],
        }

    @classmethod
    def from_dict(cls, spec: ProblemSpec, d: dict) -> "LatentOutcomeModel":
        ctxs = [Context(tuple(c)) for c in d["contexts"]]
        return cls(
            spec,
            {c: np.asarray(p) for c, p in zip(ctxs, d["prior"])},
            {c: np.asarray(o) for c, o in zip(ctxs, d["outcome"])},
            dict(zip(ctxs, d["context_weights"])),
        )


MODEL_KINDS = {m.kind: m for m in (TabularModel, LogisticModel, LatentOutcomeModel)}


def model_from_dict(spec: ProblemSpec, d: dict) -> OutcomeModel:
    return MODEL_KINDS[d["kind"]].from_dict(spec, d)
