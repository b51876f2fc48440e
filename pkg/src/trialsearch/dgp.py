"""Synthetic data generation and the analytic toy instances.

The synthetic process draws a binary moderator ``z`` and binary covariates
``x``, gives every action a categorical outcome distribution shaped by a
Cauchy density whose location and scale are affine in ``[1; x; z]``, and
generates observational sequences with a behavior policy that favours
actions dissimilar to those already tried.

Randomness is drawn from counter-based Philox streams keyed by
``(seed, stream, index)`` so every subject can be generated independently of
the others and in any order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from trialsearch.core import (
    STOP,
    Context,
    Dataset,
    History,
    ProblemSpec,
    Subject,
    TrialSearchError,
    Trajectory,
    TrialRecord,
    extend,
    untried,
)
from trialsearch.model import LatentOutcomeModel

STREAM_INSTANCE = 0
STREAM_TRAIN = 1
STREAM_TEST = 2
STREAM_EVAL = 3

SCALE_FLOOR = 0.05
MAX_RESAMPLE = 100


class DegenerateScale(TrialSearchError):
    pass


def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DgpParams:
    k: int = 5
    n_y: int = 3
    d: int = 3
    v: int = 1
    w_x: float = 1.0
    p_stop: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.p_stop <= 1:
            raise ValueError("p_stop must lie in [0, 1]")
        if min(self.k, self.d, self.v) < 1 or self.n_y < 2:
            raise ValueError("k, d, v must be >= 1 and n_y >= 2")

    def spec(self) -> ProblemSpec:
        return ProblemSpec(self.k, tuple(float(y) for y in range(self.n_y)), (2,) * self.v)


def cauchy_pdf(y: np.ndarray, loc: float, scale: float) -> np.ndarray:
    return 1.0 / (np.pi * scale * (1.0 + ((y - loc) / scale) ** 2))


def _bits(i: int, n: int) -> np.ndarray:
    return np.array([(i >> j) & 1 for j in range(n)], dtype=float)


@dataclass
class DgpInstance:
    params: DgpParams
    alpha: np.ndarray          # (d,) Bernoulli parameters of z
    beta: np.ndarray           # (v, d) weights of x given z
    u1: np.ndarray             # (k, 1+v+d) location weights
    u2: np.ndarray             # (k, 1+v+d) scale weights, nonnegative
    eta: np.ndarray            # (k, 1+v+k) behavior-policy weights
    u1_neg: np.ndarray = field(init=False)
    u1_pos: np.ndarray = field(init=False)
    u2_neg: np.ndarray = field(init=False)
    u2_pos: np.ndarray = field(init=False)
    similarity: np.ndarray = field(init=False)   # (k, k)
    outcome: np.ndarray = field(init=False)      # (n_x, n_z, k, n_y)
    location: np.ndarray = field(init=False)     # (n_x, n_z, k)
    scale: np.ndarray = field(init=False)        # (n_x, n_z, k)
    p_z: np.ndarray = field(init=False)          # (n_z,)
    p_x_given_z: np.ndarray = field(init=False)  # (n_z, n_x)

    def __post_init__(self):
        p = self.params
        self.u1_neg = np.where(self.u1 < 0, self.u1, 0.0).sum(axis=1)
        self.u1_pos = np.where(self.u1 > 0, self.u1, 0.0).sum(axis=1)
        self.u2_neg = np.where(self.u2 < 0, self.u2, 0.0).sum(axis=1)
        self.u2_pos = np.where(self.u2 > 0, self.u2, 0.0).sum(axis=1)
        if np.any(self.u1_pos - self.u1_neg == 0) or np.any(self.u2_pos - self.u2_neg == 0):
            raise DegenerateScale("zero normalizer in location or scale weights")
        d1 = ((self.u1[:, None, :] - self.u1[None, :, :]) ** 2).sum(axis=2)
        d2 = ((self.u2[:, None, :] - self.u2[None, :, :]) ** 2).sum(axis=2)
        self.similarity = d1 + d2

        n_x, n_z = 2**p.v, 2**p.d
        ys = np.arange(p.n_y, dtype=float)
        self.outcome = np.empty((n_x, n_z, p.k, p.n_y))
        self.location = np.empty((n_x, n_z, p.k))
        self.scale = np.empty((n_x, n_z, p.k))
        for xi, zi in itertools.product(range(n_x), range(n_z)):
            vec = np.concatenate([[1.0], _bits(xi, p.v), _bits(zi, p.d)])
            loc = (p.n_y - 1) * (self.u1 @ vec - self.u1_neg) / (self.u1_pos - self.u1_neg)
            sc = (self.u2 @ vec - self.u2_neg) / (self.u2_pos - self.u2_neg)
            sc = np.maximum(sc, SCALE_FLOOR)
            self.location[xi, zi], self.scale[xi, zi] = loc, sc
            for a in range(p.k):
                w = cauchy_pdf(ys, loc[a], sc[a])
                self.outcome[xi, zi, a] = w / w.sum()

        self.p_z = np.array([np.prod(np.where(_bits(zi, p.d) == 1, self.alpha, 1 - self.alpha))
                             for zi in range(n_z)])
        self.p_x_given_z = np.empty((n_z, n_x))
        for zi in range(n_z):
            q = self.x_probability(_bits(zi, p.d))
            for xi in range(n_x):
                xb = _bits(xi, p.v)
                self.p_x_given_z[zi, xi] = np.prod(np.where(xb == 1, q, 1 - q))

    @property
    def spec(self) -> ProblemSpec:
        return self.params.spec()

    def x_probability(self, z: np.ndarray) -> np.ndarray:
        return np.clip(self.beta @ z, 0.02, 0.98)

    @staticmethod
    def context_of(x_index: int, v: int) -> Context:
        return Context(tuple(int(b) for b in _bits(x_index, v)))

    @staticmethod
    def x_index(context: Context) -> int:
        return sum(int(c) << j for j, c in enumerate(context.coords))

    def p_x(self) -> np.ndarray:
        return self.p_z @ self.p_x_given_z

    def true_model(self) -> LatentOutcomeModel:
        """Exact ``p(Y(a) | h)`` obtained by marginalizing the moderator."""
        p = self.params
        joint = self.p_z[:, None] * self.p_x_given_z          # (n_z, n_x)
        px = joint.sum(axis=0)
        prior, outcome, weights = {}, {}, {}
        for xi in range(2**p.v):
            ctx = self.context_of(xi, p.v)
            prior[ctx] = joint[:, xi] / px[xi]
            outcome[ctx] = self.outcome[xi]
            weights[ctx] = float(px[xi])
        return LatentOutcomeModel(self.spec, prior, outcome, weights)

    def marginal_outcomes(self) -> np.ndarray:
        """``p(Y(a) = y)`` over the whole population, shape ``(k, n_y)``."""
        joint = self.p_z[:, None] * self.p_x_given_z
        return np.einsum("zx,xzay->ay", joint, self.outcome)

    def behavior_weights(self, h: History) -> np.ndarray:
        """Normalized next-action probabilities given that the policy does not stop."""
        p = self.params
        tried = np.zeros(p.k)
        for t in h.trials:
            tried[t.action] = 1.0
        vec = np.concatenate([[1.0], np.asarray(h.context.coords, dtype=float), tried])
        logits = self.eta @ vec
        w = np.exp(logits - logits.max())
        for t in h.trials:
            w = w * self.similarity[:, t.action]
        w[tried == 1] = 0.0
        s = w.sum()
        if s == 0:
            return w
        return w / s

    def to_dict(self) -> dict:
        p = self.params
        return {
            "params": {"k": p.k, "n_y": p.n_y, "d": p.d, "v": p.v, "w_x": p.w_x,
                       "p_stop": p.p_stop, "seed": p.seed},
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "u1": self.u1.tolist(),
            "u2": self.u2.tolist(),
            "eta": self.eta.tolist(),
            "outcome": self.outcome.tolist(),
            "similarity": self.similarity.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DgpInstance":
        return cls(DgpParams(**d["params"]), np.asarray(d["alpha"]), np.asarray(d["beta"]),
                   np.asarray(d["u1"]), np.asarray(d["u2"]), np.asarray(d["eta"]))


def build_instance(params: DgpParams) -> DgpInstance:
    rng = stream_rng(params.seed, STREAM_INSTANCE)
    k, v, d = params.k, params.v, params.d
    alpha = rng.uniform(size=d)
    beta = rng.uniform(size=(v, d))
    width = 1 + v + d
    u1 = rng.normal(size=(k, width))
    u2 = np.abs(rng.normal(size=(k, width)))
    u1[:, 1 : v + 1] *= params.w_x
    u2[:, 1 : v + 1] *= params.w_x
    eta = rng.normal(size=(k, 1 + v + k))
    for _ in range(MAX_RESAMPLE):
        bad1 = np.where(u1 > 0, u1, 0).sum(1) - np.where(u1 < 0, u1, 0).sum(1) == 0
        bad2 = u2.sum(1) == 0
        bad = bad1 | bad2
        if not bad.any():
            break
        u1[bad] = rng.normal(size=(bad.sum(), width))
        u2[bad] = np.abs(rng.normal(size=(bad.sum(), width)))
        u1[bad, 1 : v + 1] *= params.w_x
        u2[bad, 1 : v + 1] *= params.w_x
    return DgpInstance(params, alpha, beta, u1, u2, eta)


def behavior_next_action(instance: DgpInstance, h: History, rng: np.random.Generator) -> int:
    k = instance.params.k
    if len(h) >= k:
        return STOP
    if len(h) >= 1 and rng.random() < instance.params.p_stop:
        return STOP
    w = instance.behavior_weights(h)
    return int(rng.choice(k, p=w))


def sample_subject(instance: DgpInstance, rng: np.random.Generator) -> Subject:
    p = instance.params
    z = (rng.random(p.d) < instance.alpha).astype(float)
    x = (rng.random(p.v) < instance.x_probability(z)).astype(int)
    xi = sum(int(b) << j for j, b in enumerate(x))
    zi = sum(int(b) << j for j, b in enumerate(z))
    dist = instance.outcome[xi, zi]
    ys = tuple(int(rng.choice(p.n_y, p=dist[a])) for a in range(p.k))
    return Subject(Context(tuple(int(b) for b in x)), ys, zi)


def sample_trajectory(instance: DgpInstance, subject: Subject, rng: np.random.Generator) -> Trajectory:
    h = History(subject.context)
    trials = []
    while True:
        a = behavior_next_action(instance, h, rng)
        if a == STOP:
            break
        y = subject.outcome(a)
        trials.append(TrialRecord(a, y))
        h = extend(h, a, y)
    return Trajectory(subject.context, tuple(trials), terminal=True)


def generate_observational(instance: DgpInstance, n: int, seed: int | None = None,
                           stream: int = STREAM_TRAIN) -> Dataset:
    seed = instance.params.seed if seed is None else seed
    trajectories = []
    for i in range(n):
        rng = stream_rng(seed, stream, i)
        subject = sample_subject(instance, rng)
        trajectories.append(sample_trajectory(instance, subject, rng))
    return Dataset(instance.spec, trajectories=trajectories)


def generate_subjects(instance: DgpInstance, n: int, seed: int | None = None,
                      stream: int = STREAM_TEST) -> list[Subject]:
    seed = instance.params.seed if seed is None else seed
    return [sample_subject(instance, stream_rng(seed, stream, i)) for i in range(n)]


# -- toy instances -------------------------------------------------------------

EXAMPLE1_PRIOR = np.array([0.20, 0.15, 0.20, 0.45])
# rows are actions, columns the latent classes: p(Y(a) = 1 | z)
EXAMPLE1_SUCCESS = np.array([
    [1, 0, 1, 0],
    [0, 1, 0, 1],
    [1, 0, 0, 1],
])


@dataclass
class ToyInstance:
    name: str
    spec: ProblemSpec
    model: LatentOutcomeModel

    @property
    def context(self) -> Context:
        return self.spec.contexts()[0]

    def sample_subject(self, rng: np.random.Generator) -> Subject:
        return self.model.sample_subject(rng, self.context)

    def exact_subjects(self) -> tuple[list[Subject], np.ndarray]:
        """Every subject type with its probability."""
        subjects, weights = [], []
        for p, z, ys in self.model.joint(self.context):
            subjects.append(Subject(self.context, ys, z))
            weights.append(p)
        return subjects, np.asarray(weights)


def build_toy(which: str, epsilon: float = 0.1) -> ToyInstance:
    """``"example1"`` (three actions, four latent classes) or ``"a6"`` (two actions)."""
    which = which.lower()
    ctx = Context((0,))
    if which == "example1":
        spec = ProblemSpec(3, (0.0, 1.0), (1,))
        succ = EXAMPLE1_SUCCESS.T.astype(float)          # (z, a)
        outcome = np.stack([1 - succ, succ], axis=2)      # (z, a, y)
        model = LatentOutcomeModel(spec, {ctx: EXAMPLE1_PRIOR}, {ctx: outcome}, {ctx: 1.0})
        return ToyInstance("example1", spec, model)
    if which == "a6":
        if not 0 < epsilon < 0.25:
            raise ValueError("the a6 instance needs 0 < epsilon < 0.25")
        spec = ProblemSpec(2, (0.5, 0.5 + epsilon, 1.0), (1,))
        outcome = np.zeros((2, 2, 3))
        outcome[0, 0, 2] = 1.0   # z=0: Y(a) = 1.0
        outcome[1, 0, 0] = 1.0   # z=1: Y(a) = 0.5
        outcome[:, 1, 1] = 1.0   # Y(b) = 0.5 + epsilon
        model = LatentOutcomeModel(spec, {ctx: np.array([0.5, 0.5])}, {ctx: outcome}, {ctx: 1.0})
        return ToyInstance("a6", spec, model)
    raise ValueError(f"unknown toy instance {which!r}")


def random_latent_model(rng: np.random.Generator, k: int, n_y: int = 2, n_contexts: int = 1,
                        n_latent: int = 3, deterministic: bool = False) -> LatentOutcomeModel:
    """Random small latent-class model, used for oracle and property checks."""
    spec = ProblemSpec(k, tuple(float(y) for y in range(n_y)), (n_contexts,))
    prior, outcome, weights = {}, {}, {}
    for c in range(n_contexts):
        ctx = Context((c,))
        prior[ctx] = rng.dirichlet(np.ones(n_latent))
        if deterministic:
            idx = rng.integers(n_y, size=(n_latent, k))
            outcome[ctx] = np.eye(n_y)[idx]
        else:
            outcome[ctx] = rng.dirichlet(np.ones(n_y) * 0.5, size=(n_latent, k))
        weights[ctx] = 1.0 / n_contexts
    return LatentOutcomeModel(spec, prior, outcome, weights)
