"""Loss streams revealed to the participants.

Every supported loss is a single-sample least-squares term
``f(w) = 0.5 * (x @ w - y) ** 2``.  The one-dimensional counter-example
losses ``0.5 * (w - c) ** 2`` are the special case ``x = [1], y = c``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import Cohort, DecisionVector, DimensionError, RandomStream, as_vector

KINDS = ("iid_ls", "noniid_ls", "example1", "example3")
_ALIASES = {
    "iid_least_squares": "iid_ls",
    "noniid_least_squares": "noniid_ls",
    "example1_fixed": "example1",
    "example3_random_pair": "example3",
}

# stream channels, the last-but-one element of a RandomStream path
CH_INSTANCE = 0
CH_LOSS = 1
CH_ATTACK = 2
CH_PILOT = 3

CHUNK = 1024
PILOT_DRAWS = 10_000
RIDGE = 1e-10
MAX_CONDITION = 1e12

# cluster shifts for the non-i.i.d. generator: (regressor mean, truth mean)
NONIID_CLUSTERS = ((0.0, 0.0), (1.0, 0.2), (2.0, 0.4))
NONIID_TRUTH_VAR = 0.5


def canonical_kind(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in KINDS:
        raise ValueError(f"unknown loss stream {name!r}; choose from {', '.join(KINDS)}")
    return key


@dataclass(frozen=True)
class LossStreamSpec:
    """Which losses the environment reveals.

    ``noise_std`` is the label-noise standard deviation (the default matches
    a label-noise variance of 0.1); ``sigma`` is the counter-example offset.
    ``ground_truth`` is filled in per trial for the i.i.d. stream.
    """

    kind: str = "iid_ls"
    d: int = 10
    noise_std: float = math.sqrt(0.1)
    sigma: float = 1.0
    ground_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.kind in ("example1", "example3") and self.d != 1:
            raise ValueError(f"{self.kind} is one-dimensional; set d = 1")
        if self.ground_truth is not None:
            object.__setattr__(self, "ground_truth", as_vector(self.ground_truth, self.d))

    @property
    def is_synthetic(self) -> bool:
        return self.kind in ("iid_ls", "noniid_ls")

    @property
    def has_expected_loss(self) -> bool:
        return self.kind != "noniid_ls"


@dataclass(frozen=True)
class LossSample:
    """One revealed loss ``0.5 * (x @ w - y) ** 2``."""

    x: np.ndarray
    y: float

    @classmethod
    def center(cls, c: float) -> "LossSample":
        """The loss ``0.5 * (w - c) ** 2`` on a scalar decision."""
        return cls(np.ones(1), float(c))

    def value(self, w) -> float:
        r = float(np.asarray(self.x) @ np.asarray(w)) - self.y
        return 0.5 * r * r


def gradient(sample: LossSample, w) -> DecisionVector:
    x = np.asarray(sample.x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise DimensionError(f"sample has dimension {x.shape}, decision {w.shape}")
    return x * (x @ w - sample.y)


def batch_gradients(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Row-wise gradients for stacked samples ``x`` (n, d) and labels ``y`` (n,)."""
    return x * (x @ w - y)[:, None]


def example1_center(j: int, sigma: float) -> float:
    """Odd participants are pulled to ``+sigma``, even ones to ``-sigma``."""
    return sigma if j % 2 == 1 else -sigma


def noniid_cluster(j: int, n: int) -> int:
    return (j - 1) // (n // 3)


class LossStream:
    """One trial's realization of a :class:`LossStreamSpec`.

    Draws are keyed by (trial, participant, channel, chunk), so ``draw(t)``
    returns the same samples whatever order steps are requested in.
    """

    def __init__(self, spec: LossStreamSpec, cohort: Cohort, stream: RandomStream):
        if spec.kind == "noniid_ls" and cohort.n % 3:
            raise ValueError(
                f"non-i.i.d. stream splits participants into 3 clusters; n={cohort.n} "
                "is not divisible by 3"
            )
        self.cohort = cohort
        self.stream = stream
        n, d = cohort.n, spec.d
        self.x_mean = np.zeros(n)
        self.truths = np.zeros((n, d))
        if spec.kind == "iid_ls":
            truth = spec.ground_truth
            if truth is None:
                truth = stream.child(0, CH_INSTANCE).generator().standard_normal(d)
                spec = dataclasses.replace(spec, ground_truth=truth)
            self.truths[:] = truth
        elif spec.kind == "noniid_ls":
            gen = stream.child(0, CH_INSTANCE).generator()
            shared = gen.standard_normal(d)
            cluster_truth = [
                shared + gen.normal(shift, math.sqrt(NONIID_TRUTH_VAR), d)
                for _, shift in NONIID_CLUSTERS
            ]
            for j in range(1, n + 1):
                c = noniid_cluster(j, n)
                self.x_mean[j - 1] = NONIID_CLUSTERS[c][0]
                self.truths[j - 1] = cluster_truth[c]
        elif spec.kind == "example1":
            self.centers = np.array([example1_center(j, spec.sigma) for j in range(1, n + 1)])
        self.spec = spec
        self._chunk_index = -1
        self._x = None
        self._y = None

    def _load(self, index: int):
        spec, n, d = self.spec, self.cohort.n, self.spec.d
        if spec.kind == "example1":
            x = np.ones((CHUNK, n, 1))
            y = np.broadcast_to(self.centers, (CHUNK, n)).copy()
        else:
            x = np.empty((CHUNK, n, d))
            y = np.empty((CHUNK, n))
            for j in range(1, n + 1):
                gen = self.stream.child(j, CH_LOSS, index).generator()
                if spec.kind == "example3":
                    heads = gen.random(CHUNK) < 0.5
                    x[:, j - 1, 0] = 1.0
                    y[:, j - 1] = np.where(heads, spec.sigma, -spec.sigma)
                else:
                    xs = gen.standard_normal((CHUNK, d)) + self.x_mean[j - 1]
                    noise = gen.standard_normal(CHUNK) * spec.noise_std
                    x[:, j - 1] = xs
                    y[:, j - 1] = xs @ self.truths[j - 1] + noise
        self._x, self._y, self._chunk_index = x, y, index

    def draw(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Samples of step ``t`` (1-based) for all ``n`` participants, stacked."""
        if t < 1:
            raise ValueError("steps are 1-based")
        index, offset = divmod(t - 1, CHUNK)
        if index != self._chunk_index:
            self._load(index)
        return self._x[offset], self._y[offset]


def draw_losses(stream: LossStream, t: int) -> dict[int, LossSample]:
    """Per-participant samples of step ``t`` keyed by 1-based participant id."""
    x, y = stream.draw(t)
    return {j: LossSample(x[j - 1].copy(), float(y[j - 1])) for j in range(1, stream.cohort.n + 1)}


class HindsightAccumulator:
    """Running normal equations of the averaged honest losses.

    Holds ``A = sum_t mean_j x x^T``, ``r = sum_t mean_j x y`` and
    ``c = sum_t mean_j y^2 / 2`` so the cumulative loss is
    ``0.5 w^T A w - r^T w + c``.
    """

    def __init__(self, d: int):
        self.d = d
        self.gram = np.zeros((d, d))
        self.moment = np.zeros(d)
        self.const = 0.0
        self.steps = 0

    def add(self, x: np.ndarray, y: np.ndarray) -> None:
        h = x.shape[0]
        self.gram += x.T @ x / h
        self.moment += x.T @ y / h
        self.const += 0.5 * float(y @ y) / h
        self.steps += 1

    def total_loss(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(0.5 * w @ self.gram @ w - self.moment @ w + self.const)

    def solve(self) -> tuple[DecisionVector, float]:
        """Minimizer and minimum of the accumulated loss.

        A ridge of ``RIDGE`` is added when the Gram matrix is worse
        conditioned than ``MAX_CONDITION``.
        """
        if self.steps == 0:
            raise ValueError("hindsight minimizer needs at least one step")
        if self.d == 1:
            lam = np.array([self.gram[0, 0]])
            vecs = np.ones((1, 1))
        else:
            lam, vecs = np.linalg.eigh(self.gram)
        if lam[0] <= lam[-1] / MAX_CONDITION:
            lam = lam + RIDGE
        w = vecs @ ((vecs.T @ self.moment) / lam)
        return w, self.total_loss(w)


def hindsight_minimizer(history: Sequence) -> tuple[DecisionVector, float]:
    """Best fixed decision for a history of per-step honest samples.

    Each history entry is either a mapping/sequence of :class:`LossSample`
    or a stacked ``(x, y)`` pair.
    """
    if not history:
        raise ValueError("hindsight minimizer needs at least one step")
    acc = None
    for step in history:
        x, y = _stack_step(step)
        if acc is None:
            acc = HindsightAccumulator(x.shape[1])
        acc.add(x, y)
    return acc.solve()


def _stack_step(step) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(step, tuple) and len(step) == 2 and isinstance(step[0], np.ndarray):
        return np.atleast_2d(step[0]).astype(float), np.atleast_1d(step[1]).astype(float)
    samples = list(step.values()) if isinstance(step, Mapping) else list(step)
    x = np.stack([np.asarray(s.x, dtype=float) for s in samples])
    y = np.array([s.y for s in samples], dtype=float)
    return x, y


def second_moment(spec: LossStreamSpec, cohort: Cohort | None = None) -> np.ndarray:
    """Analytic ``E[x x^T]`` averaged over the participants' regressor laws."""
    d = spec.d
    if spec.kind == "noniid_ls":
        shifts = np.array([m for m, _ in NONIID_CLUSTERS])
        return np.eye(d) + np.mean(shifts**2) * np.ones((d, d))
    return np.eye(d)


def expected_loss_function(spec: LossStreamSpec, cohort: Cohort | None = None) -> Callable[[np.ndarray], float]:
    """``F`` as a callable on validated decision vectors (see :func:`expected_loss`)."""
    if spec.kind == "iid_ls":
        if spec.ground_truth is None:
            raise ValueError("i.i.d. stream has no ground truth yet; realize it first")
        truth = np.asarray(spec.ground_truth)
        floor = 0.5 * spec.noise_std**2

        def f(w):
            gap = w - truth
            return float(0.5 * (gap @ gap) + floor)

        return f
    if spec.kind == "example3":
        s2 = spec.sigma**2
        return lambda w: float(0.5 * (w @ w + s2))
    if spec.kind == "example1":
        centers = _honest_centers(spec, cohort)
        return lambda w: float(0.5 * np.mean((w[0] - centers) ** 2))
    raise ValueError("the non-i.i.d. stream has no common expected loss; stochastic regret is undefined")


def expected_loss(spec: LossStreamSpec, w, cohort: Cohort | None = None) -> float:
    """Expected honest loss ``F(w)``.

    For ``example1`` this is the average over the honest participants'
    (deterministic) losses, which is how the momentum counter-example
    measures its regret.
    """
    return expected_loss_function(spec, cohort)(as_vector(w, spec.d))


def expected_minimizer(spec: LossStreamSpec, cohort: Cohort | None = None) -> DecisionVector:
    if spec.kind == "iid_ls":
        if spec.ground_truth is None:
            raise ValueError("i.i.d. stream has no ground truth yet; realize it first")
        return as_vector(spec.ground_truth)
    if spec.kind == "example3":
        return as_vector(np.zeros(1))
    if spec.kind == "example1":
        return as_vector([np.mean(_honest_centers(spec, cohort))])
    raise ValueError("the non-i.i.d. stream has no common expected loss; stochastic regret is undefined")


def _honest_centers(spec: LossStreamSpec, cohort: Cohort | None) -> np.ndarray:
    cohort = cohort or Cohort(3, frozenset({3}))
    return np.array([example1_center(j, spec.sigma) for j in cohort.honest_ids])


def smoothness_and_convexity(spec: LossStreamSpec, cohort: Cohort, seed: int) -> tuple[float, float]:
    """``(L, mu)`` fed to the step-size schedules.

    Counter-example losses have ``L = mu = 1``.  For least squares ``L`` is the
    largest ``||x||^2`` of a pilot draw and ``mu`` the smallest eigenvalue of
    the analytic second moment.
    """
    if not spec.is_synthetic:
        return 1.0, 1.0
    gen = RandomStream(seed, (0, 0, CH_PILOT)).generator()
    x = gen.standard_normal((PILOT_DRAWS, spec.d))
    if spec.kind == "noniid_ls":
        clusters = np.array([noniid_cluster(j, cohort.n) for j in range(1, cohort.n + 1)])
        shifts = np.array([NONIID_CLUSTERS[c][0] for c in clusters])
        x += shifts[np.arange(PILOT_DRAWS) % cohort.n, None]
    L = float(np.max(np.einsum("ij,ij->i", x, x)))
    mu = float(np.linalg.eigvalsh(second_moment(spec, cohort))[0])
    return L, mu


def deviation_audit(stream: LossStream, w, steps: int) -> float:
    """Largest ``||grad_j - mean honest grad||^2`` over the first ``steps`` steps at ``w``."""
    mask = stream.cohort.honest_mask()
    w = np.asarray(w, dtype=np.float64)
    worst = 0.0
    for t in range(1, steps + 1):
        x, y = stream.draw(t)
        g = batch_gradients(x[mask], y[mask], w)
        dev = g - g.mean(axis=0)
        worst = max(worst, float(np.max(np.einsum("ij,ij->i", dev, dev))))
    return worst


def mean_gradient_audit(stream: LossStream, w, steps: int) -> float:
    """Largest ``||mean honest grad at w||^2`` over the first ``steps`` steps."""
    mask = stream.cohort.honest_mask()
    w = np.asarray(w, dtype=np.float64)
    worst = 0.0
    for t in range(1, steps + 1):
        x, y = stream.draw(t)
        g = batch_gradients(x[mask], y[mask], w).mean(axis=0)
        worst = max(worst, float(g @ g))
    return worst
