"""Server-side aggregation rules and their robustness constants.

Every rule takes the stacked payloads ``z`` (row ``k`` is participant
``k + 1``) and returns one vector.  All tie-breaks resolve to the smallest
sender index so that results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .core import (
    Cohort,
    DecisionVector,
    DimensionError,
    MessageLike,
    as_vector,
    honest_mean,
    max_honest_deviation,
    stack_messages,
)

RULES = ("mean", "coomed", "trimean", "geomed", "krum", "cc", "phocas", "faba")
ROBUST_RULES = RULES[1:]
_ALIASES = {"centered_clipping": "cc", "median": "coomed", "trimmed_mean": "trimean"}

# smoothing added to every Weiszfeld denominator
WEISZFELD_EPS = 1e-8
# relative slack on the certificate comparison
CERTIFY_RTOL = 1e-9
# Weiszfeld iterations between optimality tests of the nearest input point
VERTEX_CHECK_EVERY = 32
# Weiszfeld hands over to Newton once a step is below this fraction of the
# distance to the nearest input point
NEWTON_SWITCH = 0.05
NEWTON_MAX_ITERS = 50
# relative slack so that boundary cases (flat minimizer sets) are not snapped to a point
VERTEX_MARGIN = 1e-12
NEWTON_BACKTRACKS = 40


class DomainError(ValueError):
    """A rule was asked to run outside its admissible Byzantine fraction."""


def canonical_rule(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in RULES:
        raise ValueError(f"unknown aggregation rule {name!r}; choose from {', '.join(RULES)}")
    return key


@dataclass(frozen=True)
class AggregatorSpec:
    """An aggregation rule plus its hyperparameters.

    ``q`` is the estimated Byzantine count used by trimean, krum, phocas and
    faba; ``None`` means "use the true count" and is resolved by the caller.
    ``tau=None`` selects the oracle clipping radius ``||v - honest_mean|| + zeta``,
    which only callers that know the honest messages (the certifier and the
    simulator) can supply; :func:`aggregate` needs a numeric ``tau``.
    """

    rule: str = "mean"
    q: Optional[int] = None
    tau: Optional[float] = 10.0
    inner_iters: int = 1
    weiszfeld_tol: float = 1e-10
    weiszfeld_max_iters: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "rule", canonical_rule(self.rule))
        if self.q is not None and self.q < 0:
            raise ValueError("q must be non-negative")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be at least 1")
        if not self.weiszfeld_tol > 0:
            raise ValueError("weiszfeld_tol must be positive")
        if self.weiszfeld_max_iters < 1:
            raise ValueError("weiszfeld_max_iters must be at least 1")

    def with_q(self, q: int) -> "AggregatorSpec":
        return AggregatorSpec(
            self.rule, q, self.tau, self.inner_iters, self.weiszfeld_tol, self.weiszfeld_max_iters
        )

    def check_domain(self, n: int) -> None:
        """Raise :class:`DomainError` if ``q`` is inadmissible for ``n`` inputs."""
        q = self.q or 0
        if self.rule in ("trimean", "phocas") and not 2 * q < n:
            raise DomainError(f"{self.rule} needs 2q < n (q={q}, n={n})")
        if self.rule == "krum" and not (n - q - 2 >= 1 and 2 * q < n):
            raise DomainError(f"krum needs q <= n - 3 and 2q < n (q={q}, n={n})")
        if self.rule == "faba" and not 3 * q < n:
            raise DomainError(f"faba needs 3q < n (q={q}, n={n})")


def _mean(rows: np.ndarray) -> np.ndarray:
    # shifted by the first row so unanimous inputs come back bit-identical
    ref = rows[0]
    return ref + (rows - ref).mean(axis=0)


def mean(messages: MessageLike) -> DecisionVector:
    return _mean(stack_messages(messages))


def coomed(messages: MessageLike) -> DecisionVector:
    """Coordinate-wise median; even counts average the two central values."""
    z = np.sort(stack_messages(messages), axis=0)
    n = z.shape[0]
    mid = n // 2
    if n % 2:
        return z[mid].copy()
    return (z[mid - 1] + z[mid]) / 2.0


def trimean(messages: MessageLike, q: int) -> DecisionVector:
    """Coordinate-wise mean after dropping the ``q`` largest and ``q`` smallest."""
    z = stack_messages(messages)
    n = z.shape[0]
    if not 0 <= 2 * q < n:
        raise DomainError(f"trimmed mean needs 2q < n (q={q}, n={n})")
    z = np.sort(z, axis=0)
    return _mean(z[q : n - q])


def geomed(
    messages: MessageLike,
    tol: float = 1e-10,
    max_iters: int = 1000,
    eps: float = WEISZFELD_EPS,
) -> DecisionVector:
    """Geometric median by smoothed Weiszfeld iteration with a Newton finish.

    Weiszfeld starts from the coordinate-wise mean.  Once its steps fall
    below ``NEWTON_SWITCH`` times the distance to the nearest point (or below
    ``tol``, or ``max_iters`` is reached) safeguarded Newton steps on the unsmoothed
    objective take over until a step moves less than ``tol``.  That removes
    both the bias of the smoothing and Weiszfeld's crawl near input points.
    The input point nearest to the iterate is tested against the subgradient
    optimality condition along the way, so a minimizer sitting on an input
    point is returned exactly.
    """
    z = stack_messages(messages)
    y = _mean(z)
    for i in range(max_iters):
        diff = z - y
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if i % VERTEX_CHECK_EVERY == 0 and _is_optimal_vertex(z, int(np.argmin(dist))):
            return z[int(np.argmin(dist))].copy()
        w = 1.0 / (dist + eps)
        step = (w @ diff) / w.sum()
        y = y + step
        moved = math.sqrt(step @ step)
        if moved < tol or moved < NEWTON_SWITCH * dist.min():
            break
    y = _newton_polish(z, y, tol)
    diff = z - y
    k = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
    return z[k].copy() if _is_optimal_vertex(z, k) else y


def _summed_distance(z: np.ndarray, y: np.ndarray) -> float:
    diff = z - y
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff)).sum())


def _distance_gradient(z: np.ndarray, y: np.ndarray):
    """Gradient of the summed distance at ``y`` plus the pieces Newton needs.

    Returns ``None`` when ``y`` coincides with an input point (no gradient).
    """
    diff = y - z
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if dist.min() == 0.0:
        return None
    inv = 1.0 / dist
    return inv @ diff, diff, inv


def _newton_polish(z: np.ndarray, y: np.ndarray, tol: float) -> np.ndarray:
    """Damped Newton steps on the summed distance.

    A step is accepted only if it shrinks the gradient norm, which (unlike the
    objective value) stays measurable down to machine precision and is
    exactly zero on flat stretches of minimizers, and does not raise the
    objective beyond rounding.
    """
    n, d = z.shape
    # a sum of n unit vectors cannot be resolved below this
    noise_floor = 4.0 * n * np.finfo(float).eps
    state = _distance_gradient(z, y)
    ceiling = _summed_distance(z, y) * (1.0 + 1e-13)
    for _ in range(NEWTON_MAX_ITERS):
        if state is None:
            break
        grad, diff, inv = state
        gnorm = math.sqrt(grad @ grad)
        if gnorm <= noise_floor:
            break
        hess = inv.sum() * np.eye(d) - (diff * (inv**3)[:, None]).T @ diff
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        t = 1.0
        for _ in range(NEWTON_BACKTRACKS):
            cand = y - t * step
            cand_state = _distance_gradient(z, cand)
            if (
                cand_state is not None
                and math.sqrt(cand_state[0] @ cand_state[0]) < gnorm
                and _summed_distance(z, cand) <= ceiling
            ):
                break
            t *= 0.5
        else:
            break
        y, state = cand, cand_state
        if t * math.sqrt(step @ step) < tol:
            break
    return y


def _is_optimal_vertex(z: np.ndarray, k: int) -> bool:
    """Whether input point ``k`` is the unique minimizer of the summed distance.

    With multiplicity ``m`` that holds iff the unit vectors pointing from the
    other points to ``z[k]`` sum to a vector of norm below ``m``.
    """
    d = z[k] - z
    dist = np.sqrt(np.einsum("ij,ij->i", d, d))
    others = dist > 0.0
    copies = z.shape[0] - int(np.count_nonzero(others))
    if copies == z.shape[0]:
        return True
    pull = (d / np.where(others, dist, np.inf)[:, None]).sum(axis=0)
    return math.sqrt(pull @ pull) < copies * (1.0 - VERTEX_MARGIN)


def geomed_objective(messages: MessageLike, point) -> float:
    z = stack_messages(messages)
    return float(np.sqrt(((z - np.asarray(point)) ** 2).sum(axis=1)).sum())


def krum_scores(messages: MessageLike, q: int) -> np.ndarray:
    """Sum of squared distances from each message to its ``n - q - 2`` nearest others."""
    z = stack_messages(messages)
    n = z.shape[0]
    k = n - q - 2
    if k < 1:
        raise DomainError(f"krum needs n - q - 2 >= 1 (q={q}, n={n})")
    diff = z[:, None, :] - z[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(sq, np.inf)
    return np.sort(sq, axis=1)[:, :k].sum(axis=1)


def krum(messages: MessageLike, q: int) -> DecisionVector:
    z = stack_messages(messages)
    return z[int(np.argmin(krum_scores(z, q)))].copy()


Radius = Union[float, Callable[[np.ndarray], float]]


def centered_clipping(
    messages: MessageLike,
    prev_decision,
    tau: Radius,
    inner_iters: int = 1,
) -> DecisionVector:
    """Centered clipping started from the previous decision.

    ``tau`` is a radius or a callable giving the radius for the current
    center (used by the certifier's oracle radius).
    """
    z = stack_messages(messages)
    v = np.asarray(prev_decision, dtype=np.float64)
    if v.shape != z.shape[1:]:
        raise DimensionError(f"prev_decision has shape {v.shape}, messages {z.shape[1:]}")
    if inner_iters < 1:
        raise ValueError("inner_iters must be at least 1")
    for _ in range(inner_iters):
        radius = tau(v) if callable(tau) else tau
        diff = z - v
        norms = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        with np.errstate(divide="ignore"):
            scale = np.where(norms > radius, radius / norms, 1.0)
        v = v + (diff * scale[:, None]).mean(axis=0)
    return v


def phocas(messages: MessageLike, q: int) -> DecisionVector:
    """Mean of the ``n - q`` messages nearest to the trimmed mean."""
    z = stack_messages(messages)
    anchor = trimean(z, q)
    diff = z - anchor
    dist = np.einsum("ij,ij->i", diff, diff)
    keep = np.sort(np.argsort(dist, kind="stable")[: z.shape[0] - q])
    return _mean(z[keep])


def faba(messages: MessageLike, q: int) -> DecisionVector:
    """Drop the message farthest from the running mean ``q`` times, then average."""
    z = stack_messages(messages)
    n = z.shape[0]
    # the removal loop only needs q < n; the robustness guarantee needs 3q < n,
    # which AggregatorSpec.check_domain enforces
    if not 0 <= q < n:
        raise DomainError(f"faba needs 0 <= q < n (q={q}, n={n})")
    keep = np.arange(n)
    for _ in range(q):
        rest = z[keep]
        diff = rest - _mean(rest)
        far = int(np.argmax(np.einsum("ij,ij->i", diff, diff)))
        keep = np.delete(keep, far)
    return _mean(z[keep])


def aggregate(spec: AggregatorSpec, messages: MessageLike, prev_decision=None) -> DecisionVector:
    """Apply ``spec`` to one round of messages.

    ``prev_decision`` is only read by centered clipping.
    """
    z = stack_messages(messages)
    n = z.shape[0]
    spec.check_domain(n)
    q = spec.q or 0
    rule = spec.rule
    if rule == "mean":
        return _mean(z)
    if rule == "coomed":
        return coomed(z)
    if rule == "trimean":
        return trimean(z, q)
    if rule == "geomed":
        return geomed(z, spec.weiszfeld_tol, spec.weiszfeld_max_iters)
    if rule == "krum":
        return krum(z, q)
    if rule == "cc":
        if prev_decision is None:
            raise ValueError("centered clipping needs the previous decision")
        if spec.tau is None:
            raise ValueError("centered clipping needs a numeric tau when honest messages are unknown")
        return centered_clipping(z, prev_decision, spec.tau, spec.inner_iters)
    if rule == "phocas":
        return phocas(z, q)
    if rule == "faba":
        return faba(z, q)
    raise AssertionError(rule)


@dataclass(frozen=True)
class BoundConstant:
    """Right-hand side of the robust-aggregation bound for one configuration.

    The bound reads ``c_alpha_squared * zeta2 + extra_term`` where only
    centered clipping has a non-zero ``extra_term``
    (``extra_coefficient * ||v0 - honest_mean||^2``).
    """

    rule: str
    alpha: float
    n: int
    b: int
    d: int
    c_alpha_squared: float
    extra_coefficient: float = 0.0
    extra_term: float = 0.0

    def bound(self, zeta2: float) -> float:
        return self.c_alpha_squared * zeta2 + self.extra_term


def bound_constant(
    rule: str,
    n: int,
    b: int,
    d: int,
    spec: AggregatorSpec | None = None,
    center_gap_sq: float = 0.0,
) -> BoundConstant:
    """Closed-form robustness constant of ``rule`` at ``(n, b, d)``.

    Constants assume the Byzantine count is estimated exactly (``q = b``).
    The plain mean gets its Byzantine-free constant 0, so any shift caused
    by Byzantine inputs shows up as a failed certificate.
    """
    rule = canonical_rule(rule)
    if not (n >= 1 and 0 <= b and 2 * b < n and d >= 1):
        raise DomainError(f"need n >= 1, d >= 1 and 0 <= b < n/2 (n={n}, b={b}, d={d})")
    alpha = b / n
    extra_coef = 0.0
    if rule == "mean":
        c2 = 0.0
    elif rule == "coomed":
        delta_sq = min(4.0 * (n - b), float(d))
        c2 = (1.0 / (1.0 - alpha)) ** 2 * 0.5 * delta_sq
    elif rule == "trimean":
        c2 = 2.0 * b * (n - b) / (n - 2 * b) ** 2
    elif rule == "geomed":
        c2 = (2.0 * (1.0 - alpha) / (1.0 - 2.0 * alpha)) ** 2
    elif rule == "krum":
        if n - b - 2 < 1:
            raise DomainError(f"krum needs b <= n - 3 (n={n}, b={b})")
        c2 = (1.0 + math.sqrt((1.0 - alpha) / (1.0 - 2.0 * alpha))) ** 2 * 2.0
    elif rule == "cc":
        if alpha > 0.1:
            raise DomainError(f"centered clipping requires alpha <= 0.1 (alpha={alpha:.4g})")
        iters = spec.inner_iters if spec is not None else 1
        extra_coef = (9.7 * alpha) ** iters
        c2 = 8000.0 * alpha
    elif rule == "phocas":
        c2 = 4.0 + 12.0 * alpha * (1.0 - alpha) / (1.0 - 2.0 * alpha) ** 2
    elif rule == "faba":
        if not 3 * b < n:
            raise DomainError(f"FABA requires alpha < 1/3 (n={n}, b={b})")
        if b == 0:
            c2 = 0.0
        else:
            inner = (b + 1) / (n - b) + (n + 1 - b) / (n - b) * b / (n - 3 * b)
            c2 = (4.0 * inner) ** 2
    else:  # pragma: no cover
        raise AssertionError(rule)
    return BoundConstant(
        rule=rule,
        alpha=alpha,
        n=n,
        b=b,
        d=d,
        c_alpha_squared=c2,
        extra_coefficient=extra_coef,
        extra_term=extra_coef * center_gap_sq,
    )


@dataclass(frozen=True)
class CertificateRecord:
    lhs: float
    zeta2: float
    bound: float
    passed: bool


def oracle_radius(center: np.ndarray, zeta2: float) -> Callable[[np.ndarray], float]:
    """Smallest clipping radius that leaves every honest message unclipped."""
    zeta = math.sqrt(zeta2)

    def radius(v: np.ndarray) -> float:
        gap = v - center
        return max(math.sqrt(gap @ gap) + zeta, np.finfo(float).tiny)

    return radius


def certify(
    spec: AggregatorSpec,
    messages: MessageLike,
    cohort: Cohort,
    prev_decision=None,
) -> CertificateRecord:
    """Check ``||AGG - honest_mean||^2 <= C^2 zeta^2 (+ extra)`` on one round."""
    z = stack_messages(messages, cohort.n)
    if spec.q is None:
        spec = spec.with_q(cohort.b)
    center = honest_mean(z, cohort)
    zeta2 = max_honest_deviation(z, cohort)
    gap_sq = 0.0
    if spec.rule == "cc":
        if prev_decision is None:
            raise ValueError("centered clipping needs the previous decision")
        v0 = as_vector(prev_decision, z.shape[1])
        gap_sq = float((v0 - center) @ (v0 - center))
        tau = spec.tau if spec.tau is not None else oracle_radius(center, zeta2)
        out = centered_clipping(z, v0, tau, spec.inner_iters)
    else:
        out = aggregate(spec, z, prev_decision)
    const = bound_constant(spec.rule, cohort.n, cohort.b, z.shape[1], spec, gap_sq)
    err = out - center
    lhs = float(err @ err)
    bound = const.bound(zeta2)
    return CertificateRecord(lhs, zeta2, bound, lhs <= bound * (1.0 + CERTIFY_RTOL))
