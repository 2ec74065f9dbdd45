"""Byzantine message generation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Cohort, Message
from .environment import LossStreamSpec

ATTACKS = ("none", "signflip", "gaussian", "dup", "ex1", "ex3")
_ALIASES = {
    "sign_flipping": "signflip",
    "sample_duplicating": "dup",
    "example1_adaptive": "ex1",
    "example3_adaptive": "ex3",
}
_ADAPTIVE_ENV = {"ex1": "example1", "ex3": "example3"}


def canonical_attack(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in ATTACKS:
        raise ValueError(f"unknown attack {name!r}; choose from {', '.join(ATTACKS)}")
    return key


@dataclass(frozen=True)
class AttackSpec:
    """Which attack the Byzantine participants run.

    ``coefficient`` scales the sign-flipped message, ``noise_var`` is the
    per-coordinate variance of the Gaussian attack and ``victim`` the honest
    participant copied by the duplicating attack (``None``: lowest honest id).
    """

    kind: str = "none"
    coefficient: float = -3.0
    noise_var: float = 500.0
    victim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_attack(self.kind))
        if not math.isfinite(self.coefficient):
            raise ValueError("sign-flipping coefficient must be finite")
        if self.kind == "gaussian" and not self.noise_var > 0:
            raise ValueError("gaussian attack needs noise_var > 0")

    def check_environment(self, env: LossStreamSpec) -> None:
        expected = _ADAPTIVE_ENV.get(self.kind)
        if expected is not None and env.kind != expected:
            raise ValueError(f"attack {self.kind} only runs against the {expected} stream, not {env.kind}")

    def resolve_victim(self, cohort: Cohort) -> int:
        victim = cohort.honest_ids[0] if self.victim is None else self.victim
        if victim not in cohort.honest_ids:
            raise ValueError(f"duplicating victim {victim} is not an honest participant")
        return victim


@dataclass(frozen=True)
class AttackView:
    """Read-only snapshot an omniscient adversary sees before sending.

    ``honest_messages`` is the ``(n, d)`` array of this round's messages in
    which only the honest rows are meaningful; ``true_updates`` holds, row by
    row for the sorted Byzantine ids, the message each Byzantine participant
    would have sent had it been honest.
    """

    honest_messages: np.ndarray
    true_updates: np.ndarray
    decision: np.ndarray
    step: int
    step_size: float
    rule: str
    environment: LossStreamSpec

    def __post_init__(self):
        for name in ("honest_messages", "true_updates", "decision"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def byzantine_payloads(
    spec: AttackSpec,
    view: AttackView,
    cohort: Cohort,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Payloads of the sorted Byzantine ids as a ``(b, d)`` array."""
    b = cohort.b
    d = view.decision.shape[0]
    kind = spec.kind
    if b == 0:
        return np.empty((0, d))
    if kind == "none":
        return np.array(view.true_updates, copy=True)
    if kind == "signflip":
        return spec.coefficient * view.true_updates
    if kind == "gaussian":
        if rng is None:
            raise ValueError("gaussian attack needs a random generator")
        return rng.standard_normal((b, d)) * math.sqrt(spec.noise_var)
    if kind == "dup":
        victim = spec.resolve_victim(cohort)
        return np.repeat(view.honest_messages[victim - 1][None, :], b, axis=0)
    spec.check_environment(view.environment)
    sigma = view.environment.sigma
    w, eta = view.decision, view.step_size
    honest = view.honest_messages[cohort.honest_mask()]
    if kind == "ex1":
        if view.rule == "cc":
            # cancel the honest pull on the clipping center; sigma + 2 eta sigma for n = 3
            payload = w - (honest - w).sum(axis=0) / b
        else:
            payload = np.full(d, sigma)
    else:
        if view.rule == "cc":
            if np.all(honest == honest[0]):
                payload = honest[0].copy()
            else:
                payload = (1.0 - eta) * w + 3.0 * eta * sigma
        else:
            payload = (1.0 - eta) * w + eta * sigma
    return np.repeat(np.asarray(payload, dtype=np.float64)[None, :], b, axis=0)


def byzantine_messages(
    spec: AttackSpec,
    view: AttackView,
    cohort: Cohort,
    rng: np.random.Generator | None = None,
) -> list[Message]:
    """One :class:`Message` per Byzantine participant, in id order."""
    payloads = byzantine_payloads(spec, view, cohort, rng)
    return [Message(j, row) for j, row in zip(cohort.sorted_byzantine_ids, payloads)]


def gaussian_attack_audit(
    spec: AttackSpec, n_samples: int, d: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate sample mean and variance of ``n_samples`` Gaussian payloads."""
    if spec.kind != "gaussian":
        raise ValueError("audit applies to the gaussian attack only")
    if n_samples < 10_000:
        raise ValueError("audit needs at least 10^4 samples")
    cohort = Cohort(3, frozenset({3}))
    view = AttackView(
        honest_messages=np.zeros((3, d)),
        true_updates=np.zeros((1, d)),
        decision=np.zeros(d),
        step=1,
        step_size=1.0,
        rule="mean",
        environment=LossStreamSpec("iid_ls", d=d),
    )
    draws = np.concatenate([byzantine_payloads(spec, view, cohort, rng) for _ in range(n_samples)])
    return draws.mean(axis=0), draws.var(axis=0, ddof=1)
