"""Randomized robustness certification of the aggregation rules.

Each case draws an honest cloud, replaces the Byzantine rows with one
payload from a fixed battery and checks the deviation bound with
:func:`~byzregret.aggregators.certify`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregators import ROBUST_RULES, AggregatorSpec, bound_constant, canonical_rule, certify
from .core import Cohort, RandomStream
from .results import fmt

BATTERY = ("gaussian", "signflip", "colluding", "sweep")
# magnitudes of the sweep payloads: 10^0 .. 10^9
SWEEP_EXPONENTS = tuple(range(10))
GAUSSIAN_VAR = 500.0
SIGNFLIP = -3.0
CSV_HEADER = ("case", "attack", "magnitude", "lhs", "zeta2", "bound", "pass")


@dataclass
class CertificationReport:
    rule: str
    n: int
    b: int
    d: int
    robust: bool
    rows: list[tuple] = field(default_factory=list)

    @property
    def cases(self) -> int:
        return len(self.rows)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if not r[-1])

    @property
    def worst_ratio(self) -> float:
        """Largest ``lhs / bound`` seen (``inf`` when a zero bound is exceeded)."""
        worst = 0.0
        for r in self.rows:
            lhs, bound = r[3], r[5]
            if bound > 0:
                worst = max(worst, lhs / bound)
            elif lhs > 0:
                worst = math.inf
        return worst

    @property
    def ok(self) -> bool:
        """Failures only count against rules that claim robustness."""
        return self.failures == 0 or not self.robust

    def summary(self) -> str:
        status = "PASS" if self.failures == 0 else ("FAIL" if self.robust else "FAIL (non-robust rule)")
        return (
            f"{self.rule} n={self.n} b={self.b} d={self.d}: {self.cases - self.failures}/{self.cases} "
            f"within bound, worst lhs/bound = {self.worst_ratio:.4g} -> {status}"
        )

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for case, attack, mag, lhs, zeta2, bound, passed in self.rows:
                writer.writerow((case, attack, fmt(mag), fmt(lhs), fmt(zeta2), fmt(bound), int(passed)))


def byzantine_rows(
    kind: str, honest: np.ndarray, b: int, rng: np.random.Generator, magnitude: float = 1.0
) -> np.ndarray:
    """``(b, d)`` payloads of one battery attack against the honest rows."""
    d = honest.shape[1]
    center = honest.mean(axis=0)
    if kind == "gaussian":
        return rng.standard_normal((b, d)) * math.sqrt(GAUSSIAN_VAR)
    if kind == "signflip":
        picks = rng.integers(0, honest.shape[0], size=b)
        return SIGNFLIP * honest[picks]
    direction = rng.standard_normal(d)
    direction /= max(np.linalg.norm(direction), np.finfo(float).tiny)
    if kind == "colluding":
        # just outside the honest cloud, where it hurts outlier filters most
        spread = float(np.max(np.linalg.norm(honest - center, axis=1)))
        offset = spread * rng.uniform(0.5, 3.0)
    elif kind == "sweep":
        offset = magnitude
    else:
        raise ValueError(f"unknown battery attack {kind!r}")
    return np.repeat((center + offset * direction)[None, :], b, axis=0)


def run_certification(
    rule: str,
    n: int,
    b: int,
    d: int,
    cases: int,
    seed: int = 0,
    spread: float = 1.0,
    tau: float | None = None,
) -> CertificationReport:
    """Certify ``rule`` on ``cases`` randomized rounds.

    Honest messages are a Gaussian cloud of per-case scale drawn log-uniformly
    around ``spread``; the Byzantine positions are reshuffled every case.
    ``tau=None`` lets centered clipping use the oracle radius.

    Raises:
        DomainError: the rule's constant is undefined at ``(n, b)``.
    """
    rule = canonical_rule(rule)
    if cases < 1:
        raise ValueError("need at least one case")
    spec = AggregatorSpec(rule, q=b, tau=tau)
    spec.check_domain(n)
    bound_constant(rule, n, b, d, spec)
    gen = RandomStream(seed, (0, 0, 5)).generator()
    report = CertificationReport(rule, n, b, d, rule in ROBUST_RULES)
    for i in range(cases):
        kind = BATTERY[i % len(BATTERY)]
        magnitude = 10.0 ** SWEEP_EXPONENTS[(i // len(BATTERY)) % len(SWEEP_EXPONENTS)]
        ids = frozenset(int(j) + 1 for j in gen.choice(n, size=b, replace=False))
        cohort = Cohort(n, ids)
        scale = spread * 10.0 ** gen.uniform(-2.0, 1.0)
        center = gen.standard_normal(d) * gen.uniform(0.0, 10.0)
        honest = center + scale * gen.standard_normal((cohort.h, d))
        z = np.empty((n, d))
        mask = cohort.honest_mask()
        z[mask] = honest
        if b:
            z[~mask] = byzantine_rows(kind, honest, b, gen, magnitude)
        prev = center + scale * gen.standard_normal(d) * gen.uniform(0.0, 5.0)
        rec = certify(spec, z, cohort, prev)
        report.rows.append(
            (i, kind, magnitude if kind == "sweep" else 0.0, rec.lhs, rec.zeta2, rec.bound, rec.passed)
        )
    return report
