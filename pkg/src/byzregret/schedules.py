"""Step-size and momentum-parameter schedules."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

log = logging.getLogger(__name__)

SCHEDULES = ("constant", "inv_sqrt_T", "diminishing", "piecewise")
MODES = ("theorem", "experimental")
_ALIASES = {"piecewise_experiment": "piecewise", "inv_sqrt_t": "inv_sqrt_T"}

# momentum coupling constant: nu = MOMENTUM_COUPLING * L^2 / mu * eta
MOMENTUM_COUPLING = 8.0 * math.sqrt(3.0)


def canonical_schedule(name: str) -> str:
    key = name.strip()
    key = _ALIASES.get(key.lower(), key)
    if key not in SCHEDULES:
        raise ValueError(f"unknown schedule {name!r}; choose from {', '.join(SCHEDULES)}")
    return key


@dataclass(frozen=True)
class Schedule:
    """How ``eta_t`` (and ``nu_t`` for momentum) evolve.

    In ``theorem`` mode the momentum parameter is tied to the step size by
    ``nu = min(1, 8 sqrt(3) L^2 / mu * eta)``; in ``experimental`` mode it
    equals ``eta`` unless ``nu`` is given explicitly.
    """

    kind: str = "constant"
    eta: float = 0.01
    c: float = 1.0
    L: float = 1.0
    mu: float = 1.0
    warmup_steps: int = 500
    warmup_value: float = 0.008
    tail_numerator: float = 4.0
    nu: float | None = None
    mode: str = "experimental"

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_schedule(self.kind))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kind == "constant" and not self.eta > 0:
            raise ValueError("constant step size must be positive")
        if self.kind == "inv_sqrt_T" and not self.c > 0:
            raise ValueError("inv_sqrt_T numerator must be positive")
        if self.kind == "diminishing" and not (self.L > 0 and self.mu > 0):
            raise ValueError("diminishing schedule needs L > 0 and mu > 0")
        if self.L < self.mu:
            raise ValueError(f"need L >= mu (L={self.L}, mu={self.mu})")
        if self.kind == "piecewise" and not (self.warmup_value > 0 and self.tail_numerator > 0):
            raise ValueError("piecewise schedule values must be positive")
        if self.nu is not None and not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")

    def check_theorem_conformance(self) -> None:
        if self.mode == "theorem" and self.kind == "constant" and self.eta > 1 / (4 * self.L):
            log.warning("constant step %.4g exceeds 1/(4L) = %.4g", self.eta, 1 / (4 * self.L))

    def step_size(self, t: int, T: int) -> float:
        if self.kind == "constant":
            return self.eta
        if self.kind == "inv_sqrt_T":
            return self.c / math.sqrt(T)
        if self.kind == "diminishing":
            return min(1.0 / (4.0 * self.L), 8.0 / (self.mu * t))
        if t <= self.warmup_steps:
            return self.warmup_value
        return self.tail_numerator / t

    def momentum(self, eta: float) -> float:
        if self.nu is not None:
            return self.nu
        if self.mode == "theorem":
            return min(1.0, MOMENTUM_COUPLING * self.L**2 / self.mu * eta)
        return min(1.0, eta)


def schedule_eval(schedule: Schedule, t: int, T: int) -> tuple[float, float]:
    """``(eta_t, nu_t)`` at step ``t`` of a horizon ``T``."""
    if not 1 <= t <= T:
        raise ValueError(f"step {t} outside [1, {T}]")
    eta = schedule.step_size(t, T)
    return eta, schedule.momentum(eta)
