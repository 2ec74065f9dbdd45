"""Experiment configuration: flat ``dotted.key = value`` text files.

Blank values mean "derive it" (e.g. ``aggregator.q`` defaults to the true
Byzantine count, ``schedule.L`` to the stream's smoothness).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .aggregators import AggregatorSpec, DomainError, canonical_rule
from .attacks import AttackSpec, canonical_attack
from .core import Cohort, RandomStream
from .environment import LossStreamSpec, canonical_kind, smoothness_and_convexity
from .schedules import MODES, Schedule, canonical_schedule

ALGORITHMS = ("ogd", "momentum")
CH_COHORT = 4


class ConfigError(ValueError):
    """An invalid or inconsistent configuration value."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 10
    n: int = 30
    byzantine_count: int = 0
    byzantine_ids: Optional[tuple[int, ...]] = None
    algorithm: str = "ogd"
    rule: str = "mean"
    q: Optional[int] = None
    tau: Optional[float] = 10.0
    inner_iters: int = 1
    weiszfeld_tol: float = 1e-10
    weiszfeld_max_iters: int = 1000
    attack: str = "none"
    coefficient: float = -3.0
    noise_var: float = 500.0
    victim: Optional[int] = None
    environment: str = "iid_ls"
    noise_std: float = math.sqrt(0.1)
    sigma: float = 1.0
    schedule: str = "constant"
    eta: float = 0.01
    c: float = 1.0
    L: Optional[float] = None
    mu: Optional[float] = None
    warmup_steps: int = 500
    warmup_value: float = 0.008
    tail_numerator: float = 4.0
    nu: Optional[float] = None
    w0: tuple[float, ...] = (0.0,)
    m0: tuple[float, ...] = (0.0,)
    horizon: int = 1000
    trials: int = 1
    seed: int = 0
    mode: str = "experimental"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _fmt_tuple(v) -> str:
    return ", ".join(_fmt_scalar(x) for x in v)


def _fmt_scalar(x) -> str:
    return _fmt_float(x) if isinstance(x, float) else str(x)


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def _float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.replace(",", " ").split())


# (key, attribute, parser, formatter, optional)
_Field = tuple[str, str, Callable[[str], Any], Callable[[Any], str], bool]
FIELDS: tuple[_Field, ...] = (
    ("dim", "dim", int, str, False),
    ("cohort.n", "n", int, str, False),
    ("cohort.byzantine_count", "byzantine_count", int, str, False),
    ("cohort.byzantine_ids", "byzantine_ids", _int_tuple, _fmt_tuple, True),
    ("algorithm", "algorithm", str, str, False),
    ("aggregator.rule", "rule", str, str, False),
    ("aggregator.q", "q", int, str, True),
    ("aggregator.tau", "tau", float, _fmt_float, True),
    ("aggregator.inner_iters", "inner_iters", int, str, False),
    ("aggregator.weiszfeld_tol", "weiszfeld_tol", float, _fmt_float, False),
    ("aggregator.weiszfeld_max_iters", "weiszfeld_max_iters", int, str, False),
    ("attack.kind", "attack", str, str, False),
    ("attack.coefficient", "coefficient", float, _fmt_float, False),
    ("attack.noise_var", "noise_var", float, _fmt_float, False),
    ("attack.victim", "victim", int, str, True),
    ("environment.kind", "environment", str, str, False),
    ("environment.noise_std", "noise_std", float, _fmt_float, False),
    ("environment.sigma", "sigma", float, _fmt_float, False),
    ("schedule.kind", "schedule", str, str, False),
    ("schedule.eta", "eta", float, _fmt_float, False),
    ("schedule.c", "c", float, _fmt_float, False),
    ("schedule.L", "L", float, _fmt_float, True),
    ("schedule.mu", "mu", float, _fmt_float, True),
    ("schedule.warmup_steps", "warmup_steps", int, str, False),
    ("schedule.warmup_value", "warmup_value", float, _fmt_float, False),
    ("schedule.tail_numerator", "tail_numerator", float, _fmt_float, False),
    ("schedule.nu", "nu", float, _fmt_float, True),
    ("init.w", "w0", _float_tuple, _fmt_tuple, False),
    ("init.m0", "m0", _float_tuple, _fmt_tuple, False),
    ("horizon", "horizon", int, str, False),
    ("trials", "trials", int, str, False),
    ("seed", "seed", int, str, False),
    ("mode", "mode", str, str, False),
)
_BY_KEY = {f[0]: f for f in FIELDS}


def apply_overrides(config: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    changes = {}
    for key, text in pairs.items():
        field = _BY_KEY.get(key.strip())
        if field is None:
            raise ConfigError(key, "unknown configuration key")
        _, attr, parse, _, optional = field
        text = text.strip()
        if text == "":
            if not optional:
                raise ConfigError(key, "a value is required")
            changes[attr] = None
            continue
        try:
            changes[attr] = parse(text)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {text!r}: {exc}") from exc
    return config.replace(**changes)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value
    return apply_overrides(base or ExperimentConfig(), pairs)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for key, attr, _, fmt, _ in FIELDS:
        value = getattr(config, attr)
        lines.append(f"{key} = {'' if value is None else fmt(value)}".rstrip())
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Experiment:
    """A validated configuration with every derived quantity filled in."""

    config: ExperimentConfig
    cohort: Cohort
    aggregator: AggregatorSpec
    attack: AttackSpec
    environment: LossStreamSpec
    schedule: Schedule
    w1: np.ndarray
    m0: np.ndarray

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def trials(self) -> int:
        return self.config.trials

    @property
    def seed(self) -> int:
        return self.config.seed


def _check(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def choose_byzantine(n: int, count: int, seed: int) -> tuple[int, ...]:
    """Seeded choice of ``count`` Byzantine ids, fixed for the whole experiment."""
    gen = RandomStream(seed, (0, 0, CH_COHORT)).generator()
    return tuple(sorted(int(j) + 1 for j in gen.choice(n, size=count, replace=False)))


def resolve(config: ExperimentConfig) -> Experiment:
    """Validate every cross-module constraint and derive runtime specs.

    Raises :class:`ConfigError` naming the offending key; nothing is run.
    """
    c = config
    _check(c.dim >= 1, "dim", "must be at least 1")
    _check(c.n >= 1, "cohort.n", "must be at least 1")
    _check(c.horizon >= 1, "horizon", "must be at least 1")
    _check(c.trials >= 1, "trials", "must be at least 1")
    _check(0 <= c.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
    _check(c.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}")
    _check(c.mode in MODES, "mode", f"must be one of {MODES}")

    if c.byzantine_ids is not None:
        ids = c.byzantine_ids
        _check(len(set(ids)) == len(ids), "cohort.byzantine_ids", "duplicate ids")
        _check(all(1 <= j <= c.n for j in ids), "cohort.byzantine_ids", f"ids must lie in [1, {c.n}]")
        _check(
            c.byzantine_count in (0, len(ids)),
            "cohort.byzantine_count",
            "disagrees with the number of byzantine_ids",
        )
    else:
        _check(0 <= c.byzantine_count <= c.n, "cohort.byzantine_count", f"must lie in [0, {c.n}]")
        ids = choose_byzantine(c.n, c.byzantine_count, c.seed)
    b = len(ids)
    _check(2 * b < c.n, "cohort.byzantine_count", f"byzantine fraction {b}/{c.n} must be below 1/2")
    cohort = Cohort(c.n, frozenset(ids))

    try:
        rule = canonical_rule(c.rule)
    except ValueError as exc:
        raise ConfigError("aggregator.rule", str(exc)) from None
    _check(rule != "faba" or 3 * b < c.n, "cohort.byzantine_count", "FABA requires alpha < 1/3")
    _check(rule != "cc" or 10 * b <= c.n, "cohort.byzantine_count", "centered clipping requires alpha <= 0.1")
    _check(rule != "krum" or c.n - b - 2 >= 1, "cohort.byzantine_count", "krum requires b <= n - 3")
    _check(c.q is None or c.q >= 0, "aggregator.q", "must be non-negative")
    q = b if c.q is None else c.q
    _check(c.tau is None or c.tau > 0, "aggregator.tau", "must be positive")
    _check(c.inner_iters >= 1, "aggregator.inner_iters", "must be at least 1")
    _check(c.weiszfeld_tol > 0, "aggregator.weiszfeld_tol", "must be positive")
    _check(c.weiszfeld_max_iters >= 1, "aggregator.weiszfeld_max_iters", "must be at least 1")
    aggregator = AggregatorSpec(rule, q, c.tau, c.inner_iters, c.weiszfeld_tol, c.weiszfeld_max_iters)
    try:
        aggregator.check_domain(c.n)
    except DomainError as exc:
        raise ConfigError("aggregator.q", str(exc)) from None

    try:
        kind = canonical_kind(c.environment)
    except ValueError as exc:
        raise ConfigError("environment.kind", str(exc)) from None
    _check(c.noise_std >= 0, "environment.noise_std", "must be non-negative")
    _check(c.sigma > 0, "environment.sigma", "must be positive")
    _check(kind not in ("example1", "example3") or c.dim == 1, "dim", f"{kind} requires dim = 1")
    _check(kind != "noniid_ls" or c.n % 3 == 0, "cohort.n", "non-i.i.d. stream needs n divisible by 3")
    environment = LossStreamSpec(kind, c.dim, c.noise_std, c.sigma)

    try:
        attack_kind = canonical_attack(c.attack)
    except ValueError as exc:
        raise ConfigError("attack.kind", str(exc)) from None
    _check(math.isfinite(c.coefficient), "attack.coefficient", "must be finite")
    _check(attack_kind != "gaussian" or c.noise_var > 0, "attack.noise_var", "must be positive")
    _check(attack_kind == "none" or b > 0, "attack.kind", "needs at least one Byzantine participant")
    attack = AttackSpec(attack_kind, c.coefficient, c.noise_var, c.victim)
    if attack_kind in ("ex1", "ex3"):
        expected = {"ex1": "example1", "ex3": "example3"}[attack_kind]
        _check(kind == expected, "attack.kind", f"{attack_kind} needs environment.kind = {expected}")
    if attack_kind == "dup" or c.victim is not None:
        try:
            attack.resolve_victim(cohort)
        except ValueError as exc:
            raise ConfigError("attack.victim", str(exc)) from None

    try:
        sched_kind = canonical_schedule(c.schedule)
    except ValueError as exc:
        raise ConfigError("schedule.kind", str(exc)) from None
    if c.L is None or c.mu is None:
        L, mu = smoothness_and_convexity(environment, cohort, c.seed)
    L = c.L if c.L is not None else L
    mu = c.mu if c.mu is not None else mu
    _check(mu > 0, "schedule.mu", "must be positive")
    _check(L >= mu, "schedule.L", f"must be at least mu ({mu})")
    _check(c.eta > 0, "schedule.eta", "must be positive")
    _check(c.c > 0, "schedule.c", "must be positive")
    _check(c.warmup_steps >= 0, "schedule.warmup_steps", "must be non-negative")
    _check(c.warmup_value > 0, "schedule.warmup_value", "must be positive")
    _check(c.tail_numerator > 0, "schedule.tail_numerator", "must be positive")
    _check(c.nu is None or 0 < c.nu <= 1, "schedule.nu", "must lie in (0, 1]")
    schedule = Schedule(
        sched_kind, c.eta, c.c, L, mu, c.warmup_steps, c.warmup_value, c.tail_numerator, c.nu, c.mode
    )
    schedule.check_theorem_conformance()

    _check(len(c.w0) in (1, c.dim), "init.w", f"needs 1 or {c.dim} values")
    _check(all(math.isfinite(v) for v in c.w0), "init.w", "must be finite")
    w1 = np.broadcast_to(np.array(c.w0, dtype=float), (c.dim,)).copy()
    _check(len(c.m0) in (1, c.n), "init.m0", f"needs 1 or {c.n} values")
    _check(all(math.isfinite(v) for v in c.m0), "init.m0", "must be finite")
    m0 = np.repeat(np.broadcast_to(np.array(c.m0, dtype=float), (c.n,))[:, None], c.dim, axis=1)

    return Experiment(config, cohort, aggregator, attack, environment, schedule, w1, m0)
