"""Named experiment configurations.

The synthetic least-squares grid covers every combination of stream,
algorithm, schedule, attack and rule; names look like
``iid-momentum-diminishing-signflip-geomed``.  The counter-example presets
are ``example1``, ``example2`` and ``example3`` (geometric median; pass
another rule to :func:`example_config` for the rest).
"""

from __future__ import annotations

import itertools
from pathlib import Path

from .aggregators import RULES
from .config import ExperimentConfig, dump_config

STREAMS = {"iid": ("iid_ls", 0.01), "noniid": ("noniid_ls", 0.005)}
ALGORITHMS = ("ogd", "momentum")
SCHEDULES = ("constant", "diminishing")
GRID_ATTACKS = ("none", "signflip", "gaussian", "dup")

GRID_N = 30
GRID_B = 5
# centered clipping is only admissible up to one Byzantine in ten
GRID_B_CC = 3
GRID_DIM = 10
# 60 000 samples, one per participant per step, over 30 participants
GRID_HORIZON = 2000
GRID_TRIALS = 10

EXAMPLE_SIGMA = 1.0
EXAMPLE_ETA = 0.1
# rules that need more participants than the three-party counter-examples
# admit, with the Byzantine ids used instead
WIDE_COHORTS = {"krum": (11, (11,)), "cc": (11, (11,)), "faba": (11, (9, 10, 11))}


def grid_config(stream: str, algorithm: str, schedule: str, attack: str, rule: str) -> ExperimentConfig:
    kind, eta = STREAMS[stream]
    if attack == "none":
        b = 0
    else:
        b = GRID_B_CC if rule == "cc" else GRID_B
    sched = {"schedule": "constant"} if schedule == "constant" else {"schedule": "piecewise"}
    return ExperimentConfig(
        dim=GRID_DIM,
        n=GRID_N,
        byzantine_count=b,
        algorithm=algorithm,
        rule=rule,
        # oracle clipping radius; a fixed radius lets the attack bias every step
        tau=None if rule == "cc" else 10.0,
        attack=attack,
        environment=kind,
        eta=eta,
        horizon=GRID_HORIZON,
        trials=GRID_TRIALS,
        seed=0,
        mode="experimental",
        **sched,
    )


def grid_names() -> list[str]:
    combos = itertools.product(STREAMS, ALGORITHMS, SCHEDULES, GRID_ATTACKS, RULES)
    return ["-".join(c) for c in combos]


def example_cohort(rule: str) -> tuple[int, tuple[int, ...]]:
    return WIDE_COHORTS.get(rule, (3, (3,)))


def example_config(example: int, rule: str = "geomed", sigma: float = EXAMPLE_SIGMA) -> ExperimentConfig:
    """Counter-example configuration for ``example`` in ``{1, 2, 3}``.

    Participants with odd ids see losses centred at ``+sigma`` and even ids at
    ``-sigma``; the highest ids are Byzantine.
    """
    n, ids = example_cohort(rule)
    common = dict(
        dim=1,
        n=n,
        byzantine_ids=ids,
        rule=rule,
        sigma=sigma,
        schedule="constant",
        eta=EXAMPLE_ETA,
        seed=0,
    )
    if example == 1:
        return ExperimentConfig(
            algorithm="ogd", attack="ex1", environment="example1", w0=(sigma,), horizon=1000, trials=1, **common
        )
    if example == 2:
        # even (sigma-negative) participants start with momentum 2 sigma
        m0 = tuple(0.0 if j % 2 else 2.0 * sigma for j in range(1, n + 1))
        return ExperimentConfig(
            algorithm="momentum",
            attack="ex1",
            environment="example1",
            w0=(sigma,),
            m0=m0,
            horizon=1000,
            trials=1,
            **common,
        )
    if example == 3:
        return ExperimentConfig(
            algorithm="ogd",
            attack="ex3",
            environment="example3",
            w0=(sigma / 2,),
            horizon=2000,
            trials=100,
            **common,
        )
    raise ValueError(f"unknown example {example}; choose 1, 2 or 3")


def preset_names() -> list[str]:
    return ["example1", "example2", "example3"] + grid_names()


def preset(name: str) -> ExperimentConfig:
    if name in ("example1", "example2", "example3"):
        return example_config(int(name[-1]))
    parts = name.split("-")
    if len(parts) != 5 or name not in set(grid_names()):
        raise KeyError(f"unknown preset {name!r}")
    return grid_config(*parts)


def write_presets(out_dir: str | Path) -> list[Path]:
    """Write every preset as ``<name>.cfg`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in preset_names():
        path = out / f"{name}.cfg"
        path.write_text(dump_config(preset(name)))
        paths.append(path)
    return paths
