"""CSV and metadata persistence for experiment results."""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import Experiment, dump_config
from .core import RandomStream
from .engine import EnsembleResult, RegretTrace
from .environment import LossStream, deviation_audit, mean_gradient_audit

HEADER = ("trial", "step", "cum_honest_loss", "adversarial_regret", "stochastic_regret")
TRIALS_CSV = "trials.csv"
ENSEMBLE_CSV = "ensemble.csv"
METADATA = "metadata.cfg"
# steps scanned by the sigma^2 / xi^2 audits
AUDIT_STEPS = 1000


class CsvFormatError(ValueError):
    """A results CSV does not follow the expected schema."""


def fmt(x: Optional[float]) -> str:
    """Full double precision; ``None`` becomes an empty field."""
    return "" if x is None else format(float(x), ".17g")


def _rows(label, steps, cum, adv, sto):
    for i, step in enumerate(steps):
        yield (str(label), str(int(step)), fmt(cum[i]), fmt(adv[i]), fmt(None if sto is None else sto[i]))


def _write(path: Path, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def write_trials_csv(path: str | Path, traces: list[RegretTrace]) -> None:
    rows = []
    for tr in traces:
        rows.extend(_rows(tr.trial, tr.steps, tr.cum_loss, tr.adversarial, tr.stochastic))
    _write(Path(path), rows)


def write_ensemble_csv(path: str | Path, result: EnsembleResult) -> None:
    """Mean curve rows (``trial=mean``) followed by worst-case rows (``trial=max``)."""
    rows = list(
        _rows("mean", result.steps, result.mean_cum_loss, result.mean_adversarial, result.mean_stochastic)
    )
    rows += _rows("max", result.steps, result.max_cum_loss, result.max_adversarial, result.max_stochastic)
    _write(Path(path), rows)


@dataclass
class Series:
    """One labelled curve read back from a results CSV."""

    label: str
    steps: np.ndarray
    cum_loss: np.ndarray
    adversarial: np.ndarray
    stochastic: Optional[np.ndarray]


def read_csv(path: str | Path) -> list[Series]:
    """Parse a results CSV into one :class:`Series` per ``trial`` label."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise CsvFormatError(f"{path}: header must be {','.join(HEADER)}")
        grouped: dict[str, list[list[str]]] = {}
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(HEADER):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
            grouped.setdefault(row[0], []).append(row)
    if not grouped:
        raise CsvFormatError(f"{path}: no data rows")
    series = []
    for label, rows in grouped.items():
        try:
            steps = np.array([int(r[1]) for r in rows])
            cols = [np.array([float(r[k]) for r in rows]) for k in (2, 3)]
            blanks = [r[4] == "" for r in rows]
            if all(blanks):
                sto = None
            elif any(blanks):
                raise CsvFormatError(f"{path}: stochastic_regret is only partly filled for {label}")
            else:
                sto = np.array([float(r[4]) for r in rows])
        except ValueError as exc:
            raise CsvFormatError(f"{path}: {exc}") from None
        series.append(Series(label, steps, cols[0], cols[1], sto))
    return series


def audits(exp: Experiment, trace: RegretTrace) -> dict[str, float]:
    """Empirical constants of trial ``trace.trial``'s stream.

    ``sigma2`` is the largest squared deviation of an honest gradient from
    the honest mean and ``xi2`` the largest squared norm of the mean honest
    gradient, both at the hindsight minimizer over the first steps.
    """
    stream = LossStream(exp.environment, exp.cohort, RandomStream(exp.seed, (trace.trial,)))
    steps = min(AUDIT_STEPS, exp.horizon)
    return {
        "L": exp.schedule.L,
        "mu": exp.schedule.mu,
        "sigma2": deviation_audit(stream, trace.hindsight, steps),
        "xi2": mean_gradient_audit(stream, trace.hindsight, steps),
    }


def metadata_text(exp: Experiment, stats: dict[str, float], version: str) -> str:
    """A config file that replays the run, headed by comment lines with the audits.

    Derived values (Byzantine ids, ``L``, ``mu``) are written out explicitly so
    the record does not depend on re-deriving them.
    """
    resolved = dataclasses.replace(
        exp.config,
        byzantine_ids=exp.cohort.sorted_byzantine_ids,
        byzantine_count=exp.cohort.b,
        L=exp.schedule.L,
        mu=exp.schedule.mu,
    )
    head = [f"# byzregret {version}"]
    head += [f"# audit.{k} = {fmt(v)}" for k, v in stats.items()]
    return "\n".join(head) + "\n" + dump_config(resolved)


def write_results(out_dir: str | Path, exp: Experiment, result: EnsembleResult, version: str) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trials": out / TRIALS_CSV, "ensemble": out / ENSEMBLE_CSV, "metadata": out / METADATA}
    write_trials_csv(paths["trials"], result.traces)
    write_ensemble_csv(paths["ensemble"], result)
    stats = audits(exp, result.traces[0])
    paths["metadata"].write_text(metadata_text(exp, stats, version))
    return paths
