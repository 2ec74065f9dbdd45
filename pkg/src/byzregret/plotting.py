"""Static SVG figures of regret curves."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import load_config  # noqa: E402
from .results import METADATA, CsvFormatError, Series, read_csv  # noqa: E402

METRICS = {
    "adversarial": ("adversarial", "adversarial regret"),
    "stochastic": ("stochastic", "stochastic regret"),
    "cum_loss": ("cum_loss", "cumulative honest loss"),
}

STYLE = {
    "svg.hashsalt": "byzregret",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "legend.frameon": False,
}


@dataclass
class Curve:
    label: str
    steps: np.ndarray
    values: np.ndarray
    slope: float


def curve_slope(steps: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of ``values`` against ``steps`` (linear axes)."""
    if len(steps) < 2:
        return float("nan")
    slope, _ = np.polyfit(steps.astype(float), values, 1)
    return float(slope)


def _legend_prefix(csv_path: Path) -> str:
    meta = csv_path.parent / METADATA
    if not meta.exists():
        return csv_path.stem
    cfg = load_config(meta)
    algo = "momentum" if cfg.algorithm == "momentum" else "OGD"
    return f"{cfg.rule}/{cfg.attack}/{algo}"


def collect_curves(csv_paths: Sequence[str | Path], metric: str = "adversarial") -> list[Curve]:
    attr, _ = METRICS[metric]
    curves = []
    for raw in csv_paths:
        path = Path(raw)
        prefix = _legend_prefix(path)
        series: list[Series] = read_csv(path)
        for s in series:
            values = getattr(s, attr)
            if values is None:
                raise CsvFormatError(f"{path}: no {metric} column to plot for series {s.label}")
            curves.append(Curve(f"{prefix} ({s.label})", s.steps, values, curve_slope(s.steps, values)))
    steps0 = curves[0].steps
    for c in curves[1:]:
        if not np.array_equal(c.steps, steps0):
            raise CsvFormatError("input CSVs do not share the same step column")
    return curves


def plot_curves(
    csv_paths: Sequence[str | Path],
    out_path: str | Path,
    logy: bool = False,
    metric: str = "adversarial",
) -> list[Curve]:
    """Render one line per series to ``out_path`` and return the curves.

    All inputs are parsed before anything is written, so a malformed CSV
    leaves no output file behind.
    """
    curves = collect_curves(csv_paths, metric)
    _, ylabel = METRICS[metric]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for c in curves:
            ax.plot(c.steps, c.values, label=c.label)
        ax.set_xlabel("step t")
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("symlog" if any(np.any(c.values <= 0) for c in curves) else "log")
        ax.legend(fontsize=7, loc="best")
        fig.tight_layout()
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return curves
