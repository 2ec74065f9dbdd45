"""Simulation loop for distributed online gradient descent and momentum."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .aggregators import aggregate, centered_clipping, oracle_radius
from .attacks import AttackView, byzantine_payloads
from .config import ExperimentConfig, Experiment, resolve
from .core import DecisionVector, RandomStream
from .environment import (
    CH_ATTACK,
    HindsightAccumulator,
    LossSample,
    LossStream,
    batch_gradients,
    expected_loss_function,
    expected_minimizer,
    gradient,
)
from .schedules import schedule_eval

log = logging.getLogger(__name__)

# horizons up to this length record every step
DENSE_HORIZON = 2000
SPARSE_POINTS = 400


class TrialError(RuntimeError):
    """A trial aborted; the message names the trial and step."""


@dataclass(frozen=True)
class ParticipantState:
    momentum: np.ndarray
    decision: Optional[np.ndarray] = None


def ogd_step(w, sample: LossSample, eta: float) -> DecisionVector:
    """One local online-gradient step ``w - eta * grad f(w)``."""
    if not eta > 0:
        raise ValueError("step size must be positive")
    w = np.asarray(w, dtype=np.float64)
    return w - eta * gradient(sample, w)


def momentum_step(
    state: ParticipantState, sample: LossSample, w, eta: float, nu: float
) -> tuple[ParticipantState, DecisionVector]:
    """Update the momentum vector with the fresh gradient and step from ``w``."""
    if not eta > 0:
        raise ValueError("step size must be positive")
    if not 0 < nu <= 1:
        raise ValueError("momentum parameter must lie in (0, 1]")
    w = np.asarray(w, dtype=np.float64)
    m = nu * gradient(sample, w) + (1.0 - nu) * np.asarray(state.momentum, dtype=np.float64)
    return ParticipantState(m, w), w - eta * m


def checkpoints(T: int) -> np.ndarray:
    """Steps at which regret is recorded: every step for short horizons,
    otherwise a log-spaced grid that always contains the powers of ten and ``T``."""
    if T <= DENSE_HORIZON:
        return np.arange(1, T + 1)
    grid = np.unique(np.round(np.geomspace(1, T, SPARSE_POINTS)).astype(int))
    tens = 10 ** np.arange(int(math.log10(T)) + 1)
    return np.unique(np.concatenate([grid, tens, [T]]))


@dataclass
class RegretTrace:
    trial: int
    steps: np.ndarray
    cum_loss: np.ndarray
    adversarial: np.ndarray
    stochastic: Optional[np.ndarray]
    final_decision: np.ndarray
    hindsight: np.ndarray
    hindsight_loss: float
    diagnostics: dict = field(default_factory=dict)

    def at(self, t: int) -> int:
        idx = int(np.searchsorted(self.steps, t))
        if idx >= len(self.steps) or self.steps[idx] != t:
            raise KeyError(f"step {t} is not a recorded checkpoint")
        return idx


@dataclass
class EnsembleResult:
    traces: list[RegretTrace]
    steps: np.ndarray
    mean_cum_loss: np.ndarray
    max_cum_loss: np.ndarray
    mean_adversarial: np.ndarray
    max_adversarial: np.ndarray
    mean_stochastic: Optional[np.ndarray]
    max_stochastic: Optional[np.ndarray]

    def at(self, t: int) -> int:
        return self.traces[0].at(t)


ConfigLike = Union[ExperimentConfig, Experiment]


def _experiment(config: ConfigLike) -> Experiment:
    return config if isinstance(config, Experiment) else resolve(config)


def run_trial(config: ConfigLike, trial_index: int) -> RegretTrace:
    """Run one trial and return its regret trace."""
    exp = _experiment(config)
    cohort = exp.cohort
    n, d, T = cohort.n, exp.environment.d, exp.horizon
    spec = exp.aggregator
    oracle_clip = spec.rule == "cc" and spec.tau is None
    stream = LossStream(exp.environment, cohort, RandomStream(exp.seed, (trial_index,)))
    env = stream.spec
    attack_rng = RandomStream(exp.seed, (trial_index, 0, CH_ATTACK)).generator()
    honest = cohort.honest_mask()
    byz_rows = np.flatnonzero(~honest)
    momentum = exp.algorithm == "momentum"

    stochastic = env.has_expected_loss
    if stochastic:
        F = expected_loss_function(env, cohort)
        f_star = F(expected_minimizer(env, cohort))

    marks = checkpoints(T)
    rec_cum = np.empty(len(marks))
    rec_adv = np.empty(len(marks))
    rec_sto = np.empty(len(marks)) if stochastic else None
    acc = HindsightAccumulator(d)
    w = exp.w1.copy()
    m = exp.m0.copy()
    cum = 0.0
    sto = 0.0
    k = 0
    w_star = w
    total = 0.0
    for t in range(1, T + 1):
        try:
            x, y = stream.draw(t)
            xh, yh = x[honest], y[honest]
            r = xh @ w - yh
            cum += 0.5 * float(r @ r) / r.shape[0]
            acc.add(xh, yh)
            if stochastic:
                sto += F(w) - f_star
            if t == marks[k]:
                w_star, total = acc.solve()
                rec_cum[k] = cum
                rec_adv[k] = cum - total
                if stochastic:
                    rec_sto[k] = sto
                k += 1
            if t == T:
                break
            eta, nu = schedule_eval(exp.schedule, t, T)
            g = batch_gradients(x, y, w)
            if momentum:
                m = nu * g + (1.0 - nu) * m
                z = w - eta * m
            else:
                z = w - eta * g
            if oracle_clip:
                zh = z[honest]
                center = zh.mean(axis=0)
                dev = zh - center
                radius = oracle_radius(center, float(np.einsum("ij,ij->i", dev, dev).max()))
            if len(byz_rows):
                view = AttackView(z, z[byz_rows], w, t, eta, spec.rule, env)
                z[byz_rows] = byzantine_payloads(exp.attack, view, cohort, attack_rng)
            if oracle_clip:
                w_next = centered_clipping(z, w, radius, spec.inner_iters)
            else:
                w_next = aggregate(spec, z, w)
            if not np.all(np.isfinite(w_next)):
                raise FloatingPointError("aggregated decision is not finite")
            w = w_next
        except Exception as exc:
            raise TrialError(f"trial {trial_index} aborted at step {t}: {exc}") from exc
    return RegretTrace(
        trial=trial_index,
        steps=marks,
        cum_loss=rec_cum,
        adversarial=rec_adv,
        stochastic=rec_sto,
        final_decision=w,
        hindsight=w_star,
        hindsight_loss=total,
    )


def default_workers(trials: int) -> int:
    cap = os.environ.get("BYZ_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(trials, limit))


def _trial_job(args):
    exp, k = args
    return run_trial(exp, k)


def run_experiment(config: ConfigLike, workers: int | None = None) -> EnsembleResult:
    """Run every trial and reduce per step to mean and worst-case curves.

    Trials are independent, so serial and parallel execution give identical
    results; any failing trial aborts the experiment.
    """
    exp = _experiment(config)
    workers = default_workers(exp.trials) if workers is None else max(1, workers)
    jobs = [(exp, k) for k in range(exp.trials)]
    if workers == 1:
        traces = [_trial_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_trial_job, jobs))
    return reduce_traces(traces)


def reduce_traces(traces: list[RegretTrace]) -> EnsembleResult:
    if not traces:
        raise ValueError("no traces to reduce")
    steps = traces[0].steps
    cum = np.stack([tr.cum_loss for tr in traces])
    adv = np.stack([tr.adversarial for tr in traces])
    if traces[0].stochastic is not None:
        sto = np.stack([tr.stochastic for tr in traces])
        mean_sto, max_sto = sto.mean(axis=0), sto.max(axis=0)
    else:
        mean_sto = max_sto = None
    return EnsembleResult(
        traces=traces,
        steps=steps,
        mean_cum_loss=cum.mean(axis=0),
        max_cum_loss=cum.max(axis=0),
        mean_adversarial=adv.mean(axis=0),
        max_adversarial=adv.max(axis=0),
        mean_stochastic=mean_sto,
        max_stochastic=max_sto,
    )
