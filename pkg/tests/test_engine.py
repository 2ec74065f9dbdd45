import hashlib

import numpy as np
import pytest

import oracles
from byzregret import engine
from byzregret.config import ExperimentConfig, resolve
from byzregret.core import RandomStream
from byzregret.engine import (
    ParticipantState,
    TrialError,
    checkpoints,
    momentum_step,
    ogd_step,
    reduce_traces,
    run_experiment,
    run_trial,
)
from byzregret.environment import LossSample, LossStream
from byzregret.presets import example_config


def test_ogd_step_examples():
    assert ogd_step([1.0], LossSample.center(-1.0), 0.1)[0] == pytest.approx(0.8)
    assert ogd_step([2.0], LossSample.center(2.0), 0.1)[0] == 2.0
    with pytest.raises(ValueError):
        ogd_step([1.0], LossSample.center(0.0), 0.0)


def test_momentum_step_examples():
    sigma, eta = 1.0, 0.1
    state, sent = momentum_step(ParticipantState(np.zeros(1)), LossSample.center(sigma), [sigma], eta, 0.3)
    assert state.momentum[0] == 0.0 and sent[0] == sigma
    state, sent = momentum_step(ParticipantState(np.array([2 * sigma])), LossSample.center(-sigma), [sigma], eta, 0.3)
    assert state.momentum[0] == pytest.approx(2 * sigma)
    assert sent[0] == pytest.approx(sigma - 2 * eta * sigma)
    with pytest.raises(ValueError):
        momentum_step(ParticipantState(np.zeros(1)), LossSample.center(0.0), [0.0], 0.1, 0.0)


def test_unit_momentum_is_ogd():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.standard_normal(4)
        sample = LossSample(x, float(rng.standard_normal()))
        w = rng.standard_normal(4)
        _, sent = momentum_step(ParticipantState(rng.standard_normal(4)), sample, w, 0.05, 1.0)
        assert np.array_equal(sent, ogd_step(w, sample, 0.05))


def test_unit_momentum_engine_trajectory_is_bit_identical():
    base = ExperimentConfig(dim=5, n=9, rule="mean", horizon=300, schedule="constant", eta=0.01)
    ogd = run_trial(base, 0)
    mom = run_trial(base.replace(algorithm="momentum", nu=1.0), 0)
    assert np.array_equal(ogd.final_decision, mom.final_decision)
    assert np.array_equal(ogd.adversarial, mom.adversarial)
    assert np.array_equal(ogd.stochastic, mom.stochastic)


def test_example1_trace():
    trace = run_trial(example_config(1, "geomed"), 0)
    assert trace.final_decision[0] == 1.0
    assert trace.adversarial[-1] == pytest.approx(500.0, rel=1e-12)
    assert np.allclose(trace.adversarial, 0.5 * trace.steps, rtol=1e-12)


def test_example2_trace():
    trace = run_trial(example_config(2, "coomed"), 0)
    assert trace.stochastic[-1] == pytest.approx(500.0, rel=1e-12)


def test_already_optimal_run_has_zero_regret():
    cfg = ExperimentConfig(dim=3, n=1, rule="mean", noise_std=0.0, horizon=200, seed=9)
    exp = resolve(cfg)
    truth = LossStream(exp.environment, exp.cohort, RandomStream(9, (0,))).spec.ground_truth
    trace = run_trial(cfg.replace(w0=tuple(truth)), 0)
    assert np.allclose(trace.adversarial, 0.0, atol=1e-12)
    assert np.allclose(trace.stochastic, 0.0, atol=1e-12)


def test_regret_matches_independent_replay():
    cfg = ExperimentConfig(dim=3, n=5, rule="mean", horizon=120, schedule="constant", eta=0.05, seed=4)
    exp = resolve(cfg)
    trace = run_trial(exp, 2)
    stream = LossStream(exp.environment, exp.cohort, RandomStream(4, (2,)))
    w = exp.w1.copy()
    xs, ys, ws = [], [], []
    for t in range(1, exp.horizon + 1):
        x, y = stream.draw(t)
        xs.append(x.copy())
        ys.append(y.copy())
        ws.append(w.copy())
        w = w - 0.05 * np.mean([xi * (xi @ w - yi) for xi, yi in zip(x, y)], axis=0)
        total, best = oracles.hindsight_regret(xs, ys, ws)
        k = trace.at(t)
        assert trace.cum_loss[k] == pytest.approx(total, rel=1e-9)
        assert trace.adversarial[k] == pytest.approx(total - best, rel=1e-7, abs=1e-9)


def test_regret_is_loss_minus_hindsight():
    trace = run_trial(ExperimentConfig(dim=4, n=7, byzantine_count=2, rule="geomed", attack="signflip", horizon=500), 1)
    cum = trace.cum_loss
    assert np.all(np.diff(cum) >= 0)
    assert trace.adversarial[-1] == pytest.approx(cum[-1] - trace.hindsight_loss, rel=1e-9)


def test_checkpoints():
    assert np.array_equal(checkpoints(5), [1, 2, 3, 4, 5])
    marks = checkpoints(10_000)
    assert marks[0] == 1 and marks[-1] == 10_000
    assert {10, 100, 1000, 10_000} <= set(marks.tolist())
    assert np.all(np.diff(marks) > 0)


def test_honest_state_isolation(monkeypatch):
    real = engine.byzantine_payloads
    calls = []

    def digest(a):
        return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()

    def watched(spec, view, cohort, rng=None):
        honest = view.honest_messages[cohort.honest_mask()]
        before = (digest(honest), digest(view.decision))
        out = real(spec, view, cohort, rng)
        with pytest.raises(ValueError):
            view.honest_messages[0, 0] = 1e9
        calls.append(before == (digest(honest), digest(view.decision)))
        return out

    monkeypatch.setattr(engine, "byzantine_payloads", watched)
    for attack in ("signflip", "gaussian", "dup"):
        run_trial(ExperimentConfig(dim=3, n=10, byzantine_count=3, rule="trimean", attack=attack, horizon=50), 0)
    assert len(calls) == 3 * 49 and all(calls)


def test_trial_errors_name_the_step(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("kaput")

    monkeypatch.setattr(engine, "aggregate", boom)
    with pytest.raises(TrialError, match="step 1"):
        run_trial(ExperimentConfig(dim=2, n=4, horizon=5), 0)


def test_deterministic_ensembles():
    cfg = example_config(1, "geomed").replace(trials=10, horizon=200)
    res = run_experiment(cfg, workers=1)
    assert np.array_equal(res.mean_adversarial, res.max_adversarial)
    assert np.array_equal(res.mean_adversarial, res.traces[0].adversarial)
    single = reduce_traces([res.traces[3]])
    assert np.array_equal(single.mean_adversarial, res.traces[3].adversarial)


def test_serial_and_parallel_agree():
    cfg = ExperimentConfig(dim=4, n=10, byzantine_count=2, rule="geomed", attack="gaussian", horizon=300, trials=4)
    serial = run_experiment(cfg, workers=1)
    parallel = run_experiment(cfg, workers=2)
    again = run_experiment(cfg, workers=1)
    for a, b, c in zip(serial.traces, parallel.traces, again.traces):
        assert np.array_equal(a.adversarial, b.adversarial) and np.array_equal(a.adversarial, c.adversarial)
        assert np.array_equal(a.stochastic, b.stochastic)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("BYZ_THREADS", "2")
    assert engine.default_workers(10) == 2
    assert engine.default_workers(1) == 1
