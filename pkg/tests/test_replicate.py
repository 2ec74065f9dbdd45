import pytest

from byzregret.aggregators import ROBUST_RULES
from byzregret.presets import WIDE_COHORTS, example_config, grid_config, preset
from byzregret.replicate import replicate


@pytest.mark.parametrize("example", [1, 2])
def test_all_robust_rules_replicate(example):
    report = replicate(example)
    assert [r.rule for r in report.rows] == list(ROBUST_RULES)
    assert report.ok, report.lines()
    for row in report.rows:
        if row.check == "exact":
            assert row.value == pytest.approx(0.5, rel=1e-6)


def test_replicate_rejects_bad_requests():
    with pytest.raises(ValueError):
        replicate(4)
    with pytest.raises(ValueError):
        replicate(1, ["mean"])


def test_example_cohorts():
    cfg = example_config(2, "geomed")
    assert (cfg.n, cfg.byzantine_ids, cfg.m0) == (3, (3,), (0.0, 2.0, 0.0))
    for rule, (n, ids) in WIDE_COHORTS.items():
        cfg = example_config(1, rule)
        assert cfg.n == n and cfg.byzantine_ids == ids
    assert example_config(3).w0 == (0.5,)
    with pytest.raises(ValueError):
        example_config(5)


def test_grid_presets():
    cfg = preset("noniid-ogd-constant-dup-cc")
    assert (cfg.n, cfg.byzantine_count, cfg.tau, cfg.eta, cfg.environment) == (30, 3, None, 0.005, "noniid_ls")
    cfg = grid_config("iid", "momentum", "diminishing", "none", "krum")
    assert (cfg.byzantine_count, cfg.schedule, cfg.horizon, cfg.trials) == (0, "piecewise", 2000, 10)
