import numpy as np
import pytest

from byzregret.attacks import AttackSpec, AttackView, byzantine_messages, byzantine_payloads, gaussian_attack_audit
from byzregret.core import Cohort
from byzregret.environment import LossStreamSpec


def _view(z, true, w=(0.0,), rule="geomed", env=None, eta=0.1):
    env = env or LossStreamSpec("iid_ls", d=len(w))
    return AttackView(np.array(z, float), np.array(true, float), np.array(w, float), 1, eta, rule, env)


def test_sign_flip_scales_own_update():
    cohort = Cohort(3, frozenset({3}))
    view = _view([[0, 0], [0, 0], [9, 9]], [[2.0, -1.0]], w=(0.0, 0.0))
    assert np.array_equal(byzantine_payloads(AttackSpec("signflip"), view, cohort), [[-6.0, 3.0]])


def test_duplicating_copies_the_victim():
    cohort = Cohort(7, frozenset({2, 6, 7}))
    z = np.zeros((7, 2))
    z[0] = [5, 5]
    z[2] = [1, 1]
    out = byzantine_messages(AttackSpec("dup"), _view(z, np.zeros((3, 2)), (0.0, 0.0)), cohort)
    assert [m.sender for m in out] == [2, 6, 7]
    assert all(np.array_equal(m.payload, [5, 5]) for m in out)
    out = byzantine_payloads(AttackSpec("dup", victim=3), _view(z, np.zeros((3, 2)), (0.0, 0.0)), cohort)
    assert np.array_equal(out, [[1, 1]] * 3)
    with pytest.raises(ValueError):
        AttackSpec("dup", victim=2).resolve_victim(cohort)


def test_example1_payloads():
    env = LossStreamSpec("example1", d=1, sigma=1.0)
    cohort = Cohort(3, frozenset({3}))
    z = [[1.0], [0.8], [0.0]]
    for rule in ("geomed", "coomed", "trimean"):
        assert byzantine_payloads(AttackSpec("ex1"), _view(z, [[0.0]], (1.0,), rule, env), cohort)[0, 0] == 1.0
    cc = byzantine_payloads(AttackSpec("ex1"), _view(z, [[0.0]], (1.0,), "cc", env), cohort)
    assert cc[0, 0] == pytest.approx(1.0 + 2 * 0.1 * 1.0, rel=1e-15)
    with pytest.raises(ValueError):
        byzantine_payloads(AttackSpec("ex1"), _view(z, [[0.0]], (1.0,)), cohort)


def test_example3_payloads():
    env = LossStreamSpec("example3", d=1, sigma=1.0)
    cohort = Cohort(3, frozenset({3}))
    w, eta = 0.4, 0.1
    out = byzantine_payloads(AttackSpec("ex3"), _view([[0.3], [0.5], [0]], [[0]], (w,), "geomed", env, eta), cohort)
    assert out[0, 0] == pytest.approx((1 - eta) * w + eta, rel=1e-15)
    out = byzantine_payloads(AttackSpec("ex3"), _view([[0.3], [0.5], [0]], [[0]], (w,), "cc", env, eta), cohort)
    assert out[0, 0] == pytest.approx((1 - eta) * w + 3 * eta, rel=1e-15)
    out = byzantine_payloads(AttackSpec("ex3"), _view([[0.3], [0.3], [0]], [[0]], (w,), "cc", env, eta), cohort)
    assert out[0, 0] == 0.3


def test_view_is_read_only_and_copied():
    z = np.ones((3, 1))
    view = _view(z, [[0.0]])
    with pytest.raises(ValueError):
        view.honest_messages[0, 0] = 5.0
    z[0, 0] = 7.0
    assert view.honest_messages[0, 0] == 1.0


@pytest.mark.parametrize("var", [500.0, 200.0])
def test_gaussian_attack_audit(var):
    mean, est = gaussian_attack_audit(AttackSpec("gaussian", noise_var=var), 100_000, 2, np.random.default_rng(0))
    assert np.all(np.abs(mean) < 0.3)
    assert np.all(np.abs(est / var - 1) < 0.05)


def test_gaussian_attack_domain():
    with pytest.raises(ValueError):
        AttackSpec("gaussian", noise_var=0.0)
    with pytest.raises(ValueError):
        gaussian_attack_audit(AttackSpec("gaussian"), 100, 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        AttackSpec("signflip", coefficient=float("inf"))
