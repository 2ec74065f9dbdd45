import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzregret.core import (
    Cohort,
    DimensionError,
    Message,
    RandomStream,
    as_vector,
    honest_mean,
    max_honest_deviation,
    messages_from_array,
    stack_messages,
)


def test_honest_mean_ignores_byzantine_payloads():
    cohort = Cohort(3, frozenset({3}))
    z = np.array([[1.0, 3.0], [3.0, 5.0], [1e9, -1e9]])
    assert np.array_equal(honest_mean(z, cohort), [2.0, 4.0])


def test_single_honest_participant_is_identity():
    v = np.array([0.3, -7.0])
    assert np.array_equal(honest_mean(v[None, :], Cohort(1)), v)


def test_honest_mean_after_one_counter_example_step():
    sigma, eta = 1.0, 0.1
    z = np.array([[sigma], [sigma - 2 * eta * sigma], [sigma]])
    assert honest_mean(z, Cohort(3, frozenset({3})))[0] == pytest.approx(0.9, abs=1e-15)


def test_max_deviation_examples():
    assert max_honest_deviation(np.array([[1.0], [3.0]]), Cohort(2)) == 1.0
    assert max_honest_deviation(np.full((4, 3), 2.5), Cohort(4)) == 0.0
    sigma, eta = 1.0, 0.1
    z = np.array([[sigma], [sigma - 2 * eta * sigma], [5.0]])
    assert max_honest_deviation(z, Cohort(3, frozenset({3}))) == pytest.approx(eta**2 * sigma**2, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    # eighths keep squared deviations clear of float64 underflow
    st.lists(st.lists(st.integers(-8000, 8000).map(lambda k: k / 8), min_size=2, max_size=2), min_size=3, max_size=9),
    st.randoms(use_true_random=False),
)
def test_honest_statistics_invariances(rows, rnd):
    z = np.array(rows)
    n = len(rows)
    b = rnd.randrange(0, (n - 1) // 2 + 1)
    byz = frozenset(rnd.sample(range(1, n + 1), b))
    cohort = Cohort(n, byz)
    center = honest_mean(z, cohort)
    zeta2 = max_honest_deviation(z, cohort)
    # byzantine rows never matter
    z2 = z.copy()
    for j in byz:
        z2[j - 1] = rnd.uniform(-1e6, 1e6)
    assert np.array_equal(honest_mean(z2, cohort), center)
    # relabelling participants permutes the cohort with them
    perm = list(range(n))
    rnd.shuffle(perm)
    inverse = {old + 1: new + 1 for new, old in enumerate(perm)}
    permuted = Cohort(n, frozenset(inverse[j] for j in byz))
    assert np.allclose(honest_mean(z[perm], permuted), center, rtol=1e-12, atol=1e-9)
    assert zeta2 >= 0
    honest = z[cohort.honest_mask()]
    assert (zeta2 == 0) == bool(np.all(honest == honest[0]))


def test_cohort_validation():
    with pytest.raises(ValueError):
        Cohort(4, frozenset({1, 2}))
    with pytest.raises(ValueError):
        Cohort(3, frozenset({4}))
    c = Cohort(5, frozenset({2, 5}))
    assert c.honest_ids == (1, 3, 4)
    assert c.alpha == 0.4
    assert list(c.honest_mask()) == [True, False, True, True, False]


def test_vectors_and_messages():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(DimensionError):
        as_vector([1.0, 2.0], dim=3)
    with pytest.raises(ValueError):
        Message(0, [1.0])
    v = as_vector([1, 2])
    with pytest.raises(ValueError):
        v[0] = 5.0
    msgs = [Message(2, [3.0]), Message(1, [1.0])]
    assert np.array_equal(stack_messages(msgs), [[1.0], [3.0]])
    with pytest.raises(DimensionError):
        stack_messages([Message(1, [1.0]), Message(2, [1.0, 2.0])])
    with pytest.raises(ValueError):
        stack_messages([Message(1, [1.0]), Message(3, [1.0])])
    assert [m.sender for m in messages_from_array(np.zeros((3, 2)))] == [1, 2, 3]


def test_random_stream_reproducible_and_independent():
    a = RandomStream(7, (1, 2)).generator().standard_normal(5)
    b = RandomStream(7, (1, 2)).generator().standard_normal(5)
    c = RandomStream(7, (1, 3)).generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert RandomStream(7).child(1, 2) == RandomStream(7, (1, 2))
    with pytest.raises(ValueError):
        RandomStream(-1)
