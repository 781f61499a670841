import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from piag.delays import KINDS, DelaySchedule, RecordedDelays
from piag.errors import ParameterError


def test_zero_schedule():
    s = DelaySchedule("zero", 0, 4)
    for k in (0, 1, 17):
        np.testing.assert_array_equal(s.delays_at(k), np.zeros(4))
        assert s.refresh_set_at(k) == {0, 1, 2, 3}


def test_adversarial_max_is_clamped_by_k():
    s = DelaySchedule("adversarial-max", 3, 5)
    np.testing.assert_array_equal(s.delays_at(10), [3] * 5)
    np.testing.assert_array_equal(s.delays_at(1), [1] * 5)
    np.testing.assert_array_equal(s.delays_at(0), [0] * 5)


@pytest.mark.parametrize("kind", KINDS)
def test_first_iteration_refreshes_everything(kind):
    assert DelaySchedule(kind, 4, 6, seed=3).refresh_set_at(0) == set(range(6))


def test_cyclic_round_robin():
    s = DelaySchedule("cyclic", 2, 3)
    # components are 0-based: k=1 refreshes the second component
    assert [s.refresh_set_at(k) for k in range(1, 5)] == [{1}, {2}, {0}, {1}]
    assert DelaySchedule("cyclic", 1, 5).block == 3


def _brute_force_window(schedule, K):
    N, tau = schedule.n_components, schedule.tau
    sets = [schedule.refresh_set_at(k) for k in range(K)]
    for k in range(tau, K):
        covered = set().union(*sets[k - tau:k + 1])
        assert covered == set(range(N)), (schedule, k)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("tau,N", [(0, 3), (1, 1), (2, 3), (3, 7), (5, 4), (10, 2)])
def test_refresh_window_covers_all_components(kind, tau, N):
    _brute_force_window(DelaySchedule(kind, tau, N, seed=11), 1000)


@pytest.mark.parametrize("kind", KINDS)
def test_delays_bounded(kind):
    s = DelaySchedule(kind, 4, 6, seed=5)
    for k in range(1000):
        d = s.delays_at(k)
        assert d.shape == (6,)
        assert d.min() >= 0 and d.max() <= min(4, k)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 8), st.integers(1, 9), st.integers(0, 2**32),
       st.integers(0, 500))
def test_delays_admissible_property(kind, tau, N, seed, k):
    d = DelaySchedule(kind, tau, N, seed).delays_at(k)
    assert np.all((0 <= d) & (d <= min(tau, k)))


def test_cyclic_delays_are_ages_of_round_robin():
    s = DelaySchedule("cyclic", 2, 3)
    last = {n: 0 for n in range(3)}
    for k in range(50):
        for n in s.refresh_set_at(k):
            last[n] = k
        np.testing.assert_array_equal(s.delays_at(k), [k - last[n] for n in range(3)])


def test_seeded_schedules_replay():
    a = DelaySchedule("uniform-random", 5, 4, seed=42)
    b = DelaySchedule("uniform-random", 5, 4, seed=42)
    c = DelaySchedule("uniform-random", 5, 4, seed=43)
    # query b out of order; results must not depend on call history
    late = b.refresh_set_at(300)
    assert [a.refresh_set_at(k) for k in range(301)][-1] == late
    for k in (0, 7, 99, 300):
        np.testing.assert_array_equal(a.delays_at(k), b.delays_at(k))
    assert any(not np.array_equal(a.delays_at(k), c.delays_at(k)) for k in range(10, 40))


def test_recorded_delays_replay():
    r = RecordedDelays([[0, 0], [1, 0], [0, 1]], tau=1)
    assert r.n_components == 2
    np.testing.assert_array_equal(r.delays_at(1), [1, 0])


@pytest.mark.parametrize("args", [("sometimes", 1, 2), ("cyclic", -1, 2), ("cyclic", 1, 0),
                                  ("cyclic", 1.5, 2)])
def test_invalid_schedules(args):
    with pytest.raises(ParameterError):
        DelaySchedule(*args)


def test_negative_iteration_rejected():
    with pytest.raises(ParameterError):
        DelaySchedule("cyclic", 1, 2).delays_at(-1)
