import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safefl.emulator import (EmulatedRun, EmulatorParams, local_rate, performance_rate, round_half_up,
                             sample_global_budget, sample_local_iters, start_run)

P = EmulatorParams()


def test_local_iters_endpoints_and_midpoint():
    assert sample_local_iters(0.1, 0.1, 0.9, P) == 2
    assert sample_local_iters(0.9, 0.1, 0.9, P) == 11
    # 2 + 0.5 * 9 = 6.5 rounds half up
    assert sample_local_iters(0.5, 0.1, 0.9, P) == 7
    assert sample_local_iters(0.3, 0.3, 0.3, P) == 7


def test_global_budget_reversed():
    assert sample_global_budget(2, P) == 22
    assert sample_global_budget(11, P) == 10
    # 22 - 0.5 * 12
    assert sample_global_budget(6.5, P) == 16


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_iteration_maps_stay_in_range_and_monotone(a, b):
    lo, hi = sorted((a, b))
    i_lo, i_hi = sample_local_iters(lo, 0.0, 1.0, P), sample_local_iters(hi, 0.0, 1.0, P)
    assert 2 <= i_lo <= i_hi <= 11
    assert 10 <= sample_global_budget(2 + 9 * a, P) <= 22


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49)] == [1, 2, 3, 2]


def run(g, jitter=0.0, seed=0):
    return EmulatedRun(g_total=g, epsilon0=0.04, jitter=jitter, rng=np.random.default_rng(seed))


def test_full_participation_converges_at_budget():
    r = run(10)
    for n in range(1, 11):
        e, done = r.advance(1.0)
        assert done == (n == 10)
    assert r.e == pytest.approx(0.04, rel=1e-12)
    assert r.e <= 0.04


def test_half_participation_takes_twice_as_long():
    r = run(10)
    rounds = 0
    done = False
    while not done:
        _, done = r.advance(0.5)
        rounds += 1
    assert rounds == 20


def test_zero_participation_never_converges():
    r = run(10)
    for _ in range(200):
        e, done = r.advance(0.0)
        assert not done and e == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.integers(10, 22))
def test_geometric_schedule(fracs, g):
    r = run(g)
    for fr in fracs:
        prev = r.e
        e, done = r.advance(fr)
        if done:
            break
        assert e / prev == pytest.approx(math.exp(math.log(0.04) * fr / g), rel=1e-9)
    assert all(a >= b for a, b in zip(r.e_curve, r.e_curve[1:]))
    assert r.converged == (r.e <= 0.04)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=80), st.integers(0, 1000))
def test_jitter_keeps_monotone_and_convergence_signal(fracs, seed):
    r = run(12, jitter=0.05, seed=seed)
    for fr in fracs:
        e, done = r.advance(fr)
        assert done == (e <= 0.04)
        if done:
            break
    assert all(a >= b for a, b in zip(r.e_curve, r.e_curve[1:]))


def test_local_rate():
    assert local_rate(0.16, 0, 7, eta=0.5) == 1.0
    assert local_rate(0.16, 7, 7, eta=0.5) == 0.5
    assert 0.5 < local_rate(0.16, 3, 7, eta=0.5) < 1.0
    assert performance_rate(0.6, 0.16, 1.0) == pytest.approx((0.6 - 1) / (0.16 - 1), rel=1e-12)
    assert performance_rate(0.6, 0.16, 1.0) == pytest.approx(0.476, abs=5e-4)


def test_start_run_samples_budget_and_accuracy():
    r = start_run([2, 2, 2], P, 0.04, np.random.default_rng(0))
    assert r.g_total == 22
    assert 0.15 <= r.init_acc <= 0.18
    assert r.global_accuracy() == pytest.approx(r.init_acc)


def test_params_validation():
    with pytest.raises(ValueError):
        EmulatorParams(local_iter_range=(1, 11))
    with pytest.raises(ValueError):
        EmulatorParams(init_acc_range=(0.2, 0.1))
