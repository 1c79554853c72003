from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import quad

from safefl.env import FLEnv, decode_action
from safefl.schedulers import BestEffort, GreedySelection, RandomSelection, make_baseline


def outcome(energy, p1=0, p2=0):
    return SimpleNamespace(round_energy=energy, p1=np.array([p1]), p2=p2)


def test_bes_is_full_capacity(static5):
    env = FLEnv(static5)
    state = env.reset(0)
    a = BestEffort(5).act(state)
    np.testing.assert_array_equal(a, np.ones(10))
    f, p = env.decode(a)
    np.testing.assert_array_equal(f, env.pop.f_max)
    np.testing.assert_array_equal(p, env.pop.p_max)


def test_rss_reproducible_and_bounded():
    agent = RandomSelection(5)
    a1 = agent.act(None, np.random.default_rng(9))
    a2 = agent.act(None, np.random.default_rng(9))
    np.testing.assert_array_equal(a1, a2)
    assert np.all(np.abs(a1) <= 1)
    f, p = decode_action(a1, np.full(5, 3e9), np.full(5, 2.0))
    assert np.all((f >= 0) & (f <= 3e9)) and np.all((p >= 0) & (p <= 2.0))


def test_rss_decoded_mean_matches_quadrature():
    dz = 0.05
    # E[decoded fraction] for fraction ~ U(0, 1) zeroed below the dead zone
    expected, _ = quad(lambda x: x if x >= dz else 0.0, 0.0, 1.0, points=[dz])
    agent = RandomSelection(50_000)
    raw = agent.act(None, np.random.default_rng(0))  # 1e5 draws
    f, p = decode_action(raw, np.full(50_000, 3e9), np.full(50_000, 2.0), dz)
    emp = np.concatenate([f / 3e9, p / 2.0]).mean()
    assert emp == pytest.approx(expected, rel=0.02)


def test_gss_cold_start_is_random():
    g = GreedySelection(5)
    a = g.act(None, np.random.default_rng(0))
    np.testing.assert_array_equal(a, np.random.default_rng(0).uniform(-1, 1, 10))


def test_gss_tracks_minimum_energy():
    g = GreedySelection(5, explore=0.0)
    rng = np.random.default_rng(0)
    a5 = g.act(None, rng)
    g.observe(outcome(5.0))
    g.best_action = None  # force another random draw
    a3 = g.act(None, rng)
    g.observe(outcome(3.0))
    assert g.best_round_energy == 3.0
    np.testing.assert_array_equal(g.best_action, a3)
    assert not np.array_equal(a3, a5)
    np.testing.assert_array_equal(g.act(None, rng), a3)


def test_gss_keeps_incumbent_on_tie_and_ignores_violations():
    g = GreedySelection(5, explore=0.0)
    rng = np.random.default_rng(0)
    first = g.act(None, rng)
    g.observe(outcome(4.0))
    g._last = np.zeros(10)
    g.observe(outcome(4.0))
    np.testing.assert_array_equal(g.best_action, first)
    g._last = np.full(10, 0.5)
    g.observe(outcome(1.0, p1=1))
    g.observe(outcome(0.0, p2=1))
    np.testing.assert_array_equal(g.best_action, first)


def test_gss_replay_identical_energy_in_static_env(static5):
    env = FLEnv(static5)
    g = GreedySelection(5, explore=0.0)
    rng = np.random.default_rng(1)
    energies = []
    state = env.reset(0)
    for _ in range(15):
        out = env.step(g.act(state, rng))
        g.observe(out)
        state = out.state
        if g.best_action is not None:
            energies.append(out.round_energy)
        if out.done:
            break
    assert len(energies) >= 2
    # once a feasible action is memorized, replay reproduces its energy exactly
    assert len(set(energies[1:])) == 1


def test_make_baseline():
    assert make_baseline("gss", 3).act_dim == 6
    with pytest.raises(ValueError):
        make_baseline("gas", 3)
