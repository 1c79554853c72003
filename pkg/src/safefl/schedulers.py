"""Agent interface and the heuristic baseline schedulers.

All agents emit raw actions in [-1, 1]^(2K); the environment decodes them
against the current capability caps.
"""
from __future__ import annotations

import math
from typing import Protocol

import numpy as np

from .env import EnvState, StepOutcome


class Agent(Protocol):
    name: str

    def act(self, state: EnvState, rng: np.random.Generator) -> np.ndarray: ...

    def observe(self, outcome: StepOutcome) -> None: ...

    def reset_episode(self) -> None: ...


class BestEffort:
    """Always allocate every worker its full CPU and power budget."""

    name = "bes"

    def __init__(self, n_workers: int):
        self.act_dim = 2 * n_workers

    def act(self, state, rng=None):
        return np.ones(self.act_dim)

    def observe(self, outcome):
        pass

    def reset_episode(self):
        pass


class RandomSelection:
    name = "rss"

    def __init__(self, n_workers: int):
        self.act_dim = 2 * n_workers

    def act(self, state, rng):
        return rng.uniform(-1.0, 1.0, size=self.act_dim)

    def observe(self, outcome):
        pass

    def reset_episode(self):
        pass


class GreedySelection:
    """Replay the joint action with the lowest round energy seen so far.

    Only rounds without constraint violations qualify as an outcome worth
    replaying. With probability ``explore`` (and whenever nothing has
    qualified yet) a uniformly random action is tried instead. Memory is
    kept for the whole run, across episodes.
    """

    name = "gss"

    def __init__(self, n_workers: int, explore: float = 0.1):
        self.act_dim = 2 * n_workers
        self.explore = explore
        self.best_action: np.ndarray | None = None
        self.best_round_energy = math.inf
        self._last: np.ndarray | None = None

    def act(self, state, rng):
        if self.best_action is None or (self.explore > 0 and rng.random() < self.explore):
            self._last = rng.uniform(-1.0, 1.0, size=self.act_dim)
        else:
            self._last = self.best_action.copy()
        return self._last

    def observe(self, outcome: StepOutcome):
        if self._last is None:
            return
        feasible = outcome.p1.sum() == 0 and outcome.p2 == 0
        energy = outcome.round_energy
        if feasible and energy < self.best_round_energy:
            self.best_round_energy = energy
            self.best_action = self._last.copy()

    def reset_episode(self):
        self._last = None


def make_baseline(name: str, n_workers: int, **kw):
    try:
        cls = {"bes": BestEffort, "rss": RandomSelection, "gss": GreedySelection}[name]
    except KeyError:
        raise ValueError(f"unknown scheduler {name!r}") from None
    return cls(n_workers, **kw)
