"""The scheduling MDP: one step is one FL global iteration.

The agent assigns CPU frequency and transmit power to every worker; the
environment books energies, applies the round deadline under the chosen
synchronization protocol, advances the emulated FL process with the valid
updates and returns the penalty-shaped reward.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import energy as em
from .config import EnvConfig, Population, SyncMode, generate_environment, resample_channel, resample_datasets
from .emulator import EmulatedRun, sample_local_iters, start_run

log = logging.getLogger(__name__)


class EpisodeFinishedError(RuntimeError):
    """step() called on an episode that already terminated."""


@dataclass
class EnvState:
    local_iters: np.ndarray
    wasted_j: np.ndarray
    e: float
    f_max: np.ndarray
    p_max: np.ndarray
    bandwidth: np.ndarray
    n_samples: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.local_iters, self.wasted_j, [self.e], self.f_max,
                               self.p_max, self.bandwidth, self.n_samples]).astype(float)

    @classmethod
    def from_vector(cls, vec, n_workers: int) -> "EnvState":
        v = np.asarray(vec, dtype=float)
        k = n_workers
        if v.shape != (6 * k + 1,):
            raise ValueError(f"state vector must have length {6 * k + 1}, got {v.shape}")
        return cls(v[:k], v[k:2 * k], float(v[2 * k]), v[2 * k + 1:3 * k + 1],
                   v[3 * k + 1:4 * k + 1], v[4 * k + 1:5 * k + 1], v[5 * k + 1:])


@dataclass
class ChannelUsage:
    accesses: int = 0
    occupation_time: float = 0.0
    unnecessary_accesses: int = 0
    unnecessary_time: float = 0.0


@dataclass
class StepOutcome:
    reward: float
    state: EnvState
    done: bool
    comp_j: np.ndarray      # E^C already gated by omega
    tx_j: np.ndarray
    wasted_j: np.ndarray
    p1: np.ndarray
    p2: int
    channel: ChannelUsage
    round_time: float
    fraction: float
    e: float
    f: np.ndarray
    p: np.ndarray
    mu1: float
    mu2: float
    truncated: bool = False  # stopped by the round safeguard, not by convergence

    def __iter__(self):
        # gym-style unpacking: state, reward, done, metrics
        return iter((self.state, self.reward, self.done, self))

    @property
    def round_energy(self) -> float:
        return float(self.comp_j.sum() + self.tx_j.sum() + self.wasted_j.sum())


def normalize_state(state: EnvState, maxima: dict[str, float]) -> np.ndarray:
    parts = [
        state.local_iters / maxima["local_iters"],
        state.wasted_j / maxima["wasted_j"],
        [state.e],
        state.f_max / maxima["f_max"],
        state.p_max / maxima["p_max"],
        state.bandwidth / maxima["bandwidth"],
        state.n_samples / maxima["n_samples"],
    ]
    return np.clip(np.concatenate(parts).astype(float), 0.0, 1.0)


def decode_action(raw, f_max, p_max, deadzone_frac: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Map a raw action in [-1, 1]^(2K) to per-worker (f, p).

    The first K entries drive CPU frequency, the last K transmit power.
    Values landing below ``deadzone_frac * cap`` become exactly zero.
    """
    raw = np.asarray(raw, dtype=float)
    k = len(f_max)
    if raw.shape != (2 * k,):
        raise ValueError(f"action must have length {2 * k}, got {raw.shape}")
    if np.any(np.abs(raw) > 1.0):
        log.debug("clamping out-of-range action entries: %s", raw)
        raw = np.clip(raw, -1.0, 1.0)
    frac = (raw + 1.0) / 2.0
    frac[frac < deadzone_frac] = 0.0
    return frac[:k] * np.asarray(f_max, dtype=float), frac[k:] * np.asarray(p_max, dtype=float)


class FLEnv:
    """Energy-aware FL scheduling environment.

    ``reset(seed)`` starts an episode; ``step(action)`` plays one global
    iteration and returns a :class:`StepOutcome` (which also unpacks as
    ``state, reward, done, info``).
    """

    def __init__(self, config: EnvConfig, seed: int | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.n_workers = config.n_workers
        self.mu1, self.mu2 = config.penalty_weights
        self.maxima = config.caps_maxima()
        self.sync_mode = config.sync_mode
        # static worker tiers and distances are fixed for the life of the env
        self._base = generate_environment(config, np.random.default_rng([self.seed, 0xBA5E]))
        self._episodes = 0
        self.pop: Population | None = None
        self.run: EmulatedRun | None = None
        self.state: EnvState | None = None
        self.done = True

    @property
    def obs_dim(self) -> int:
        return 6 * self.n_workers + 1

    @property
    def act_dim(self) -> int:
        return 2 * self.n_workers

    def reset(self, seed: int | None = None) -> EnvState:
        if seed is None:
            seed = self._episodes
        self._episodes += 1
        cfg = self.config
        self.rng = np.random.default_rng([self.seed, int(seed)])
        if cfg.kind == "static":
            self.pop = self._base.copy()
            resample_datasets(self.pop, cfg, self.rng)
        else:
            self.pop = generate_environment(cfg, self.rng)
        v_lo, v_hi = cfg.variance
        self.local_iters = np.array([sample_local_iters(v, v_lo, v_hi, cfg.emulator)
                                     for v in self.pop.variance], dtype=int)
        self.run = start_run(self.local_iters, cfg.emulator, cfg.model.epsilon0, self.rng,
                             weights=self.pop.variance, f_star=cfg.model.f_star)
        self.done = False
        k = self.n_workers
        self.state = EnvState(np.zeros(k), np.zeros(k), 1.0, self.pop.f_max.copy(),
                              self.pop.p_max.copy(), self.pop.bandwidth.copy(),
                              self.pop.n_samples.astype(float))
        return self.state

    def normalize(self, state: EnvState) -> np.ndarray:
        return normalize_state(state, self.maxima)

    def decode(self, raw) -> tuple[np.ndarray, np.ndarray]:
        return decode_action(raw, self.pop.f_max, self.pop.p_max, self.config.deadzone_frac)

    def step(self, action, mode: SyncMode | None = None) -> StepOutcome:
        if self.done or self.run is None:
            raise EpisodeFinishedError("episode is finished; call reset() first")
        mode = self.sync_mode if mode is None else mode
        cfg = self.config
        spec = cfg.model
        f, p = self.decode(action)
        k = self.n_workers
        comp = np.zeros(k)
        tx = np.zeros(k)
        wasted = np.zeros(k)
        p1 = np.zeros(k, dtype=int)
        chan = ChannelUsage()
        valid = np.zeros(k, dtype=bool)
        round_time = 0.0

        for i, caps in enumerate(self.pop.caps()):
            if f[i] <= 0 or p[i] <= 0:
                # not selected: no local training (omega gate) or nothing to send
                continue
            e_comp = em.comp_energy(caps, spec, self.local_iters[i], f[i])
            tau = em.comp_time(caps, spec, self.local_iters[i], f[i])
            rate = em.data_rate(caps.bandwidth, em.channel_gain_linear(caps.distance_km), p[i], cfg.n0_w_per_hz)
            t = em.tx_time(spec, rate, p[i])
            e_tx = em.tx_energy(spec, p[i], rate)
            comp[i] = e_comp * em.omega(p[i])
            on_time = em.deadline_ok(tau, t, spec.deadline_h)
            if on_time:
                tx[i] = e_tx
                chan.accesses += 1
                chan.occupation_time += t
                valid[i] = True
                round_time = max(round_time, tau + t)
                continue
            p1[i] = 1
            round_time = spec.deadline_h
            if mode is SyncMode.WORKER:
                wasted[i] = e_comp
            else:
                tx[i] = e_tx
                wasted[i] = e_comp + e_tx
                chan.accesses += 1
                chan.occupation_time += t
                chan.unnecessary_accesses += 1
                chan.unnecessary_time += t

        p2 = 0 if f.sum() > 0 else 1
        v = self.pop.variance
        fraction = float(v[valid].sum() / v.sum()) if v.sum() > 0 else float(valid.mean())
        e, converged = self.run.advance(fraction)
        self.done = converged or self.run.rounds >= cfg.emulator.max_rounds_safeguard

        reward = -(comp.sum() + tx.sum() + wasted.sum() + self.mu1 * p1.sum() + self.mu2 * p2)

        if cfg.kind == "dynamic" and not self.done:
            resample_channel(self.pop, cfg, self.rng)
        self.state = EnvState(self.local_iters.astype(float), wasted.copy(), e, self.pop.f_max.copy(),
                              self.pop.p_max.copy(), self.pop.bandwidth.copy(),
                              self.pop.n_samples.astype(float))
        return StepOutcome(reward=float(reward), state=self.state, done=self.done, comp_j=comp, tx_j=tx,
                           wasted_j=wasted, p1=p1, p2=p2, channel=chan, round_time=round_time,
                           fraction=fraction, e=e, f=f, p=p, mu1=self.mu1, mu2=self.mu2,
                           truncated=self.done and not converged)
