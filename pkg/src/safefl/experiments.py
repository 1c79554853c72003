"""Experiment drivers: evaluation, scheduler comparison, synchronization
study and offline training. Every driver derives its random streams from
(master seed, episode index), so reruns are bit-identical and every
scheduler in a comparison faces the same sequence of networks.
"""
from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import numpy as np

from .config import EnvConfig, SyncMode
from .env import FLEnv
from .metrics import EpisodeMetrics, summarize, write_episodes
from .sac import FrozenPolicy, SacConfig, load_policy, save_policy, train
from .schedulers import make_baseline

log = logging.getLogger(__name__)

AGENT_STREAM = 0xA6E


def run_episode(env: FLEnv, agent, rng: np.random.Generator, episode: int) -> EpisodeMetrics:
    state = env.reset(episode)
    agent.reset_episode()
    metrics = EpisodeMetrics(episode=episode)
    done = False
    while not done:
        out = env.step(agent.act(state, rng))
        agent.observe(out)
        metrics.add(out)
        state, done = out.state, out.done
    return metrics


def make_agent(name: str, config: EnvConfig, policy: FrozenPolicy | str | Path | None = None):
    if name == "sac":
        if policy is None:
            raise ValueError("the sac agent needs a trained policy checkpoint")
        if not isinstance(policy, FrozenPolicy):
            policy = load_policy(policy, n_workers=config.n_workers)
        elif policy.n_workers != config.n_workers:
            raise ValueError(f"policy is for {policy.n_workers} workers, config has {config.n_workers}")
        return policy
    return make_baseline(name, config.n_workers)


def evaluate(config: EnvConfig, agent_name: str, episodes: int, seed: int = 0,
             policy=None) -> list[EpisodeMetrics]:
    env = FLEnv(config, seed=seed)
    agent = make_agent(agent_name, config, policy)
    return [run_episode(env, agent, np.random.default_rng([seed, ep, AGENT_STREAM]), ep)
            for ep in range(episodes)]


def compare(config: EnvConfig, agents, episodes: int, seed: int = 0, policy=None) -> list[dict]:
    rows = []
    for name in agents:
        eps = evaluate(config, name, episodes, seed, policy)
        rows.append({"scheduler": name, **summarize(eps)})
    return rows


def sync_study(config: EnvConfig, deadlines, episodes: int, seed: int = 0, agent: str = "rss",
               policy=None) -> list[dict]:
    rows = []
    for mode in (SyncMode.WORKER, SyncMode.COORDINATOR):
        for h in deadlines:
            cfg = config.with_overrides(model=dataclasses.replace(config.model, deadline_h=float(h)),
                                        sync_mode=mode)
            eps = evaluate(cfg, agent, episodes, seed, policy)
            rows.append({"mode": mode.value, "h_s": float(h), "scheduler": agent, **summarize(eps)})
    return rows


def run_training(config: EnvConfig, episodes: int, seed: int, out_csv: str | Path | None = None,
                 checkpoint: str | Path | None = None, sac_config: SacConfig | None = None,
                 progress_every: int = 0):
    env = FLEnv(config, seed=seed)

    def report(m: EpisodeMetrics):
        if progress_every and (m.episode + 1) % progress_every == 0:
            log.info("episode %d reward %.2f total %.1f J violations %d", m.episode + 1, m.reward,
                     m.total_J, m.p1 + m.p2)

    agent, hist = train(env, episodes, sac_config, seed=seed, on_episode=report)
    if out_csv is not None:
        write_episodes(out_csv, hist.episodes)
    if checkpoint is not None:
        save_policy(agent, checkpoint)
    return agent, hist
