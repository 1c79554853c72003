"""Soft Actor-Critic with a tanh-squashed Gaussian policy, twin critics,
polyak-averaged targets and an auto-tuned entropy coefficient.

Training is offline, on the emulated environment; the result is a frozen
policy used deterministically at inference time.
"""
from __future__ import annotations

import json
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .env import FLEnv, normalize_state
from .metrics import EpisodeMetrics

log = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def default_hidden(n_workers: int) -> tuple[int, ...]:
    return (256, 256) if n_workers <= 10 else (512, 512, 512)


@dataclass
class SacConfig:
    hidden: tuple[int, ...] | None = None
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: float = 0.99
    lr_decay_every: int = 6000  # episodes
    init_alpha: float = 0.8
    target_entropy: float | None = None  # None: -(action dim)
    tau: float = 0.005
    train_every: int = 1000  # env steps
    gradient_steps: int = 1000
    warmup: int = 100
    gamma: float = 1.0
    buffer_capacity: int = 2_000_000


class NonFiniteLossError(FloatingPointError):
    def __init__(self, report: dict):
        super().__init__(f"non-finite SAC loss, update aborted: {report}")
        self.report = report


@dataclass
class LossReport:
    critic_loss: float
    policy_loss: float
    alpha_loss: float
    entropy: float
    alpha: float


class ReplayBuffer:
    """FIFO ring of transitions; storage grows on demand up to ``capacity``."""

    def __init__(self, obs_dim: int, act_dim: int, capacity: int = 2_000_000):
        self.capacity = int(capacity)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self._alloc = 0
        self._obs = np.zeros((0, obs_dim), np.float32)
        self._act = np.zeros((0, act_dim), np.float32)
        self._rew = np.zeros(0, np.float64)
        self._next = np.zeros((0, obs_dim), np.float32)
        self._done = np.zeros(0, np.float32)
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def _grow(self):
        new = min(self.capacity, max(1024, 2 * self._alloc))
        for name in ("_obs", "_act", "_rew", "_next", "_done"):
            old = getattr(self, name)
            arr = np.zeros((new,) + old.shape[1:], old.dtype)
            arr[:self._alloc] = old
            setattr(self, name, arr)
        self._alloc = new

    def add(self, obs, act, reward: float, next_obs, done: bool) -> None:
        if self.pos >= self._alloc:
            self._grow()
        i = self.pos
        self._obs[i] = obs
        self._act[i] = act
        self._rew[i] = reward
        self._next[i] = next_obs
        self._done[i] = float(done)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __getitem__(self, idx):
        return (self._obs[idx], self._act[idx], self._rew[idx], self._next[idx], self._done[idx])

    def oldest_index(self) -> int:
        return self.pos if self.size == self.capacity else 0

    def sample(self, batch_size: int, rng: np.random.Generator):
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} transitions")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self[idx]


def mlp(sizes, generator: torch.Generator, dtype) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lin = nn.Linear(n_in, n_out, dtype=dtype)
        bound = 1.0 / math.sqrt(n_in)
        with torch.no_grad():
            lin.weight.uniform_(-bound, bound, generator=generator)
            lin.bias.uniform_(-bound, bound, generator=generator)
        layers.append(lin)
        if i < len(sizes) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class GaussianPolicy(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, hidden, generator, dtype=torch.float32):
        super().__init__()
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.net = mlp([obs_dim, *hidden, 2 * act_dim], generator, dtype)

    def forward(self, obs):
        mean, log_std = self.net(obs).chunk(2, dim=-1)
        return mean, log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)

    def sample(self, obs, noise):
        """Reparameterized squashed sample and its log-density."""
        mean, log_std = self(obs)
        u = mean + log_std.exp() * noise
        action = torch.tanh(u)
        logp = (-0.5 * noise.pow(2) - log_std - _HALF_LOG_2PI).sum(-1)
        # log(1 - tanh(u)^2), written to stay finite for large |u|
        logp = logp - (2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))).sum(-1)
        return action, logp


class Critic(nn.Module):
    def __init__(self, obs_dim, act_dim, hidden, generator, dtype=torch.float32):
        super().__init__()
        self.net = mlp([obs_dim + act_dim, *hidden, 1], generator, dtype)

    def forward(self, obs, act):
        return self.net(torch.cat([obs, act], dim=-1)).squeeze(-1)


class FrozenPolicy:
    """Inference-only policy with the normalization it was trained under."""

    def __init__(self, policy: GaussianPolicy, n_workers: int, maxima: dict[str, float]):
        self.policy = policy  # no dropout or batch-norm, so train/eval mode is irrelevant
        self._dt = next(policy.parameters()).dtype
        self._layers = [(m.weight.detach().numpy(), m.bias.detach().numpy())
                        for m in policy.net if isinstance(m, nn.Linear)]
        self.n_workers = n_workers
        self.maxima = dict(maxima)
        self.name = "sac"

    def select_action(self, obs, deterministic: bool = True, rng: np.random.Generator | None = None):
        # single observations go through numpy; the arrays alias the live torch weights
        h = np.asarray(obs, dtype=self._layers[0][0].dtype)
        for w, b in self._layers[:-1]:
            h = np.maximum(w @ h + b, 0.0)
        w, b = self._layers[-1]
        out = w @ h + b
        k = out.shape[0] // 2
        mean, log_std = out[:k], np.clip(out[k:], LOG_STD_MIN, LOG_STD_MAX)
        u = mean if deterministic else mean + np.exp(log_std) * rng.standard_normal(k)
        return np.tanh(u).astype(np.float64)

    def act(self, state, rng=None):
        return self.select_action(normalize_state(state, self.maxima), deterministic=True)

    def observe(self, outcome):
        pass

    def reset_episode(self):
        pass


class SACAgent:
    def __init__(self, n_workers: int, maxima: dict[str, float], config: SacConfig | None = None,
                 seed: int = 0, dtype=torch.float32):
        self.config = config or SacConfig()
        cfg = self.config
        self.n_workers = n_workers
        self.obs_dim, self.act_dim = 6 * n_workers + 1, 2 * n_workers
        self.maxima = dict(maxima)
        self._frozen: FrozenPolicy | None = None
        self.hidden = tuple(cfg.hidden or default_hidden(n_workers))
        self.dtype = dtype
        self.gen = torch.Generator().manual_seed(seed)
        self.rng = np.random.default_rng([seed, 0x5AC])
        self.policy = GaussianPolicy(self.obs_dim, self.act_dim, self.hidden, self.gen, dtype)
        self.q1 = Critic(self.obs_dim, self.act_dim, self.hidden, self.gen, dtype)
        self.q2 = Critic(self.obs_dim, self.act_dim, self.hidden, self.gen, dtype)
        self.q1_target = Critic(self.obs_dim, self.act_dim, self.hidden, self.gen, dtype)
        self.q2_target = Critic(self.obs_dim, self.act_dim, self.hidden, self.gen, dtype)
        self.q1_target.load_state_dict(self.q1.state_dict())
        self.q2_target.load_state_dict(self.q2.state_dict())
        for p in (*self.q1_target.parameters(), *self.q2_target.parameters()):
            p.requires_grad_(False)
        self.log_alpha = torch.tensor(math.log(cfg.init_alpha), dtype=dtype, requires_grad=True)
        self.target_entropy = -float(self.act_dim) if cfg.target_entropy is None else cfg.target_entropy
        self.lr = cfg.lr
        self.policy_opt = torch.optim.Adam(self.policy.parameters(), lr=cfg.lr)
        self.critic_opt = torch.optim.Adam([*self.q1.parameters(), *self.q2.parameters()], lr=cfg.lr)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=cfg.lr)
        self.buffer = ReplayBuffer(self.obs_dim, self.act_dim, cfg.buffer_capacity)
        self.n_updates = 0
        self.name = "sac"

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    def frozen(self) -> FrozenPolicy:
        if self._frozen is None:
            self._frozen = FrozenPolicy(self.policy, self.n_workers, self.maxima)
        return self._frozen

    # -- acting -----------------------------------------------------------

    def select_action(self, obs, deterministic: bool = False, rng: np.random.Generator | None = None):
        return self.frozen().select_action(obs, deterministic, rng if rng is not None else self.rng)

    def act(self, state, rng=None):
        return self.select_action(normalize_state(state, self.maxima), deterministic=False, rng=rng)

    def observe(self, outcome):
        pass

    def reset_episode(self):
        pass

    # -- learning ---------------------------------------------------------

    def _tensors(self, batch):
        obs, act, rew, nxt, done = batch
        t = lambda a: torch.as_tensor(np.asarray(a), dtype=self.dtype)  # noqa: E731
        return t(obs), t(act), t(rew), t(nxt), t(done)

    def draw_noise(self, n: int) -> torch.Tensor:
        return torch.randn(n, self.act_dim, generator=self.gen, dtype=self.dtype)

    def critic_targets(self, rew, nxt, done, next_noise):
        with torch.no_grad():
            a2, logp2 = self.policy.sample(nxt, next_noise)
            q_next = torch.min(self.q1_target(nxt, a2), self.q2_target(nxt, a2))
            return rew + self.config.gamma * (1.0 - done) * (q_next - self.log_alpha.exp() * logp2)

    def critic_loss(self, batch, next_noise):
        obs, act, rew, nxt, done = batch
        y = self.critic_targets(rew, nxt, done, next_noise)
        return 0.5 * (F.mse_loss(self.q1(obs, act), y) + F.mse_loss(self.q2(obs, act), y))

    def policy_loss(self, obs, noise):
        action, logp = self.policy.sample(obs, noise)
        q = torch.min(self.q1(obs, action), self.q2(obs, action))
        return (self.log_alpha.exp().detach() * logp - q).mean(), logp

    def update(self, batch) -> LossReport:
        obs, act, rew, nxt, done = tb = self._tensors(batch)
        n = obs.shape[0]

        critic_loss = self.critic_loss(tb, self.draw_noise(n))
        self._check(critic_loss=critic_loss)
        self.critic_opt.zero_grad(set_to_none=True)
        critic_loss.backward()
        self.critic_opt.step()

        critic_params = [*self.q1.parameters(), *self.q2.parameters()]
        for p in critic_params:
            p.requires_grad_(False)
        try:
            policy_loss, logp = self.policy_loss(obs, self.draw_noise(n))
            self._check(critic_loss=critic_loss, policy_loss=policy_loss)
            self.policy_opt.zero_grad(set_to_none=True)
            policy_loss.backward()
            self.policy_opt.step()
        finally:
            for p in critic_params:
                p.requires_grad_(True)

        alpha_loss = -(self.log_alpha * (logp.detach() + self.target_entropy)).mean()
        self.alpha_opt.zero_grad(set_to_none=True)
        alpha_loss.backward()
        self.alpha_opt.step()

        self.soft_update()
        self.n_updates += 1
        return LossReport(critic_loss.item(), policy_loss.item(), alpha_loss.item(),
                          float(-logp.detach().mean()), self.alpha)

    def _check(self, **losses):
        report = {k: float(torch.as_tensor(v).detach()) for k, v in losses.items()}
        if all(math.isfinite(v) for v in report.values()):
            return
        report.update(alpha=self.alpha, n_updates=self.n_updates, buffer=len(self.buffer))
        raise NonFiniteLossError(report)

    def soft_update(self) -> None:
        tau = self.config.tau
        with torch.no_grad():
            for tgt, src in ((self.q1_target, self.q1), (self.q2_target, self.q2)):
                for pt, ps in zip(tgt.parameters(), src.parameters()):
                    pt.mul_(1.0 - tau).add_(ps, alpha=tau)

    def set_lr(self, lr: float) -> None:
        self.lr = lr
        for opt in (self.policy_opt, self.critic_opt, self.alpha_opt):
            for group in opt.param_groups:
                group["lr"] = lr


# -- offline training --------------------------------------------------------

@dataclass
class TrainingLog:
    episodes: list[EpisodeMetrics] = field(default_factory=list)
    losses: list[LossReport] = field(default_factory=list)
    env_steps: int = 0
    first_update_step: int | None = None


def train(env: FLEnv, episodes: int, config: SacConfig | None = None, seed: int = 0,
          agent: SACAgent | None = None,
          on_episode: Callable[[EpisodeMetrics], None] | None = None) -> tuple[SACAgent, TrainingLog]:
    """Run offline SAC training and return the agent plus its episode stream."""
    config = config or (agent.config if agent else SacConfig())
    agent = agent or SACAgent(env.n_workers, env.maxima, config, seed=seed)
    rng = np.random.default_rng([seed, 0x7EA1])
    hist = TrainingLog()
    for ep in range(episodes):
        state = env.reset()
        obs = env.normalize(state)
        metrics = EpisodeMetrics(episode=ep)
        done = False
        while not done:
            if hist.env_steps < config.warmup:
                action = rng.uniform(-1.0, 1.0, size=agent.act_dim)
            else:
                action = agent.select_action(obs, deterministic=False, rng=rng)
            out = env.step(action)
            next_obs = env.normalize(out.state)
            # a safeguard stop is a time limit, so the critic still bootstraps through it
            agent.buffer.add(obs, action, out.reward, next_obs, out.done and not out.truncated)
            metrics.add(out)
            obs, done = next_obs, out.done
            hist.env_steps += 1
            if (hist.env_steps % config.train_every == 0 and hist.env_steps >= config.warmup
                    and len(agent.buffer) >= config.batch_size):
                if hist.first_update_step is None:
                    hist.first_update_step = hist.env_steps
                for _ in range(config.gradient_steps):
                    report = agent.update(agent.buffer.sample(config.batch_size, rng))
                hist.losses.append(report)
        hist.episodes.append(metrics)
        if on_episode is not None:
            on_episode(metrics)
        if (ep + 1) % config.lr_decay_every == 0:
            agent.set_lr(agent.lr * config.lr_decay)
    return agent, hist


# -- checkpoints -------------------------------------------------------------

MAGIC = b"SAFEFL-POLICY\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_policy(policy: FrozenPolicy | SACAgent, path: str | Path) -> None:
    """Write a versioned header followed by float64 little-endian weights."""
    if isinstance(policy, SACAgent):
        policy = policy.frozen()
    tensors = [p.detach().double().cpu().numpy() for p in policy.policy.parameters()]
    payload = b"".join(t.astype("<f8").tobytes() for t in tensors)
    header = {
        "format_version": FORMAT_VERSION,
        "n_workers": policy.n_workers,
        "obs_dim": policy.policy.obs_dim,
        "act_dim": policy.policy.act_dim,
        "layer_shapes": [list(t.shape) for t in tensors],
        "dtype": str(policy._dt).replace("torch.", ""),
        "maxima": policy.maxima,
        "payload_bytes": len(payload),
        "crc32": zlib.crc32(payload),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(blob)) + blob + payload)


def load_policy(path: str | Path, n_workers: int | None = None) -> FrozenPolicy:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC) or len(data) < len(MAGIC) + 4:
        raise CheckpointError(f"{path}: not a policy checkpoint")
    off = len(MAGIC)
    (hlen,) = struct.unpack("<I", data[off:off + 4])
    try:
        header = json.loads(data[off + 4:off + 4 + hlen].decode("utf-8"))
        version = header["format_version"]
        k = int(header["n_workers"])
        shapes = [tuple(s) for s in header["layer_shapes"]]
        maxima = {str(a): float(b) for a, b in header["maxima"].items()}
        dtype = getattr(torch, header.get("dtype", "float32"))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CheckpointError(f"{path}: corrupted header ({exc})") from exc
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if n_workers is not None and k != n_workers:
        raise CheckpointError(f"{path}: checkpoint is for {k} workers, environment has {n_workers}")
    payload = data[off + 4 + hlen:]
    if len(payload) != header.get("payload_bytes") or zlib.crc32(payload) != header.get("crc32"):
        raise CheckpointError(f"{path}: weight payload is truncated or corrupted")
    # weights/biases alternate: (out, in), (out,)
    hidden = tuple(s[0] for s in shapes[0:-2:2])
    if (len(shapes) % 2 or shapes[0] != (shapes[0][0], 6 * k + 1) or shapes[-2][0] != 4 * k
            or any(len(s) != (2 if i % 2 == 0 else 1) for i, s in enumerate(shapes))):
        raise CheckpointError(f"{path}: layer shapes {shapes} do not match {k} workers")
    values = np.frombuffer(payload, dtype="<f8")
    if values.size != sum(int(np.prod(s)) for s in shapes):
        raise CheckpointError(f"{path}: weight count does not match layer shapes")
    policy = GaussianPolicy(6 * k + 1, 2 * k, hidden, torch.Generator().manual_seed(0), dtype)
    params = list(policy.parameters())
    if [tuple(p.shape) for p in params] != shapes:
        raise CheckpointError(f"{path}: layer shapes {shapes} do not form a policy network")
    pos = 0
    with torch.no_grad():
        for p, shape in zip(params, shapes):
            n = int(np.prod(shape))
            p.copy_(torch.from_numpy(values[pos:pos + n].reshape(shape).copy()).to(dtype))
            pos += n
    return FrozenPolicy(policy, k, maxima)
