"""Environment configuration: INI files with unit-suffixed keys, and the
worker population generator for the static and dynamic networks.

A range value is written ``lo, hi``; a single number means a fixed value.
All quantities are converted to SI when the file is parsed.
"""
from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .emulator import EmulatorParams, round_half_up
from .energy import FLModelSpec, WorkerCaps, comp_energy, dbm_to_watt


class ConfigError(ValueError):
    pass


class SyncMode(enum.Enum):
    WORKER = "worker"
    COORDINATOR = "coordinator"


@dataclass(frozen=True)
class DeviceClass:
    """Capability envelope of one device tier (SI units)."""

    f_max_hz: tuple[float, float]
    p_max_w: tuple[float, float]
    c_flops_per_cycle: float
    # kept in dBm because power caps are drawn uniformly on the dB scale
    p_max_dbm: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class EnvConfig:
    kind: str
    n_workers: int
    model: FLModelSpec
    low_end: DeviceClass
    high_end: DeviceClass
    distance_km: tuple[float, float] = (0.01, 0.5)
    bandwidth_hz: tuple[float, float] = (20e6, 20e6)
    n_samples: tuple[int, int] = (800, 1200)
    variance: tuple[float, float] = (0.1, 0.9)
    low_end_fraction: float = 0.2
    # truncated normal (mean, sd, lo, hi) of the low-end percentage, dynamic only
    low_end_pct: tuple[float, float, float, float] = (15.0, 12.0, 0.0, 60.0)
    sigma_cap: float = 1e-28
    n0_w_per_hz: float = 10.0 ** (-18.8)
    emulator: EmulatorParams = field(default_factory=EmulatorParams)
    sync_mode: SyncMode = SyncMode.WORKER
    seed: int = 0
    deadzone_frac: float = 0.05
    mu1: float | None = None
    mu2: float | None = None

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ConfigError(f"environment kind must be static or dynamic, got {self.kind!r}")
        if self.n_workers < 1:
            raise ConfigError("at least one worker is required")
        for name in ("distance_km", "bandwidth_hz", "n_samples", "variance"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi or (name != "variance" and lo <= 0):
                raise ConfigError(f"{name} range must be positive and ordered, got {(lo, hi)}")
        for tier in (self.low_end, self.high_end):
            if not 0 < tier.f_max_hz[0] <= tier.f_max_hz[1] or not 0 < tier.p_max_w[0] <= tier.p_max_w[1]:
                raise ConfigError(f"device capability ranges must be positive and ordered: {tier}")
            if tier.c_flops_per_cycle <= 0:
                raise ConfigError("FLOPs per cycle must be positive")
        if not 0 <= self.low_end_fraction <= 1:
            raise ConfigError("low_end_fraction must lie in [0, 1]")
        if not 0 <= self.deadzone_frac < 1:
            raise ConfigError("deadzone_frac must lie in [0, 1)")

    @property
    def penalty_weights(self) -> tuple[float, float]:
        if self.mu1 is not None:
            return self.mu1, self.mu2 if self.mu2 is not None else 1.0 - self.mu1
        mu1 = float(np.interp(self.n_workers, [5, 10, 20], [0.1, 0.2, 0.4]))
        return mu1, 1.0 - mu1

    def caps_maxima(self) -> dict[str, float]:
        """Normalization constants for the state vector."""
        f_cap = max(self.low_end.f_max_hz[1], self.high_end.f_max_hz[1])
        c_min = min(self.low_end.c_flops_per_cycle, self.high_end.c_flops_per_cycle)
        i_cap = self.emulator.local_iter_range[1]
        s_cap = self.n_samples[1]
        probe = WorkerCaps(f_max=f_cap, p_max=1.0, c_flops_per_cycle=c_min, sigma_cap=self.sigma_cap,
                           bandwidth=1.0, distance_km=1.0, n_samples=s_cap, data_variance=0.0)
        return {
            "local_iters": float(i_cap),
            "wasted_j": comp_energy(probe, self.model, i_cap, f_cap),
            "f_max": f_cap,
            "p_max": max(self.low_end.p_max_w[1], self.high_end.p_max_w[1]),
            "bandwidth": self.bandwidth_hz[1],
            "n_samples": float(s_cap),
        }

    def with_overrides(self, **kw) -> "EnvConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# parsing

def _floats(text: str) -> tuple[float, float]:
    parts = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) != 2:
        raise ConfigError(f"expected a number or 'lo, hi', got {text!r}")
    return parts[0], parts[1]


def _device(section: configparser.SectionProxy) -> DeviceClass:
    f_lo, f_hi = _floats(section["f_max_ghz"])
    p_lo, p_hi = _floats(section["p_max_dbm"])
    return DeviceClass(
        f_max_hz=(f_lo * 1e9, f_hi * 1e9),
        p_max_w=(dbm_to_watt(p_lo), dbm_to_watt(p_hi)),
        c_flops_per_cycle=float(section["flops_per_cycle"]),
        p_max_dbm=(p_lo, p_hi),
    )


def parse_config(text: str) -> EnvConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
        env = cp["environment"]
        mdl = cp["model"]
        net = cp["network"]
        emu = cp["emulator"] if cp.has_section("emulator") else {}

        model = FLModelSpec(
            alpha=float(mdl["alpha_mflops"]) * 1e6,
            m_bits=float(mdl["model_size_mb"]) * 8e6,
            eta=float(mdl["eta"]),
            epsilon0=float(mdl["epsilon0"]),
            f_star=float(mdl.get("f_star", "1.0")),
            deadline_h=float(mdl["deadline_s"]),
        )
        i_lo, i_hi = _floats(emu.get("local_iters", "2, 11"))
        g_lo, g_hi = _floats(emu.get("global_iters", "10, 22"))
        a_lo, a_hi = _floats(emu.get("init_acc_pct", "15, 18"))
        emulator = EmulatorParams(
            local_iter_range=(int(i_lo), int(i_hi)),
            global_iter_range=(int(g_lo), int(g_hi)),
            init_acc_range=(a_lo / 100.0, a_hi / 100.0),
            jitter=float(emu.get("jitter", "0.0")),
            max_rounds_safeguard=int(emu.get("max_rounds", "200")),
        )
        d_lo, d_hi = _floats(net.get("distance_m", "10, 500"))
        b_lo, b_hi = _floats(net["bandwidth_mhz"])
        s_lo, s_hi = _floats(env.get("samples", "800, 1200"))
        v_lo, v_hi = _floats(env.get("variance", "0.1, 0.9"))
        mean, sd, lo, hi = (float(x) for x in env.get("low_end_pct_truncnorm", "15, 12, 0, 60").split(","))
        mu1 = env.get("mu1")
        mu2 = env.get("mu2")
        return EnvConfig(
            kind=env["kind"].strip(),
            n_workers=int(env["workers"]),
            model=model,
            low_end=_device(cp["low_end"]),
            high_end=_device(cp["high_end"]),
            distance_km=(d_lo / 1000.0, d_hi / 1000.0),
            bandwidth_hz=(b_lo * 1e6, b_hi * 1e6),
            n_samples=(int(s_lo), int(s_hi)),
            variance=(v_lo, v_hi),
            low_end_fraction=float(env.get("low_end_fraction", "0.2")),
            low_end_pct=(mean, sd, lo, hi),
            sigma_cap=float(net.get("switched_capacitance", "1e-28")),
            n0_w_per_hz=dbm_to_watt(float(net.get("noise_dbm_per_hz", "-158"))),
            emulator=emulator,
            sync_mode=SyncMode(env.get("sync_mode", "worker").strip()),
            seed=int(env.get("seed", "0")),
            deadzone_frac=float(env.get("deadzone_frac", "0.05")),
            mu1=float(mu1) if mu1 is not None else None,
            mu2=float(mu2) if mu2 is not None else None,
        )
    except ConfigError:
        raise
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigError(f"invalid environment config: {exc}") from exc


PRESETS = ("static5", "static10", "static20", "dynamic5", "dynamic10", "dynamic20")


def load_config(path_or_name: str | Path) -> EnvConfig:
    """Load a config file, or a bundled preset such as ``static5``/``static5.cfg``."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_config(path.read_text(encoding="utf-8"))
    name = path.name[:-4] if path.name.endswith(".cfg") else path.name
    if name in PRESETS:
        text = resources.files("safefl.configs").joinpath(f"{name}.cfg").read_text(encoding="utf-8")
        return parse_config(text)
    raise ConfigError(f"config not found: {path_or_name}")


def preset(name: str, **overrides) -> EnvConfig:
    cfg = load_config(name)
    return cfg.with_overrides(**overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# population

@dataclass
class Population:
    """Per-worker capabilities for the current round, as parallel arrays."""

    is_low_end: np.ndarray
    f_max: np.ndarray
    p_max: np.ndarray
    c: np.ndarray
    bandwidth: np.ndarray
    distance_km: np.ndarray
    n_samples: np.ndarray
    variance: np.ndarray
    sigma_cap: float

    def __len__(self):
        return len(self.f_max)

    def caps(self) -> list[WorkerCaps]:
        return [
            WorkerCaps(f_max=float(self.f_max[k]), p_max=float(self.p_max[k]),
                       c_flops_per_cycle=float(self.c[k]), sigma_cap=self.sigma_cap,
                       bandwidth=float(self.bandwidth[k]), distance_km=float(self.distance_km[k]),
                       n_samples=int(self.n_samples[k]), data_variance=float(self.variance[k]))
            for k in range(len(self))
        ]

    def copy(self) -> "Population":
        return Population(*(a.copy() for a in (self.is_low_end, self.f_max, self.p_max, self.c,
                                               self.bandwidth, self.distance_km, self.n_samples,
                                               self.variance)), sigma_cap=self.sigma_cap)


def sample_low_end_count(config: EnvConfig, rng: np.random.Generator) -> int:
    k = config.n_workers
    if config.kind == "static":
        return round_half_up(config.low_end_fraction * k)
    mean, sd, lo, hi = config.low_end_pct
    pct = truncnorm.rvs((lo - mean) / sd, (hi - mean) / sd, loc=mean, scale=sd, random_state=rng)
    return min(round_half_up(float(pct) / 100.0 * k), k)


def _tier_draw(tiers, is_low, attr, rng):
    out = np.empty(len(is_low))
    for mask, tier in ((is_low, tiers[0]), (~is_low, tiers[1])):
        lo, hi = getattr(tier, attr)
        out[mask] = rng.uniform(lo, hi, size=int(mask.sum()))
    return out


def resample_channel(pop: Population, config: EnvConfig, rng: np.random.Generator) -> None:
    """Draw capability caps, distances and bandwidths in place."""
    tiers = (config.low_end, config.high_end)
    low = pop.is_low_end
    pop.f_max = _tier_draw(tiers, low, "f_max_hz", rng)
    pop.p_max = dbm_to_watt(_tier_draw(tiers, low, "p_max_dbm", rng))
    pop.distance_km = rng.uniform(*config.distance_km, size=len(low))
    pop.bandwidth = rng.uniform(*config.bandwidth_hz, size=len(low))


def resample_datasets(pop: Population, config: EnvConfig, rng: np.random.Generator) -> None:
    k = len(pop)
    pop.n_samples = rng.integers(config.n_samples[0], config.n_samples[1] + 1, size=k)
    pop.variance = rng.uniform(*config.variance, size=k)


def generate_environment(config: EnvConfig, rng: np.random.Generator) -> Population:
    """Draw a full worker population (tiers, caps, channel and datasets)."""
    k = config.n_workers
    n_low = sample_low_end_count(config, rng)
    is_low = np.zeros(k, dtype=bool)
    is_low[rng.permutation(k)[:n_low]] = True
    c = np.where(is_low, config.low_end.c_flops_per_cycle, config.high_end.c_flops_per_cycle).astype(float)
    pop = Population(is_low_end=is_low, f_max=np.zeros(k), p_max=np.zeros(k), c=c,
                     bandwidth=np.zeros(k), distance_km=np.zeros(k),
                     n_samples=np.zeros(k, dtype=int), variance=np.zeros(k),
                     sigma_cap=config.sigma_cap)
    resample_channel(pop, config, rng)
    resample_datasets(pop, config, rng)
    return pop
