"""Physical energy, rate and timing formulas for one FL worker.

Everything here is SI: watts, hertz, joules, seconds, bits. Unit
conversions (dBm, MHz, MB) happen once, when a config is parsed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateInputError(ValueError):
    """Input for which the requested statistic is undefined."""


class InconsistentStateError(ValueError):
    """A transmission was requested over a link with zero capacity."""


@dataclass(frozen=True)
class FLModelSpec:
    alpha: float  # FLOPs per sample per local iteration
    m_bits: float
    eta: float
    epsilon0: float
    f_star: float = 1.0
    deadline_h: float = 13.0

    def __post_init__(self):
        if self.alpha <= 0 or self.m_bits <= 0 or self.deadline_h <= 0:
            raise ValueError("alpha, m_bits and deadline_h must be positive")
        if not (0 < self.eta <= 1 and 0 < self.epsilon0 <= 1):
            raise ValueError("eta and epsilon0 must lie in (0, 1]")


@dataclass(frozen=True)
class WorkerCaps:
    f_max: float
    p_max: float
    c_flops_per_cycle: float
    sigma_cap: float
    bandwidth: float
    distance_km: float
    n_samples: int
    data_variance: float

    def __post_init__(self):
        if min(self.f_max, self.p_max, self.c_flops_per_cycle, self.bandwidth, self.distance_km) <= 0:
            raise ValueError(f"worker capabilities must be positive: {self}")
        if self.n_samples < 1 or self.data_variance < 0:
            raise ValueError(f"invalid dataset statistics: {self}")


@dataclass(frozen=True)
class Allocation:
    f: float
    p: float


def dbm_to_watt(dbm):
    out = 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)
    return float(out) if out.ndim == 0 else out


def watt_to_dbm(watt):
    return 10.0 * math.log10(watt) + 30.0


def dataset_variance(labels) -> float:
    """Trace of the sample covariance (divisor s-1) of the groundtruth rows."""
    rows = np.asarray(labels, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DegenerateInputError("need at least two groundtruth rows")
    dev = rows - rows.mean(axis=0)
    return float((dev * dev).sum() / (rows.shape[0] - 1))


def comp_energy(caps: WorkerCaps, spec: FLModelSpec, local_iters: float, f: float) -> float:
    return caps.sigma_cap * local_iters * spec.alpha * caps.n_samples * f * f / caps.c_flops_per_cycle


def comp_time(caps: WorkerCaps, spec: FLModelSpec, local_iters: float, f: float) -> float:
    """Local training duration.

    ``f == 0`` with pending iterations means the worker does not
    participate; that is reported as ``inf`` so callers never divide.
    """
    if local_iters == 0:
        return 0.0
    if f <= 0:
        return math.inf
    return local_iters * spec.alpha * caps.n_samples / (caps.c_flops_per_cycle * f)


def channel_gain_linear(distance_km: float) -> float:
    # 127 + 30 log10(d) read as attenuation in dB, d in km
    if distance_km <= 0:
        raise ValueError(f"distance must be positive, got {distance_km}")
    return 10.0 ** (-(127.0 + 30.0 * math.log10(distance_km)) / 10.0)


def data_rate(bandwidth: float, gain: float, p: float, n0: float) -> float:
    if p <= 0:
        return 0.0
    return bandwidth * math.log2(1.0 + gain * p / (bandwidth * n0))


def tx_energy(spec: FLModelSpec, p: float, rate: float) -> float:
    if p == 0:
        return 0.0
    if rate <= 0:
        raise InconsistentStateError(f"power {p} W over a zero-rate link")
    return spec.m_bits * p / rate


def tx_time(spec: FLModelSpec, rate: float, p: float | None = None) -> float:
    if p == 0:
        return 0.0
    if rate <= 0:
        raise InconsistentStateError("transmission over a zero-rate link")
    return spec.m_bits / rate


def deadline_ok(tau: float, t: float, h: float) -> bool:
    return tau + t < h


def omega(p: float) -> int:
    return 1 if p > 0 else 0
