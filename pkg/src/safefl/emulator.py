"""Cheap stand-in for a real FL process.

Instead of training a network, each episode samples how many local
iterations every worker needs (from its dataset variance) and a nominal
number of global rounds (inversely related to the local effort). The
global performance rate then decays geometrically from 1 to epsilon0 as
valid, variance-weighted updates accumulate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# slack for float accumulation of participation fractions
_PROGRESS_TOL = 1e-9


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class EmulatorParams:
    local_iter_range: tuple[int, int] = (2, 11)
    global_iter_range: tuple[int, int] = (10, 22)
    init_acc_range: tuple[float, float] = (0.15, 0.18)
    jitter: float = 0.0
    max_rounds_safeguard: int = 200

    def __post_init__(self):
        i_lo, i_hi = self.local_iter_range
        g_lo, g_hi = self.global_iter_range
        a_lo, a_hi = self.init_acc_range
        if not 2 <= i_lo <= i_hi:
            raise ValueError(f"bad local iteration range {self.local_iter_range}")
        if not 1 <= g_lo <= g_hi:
            raise ValueError(f"bad global iteration range {self.global_iter_range}")
        if not 0 < a_lo <= a_hi < 1:
            raise ValueError(f"bad initial accuracy range {self.init_acc_range}")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")
        if self.max_rounds_safeguard < 1:
            raise ValueError("max_rounds_safeguard must be positive")


def sample_local_iters(variance: float, v_min: float, v_max: float, params: EmulatorParams) -> int:
    """Affine map of dataset variance onto the local iteration range."""
    i_lo, i_hi = params.local_iter_range
    if v_max <= v_min:
        return round_half_up((i_lo + i_hi) / 2)
    frac = min(max((variance - v_min) / (v_max - v_min), 0.0), 1.0)
    return round_half_up(i_lo + frac * (i_hi - i_lo))


def sample_global_budget(mean_local_iters: float, params: EmulatorParams) -> int:
    """More local work per round means fewer rounds to converge."""
    i_lo, i_hi = params.local_iter_range
    g_lo, g_hi = params.global_iter_range
    if i_hi == i_lo:
        frac = 0.5
    else:
        frac = (mean_local_iters - i_lo) / (i_hi - i_lo)
    return min(max(round_half_up(g_hi - frac * (g_hi - g_lo)), g_lo), g_hi)


def performance_rate(current: float, initial: float, f_star: float = 1.0) -> float:
    """Normalized distance to the optimum, (F - F*) / (F_init - F*)."""
    return (current - f_star) / (initial - f_star)


def local_rate(init_acc: float, iters_done: int, iters_needed: int, eta: float, f_star: float = 1.0) -> float:
    """Local performance rate after ``iters_done`` of ``iters_needed`` iterations.

    The objective moves linearly from ``init_acc`` to the value whose rate
    is exactly ``eta``, reached at ``iters_needed``.
    """
    if not 0 < init_acc < f_star:
        raise ValueError("initial accuracy must lie strictly below the optimum")
    if iters_needed <= 0:
        return 1.0
    progress = min(iters_done / iters_needed, 1.0)
    target = f_star + eta * (init_acc - f_star)
    current = init_acc + progress * (target - init_acc)
    if iters_done >= iters_needed:
        return eta
    return performance_rate(current, init_acc, f_star)


@dataclass
class EmulatedRun:
    """Global convergence state of one emulated FL process."""

    g_total: int
    epsilon0: float
    jitter: float = 0.0
    rng: np.random.Generator | None = None
    init_acc: float = 0.165
    f_star: float = 1.0
    progress: float = 0.0
    e_curve: list[float] = field(default_factory=lambda: [1.0])

    @property
    def e(self) -> float:
        return self.e_curve[-1]

    @property
    def converged(self) -> bool:
        return self.progress >= self.g_total - _PROGRESS_TOL

    @property
    def rounds(self) -> int:
        return len(self.e_curve) - 1

    def global_accuracy(self) -> float:
        return self.f_star + self.e * (self.init_acc - self.f_star)

    def advance(self, fraction: float) -> tuple[float, bool]:
        """Aggregate one round in which ``fraction`` of the variance mass arrived."""
        if not 0.0 <= fraction <= 1.0 + 1e-12:
            raise ValueError(f"participation fraction out of range: {fraction}")
        self.progress += min(fraction, 1.0)
        prev = self.e
        e = math.exp(math.log(self.epsilon0) * self.progress / self.g_total)
        if self.converged:
            e = min(e, self.epsilon0, prev)
        else:
            if self.jitter > 0 and self.rng is not None:
                e *= 1.0 + self.rng.uniform(-self.jitter, self.jitter)
            # stay above the target until progress says otherwise
            e = max(min(e, prev), self.epsilon0 * (1.0 + 1e-9))
            e = min(e, prev)
        self.e_curve.append(e)
        return e, self.converged


def start_run(local_iters, params: EmulatorParams, epsilon0: float, rng: np.random.Generator,
              weights=None, f_star: float = 1.0) -> EmulatedRun:
    """Sample the round budget and starting accuracy for one episode."""
    local_iters = np.asarray(local_iters, dtype=float)
    g_total = sample_global_budget(float(local_iters.mean()), params)
    accs = rng.uniform(*params.init_acc_range, size=local_iters.shape[0])
    w = np.ones_like(accs) if weights is None else np.asarray(weights, dtype=float)
    init_acc = float(np.dot(w, accs) / w.sum()) if w.sum() > 0 else float(accs.mean())
    return EmulatedRun(g_total=g_total, epsilon0=epsilon0, jitter=params.jitter,
                       rng=rng, init_acc=init_acc, f_star=f_star)
