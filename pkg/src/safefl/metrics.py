"""Per-episode accounting and the frozen CSV formats."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .env import StepOutcome

EPISODE_SCHEMA = "# safefl-episodes v1"
SUMMARY_SCHEMA = "# safefl-summary v1"

EPISODE_COLUMNS = ("episode", "total_J", "comp_J", "tx_J", "wasted_J", "reward", "p1", "p2", "rounds",
                   "mean_round_s", "accesses", "occ_s", "unnec_accesses", "unnec_occ_s")


@dataclass
class EpisodeMetrics:
    episode: int
    total_J: float = 0.0
    comp_J: float = 0.0
    tx_J: float = 0.0
    wasted_J: float = 0.0
    reward: float = 0.0
    p1: int = 0
    p2: int = 0
    rounds: int = 0
    mean_round_s: float = 0.0
    accesses: int = 0
    occ_s: float = 0.0
    unnec_accesses: int = 0
    unnec_occ_s: float = 0.0

    def add(self, out: StepOutcome) -> None:
        self.comp_J += float(out.comp_j.sum())
        self.tx_J += float(out.tx_j.sum())
        self.total_J = self.comp_J + self.tx_J
        self.wasted_J += float(out.wasted_j.sum())
        self.reward += out.reward
        self.p1 += int(out.p1.sum())
        self.p2 += int(out.p2)
        # running mean of the round duration
        self.rounds += 1
        self.mean_round_s += (out.round_time - self.mean_round_s) / self.rounds
        self.accesses += out.channel.accesses
        self.occ_s += out.channel.occupation_time
        self.unnec_accesses += out.channel.unnecessary_accesses
        self.unnec_occ_s += out.channel.unnecessary_time

    def violations_per_worker(self, n_workers: int) -> float:
        return (self.p1 + self.p2) / n_workers

    def row(self) -> list:
        return [getattr(self, c) for c in EPISODE_COLUMNS]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"refusing to write non-finite value {v}")
    return repr(v)


def write_episodes(path: str | Path, episodes: list[EpisodeMetrics]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(EPISODE_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for ep in episodes:
            w.writerow([_fmt(v) for v in ep.row()])


def read_episodes(path: str | Path) -> list[EpisodeMetrics]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    if tuple(reader.fieldnames or ()) != EPISODE_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    types = {f.name: f.type for f in fields(EpisodeMetrics)}
    out = []
    for rec in reader:
        out.append(EpisodeMetrics(**{k: (int(v) if types[k] in (int, "int") else float(v))
                                     for k, v in rec.items()}))
    return out


SUMMARY_METRICS = EPISODE_COLUMNS[1:]


def mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def summarize(episodes: list[EpisodeMetrics]) -> dict[str, float]:
    out: dict[str, float] = {"episodes": len(episodes)}
    for m in SUMMARY_METRICS:
        mu, sd = mean_std([getattr(e, m) for e in episodes])
        out[f"{m}_mean"] = mu
        out[f"{m}_std"] = sd
    return out


def write_summary(path: str | Path, rows: list[dict]) -> None:
    """One row per configuration; leading label columns come first."""
    if not rows:
        raise ValueError("no summary rows")
    keys = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(SUMMARY_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in (r[k] for k in keys)])


def read_summary(path: str | Path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def window_means(episodes: list[EpisodeMetrics], window: int, n_workers: int | None = None) -> list[dict]:
    """Average consecutive blocks of ``window`` episodes (the last block may be short)."""
    if window < 1:
        raise ValueError("window must be positive")
    out = []
    for start in range(0, len(episodes), window):
        block = episodes[start:start + window]
        rec = {"episode_start": block[0].episode, "episode_end": block[-1].episode, "count": len(block)}
        for m in SUMMARY_METRICS:
            rec[m] = float(np.mean([getattr(e, m) for e in block]))
        if n_workers:
            rec["energy_per_worker_J"] = rec["total_J"] / n_workers
            rec["violations_per_worker"] = (rec["p1"] + rec["p2"]) / n_workers
        out.append(rec)
    return out


def as_dict(ep: EpisodeMetrics) -> dict:
    return asdict(ep)
