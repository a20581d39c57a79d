"""Monte Carlo exit times for ``dX = -grad f(X) dt + sqrt(2 eps) dB``."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import AllCensored, ExcessiveCensoring, NaNState

BLOCK = 2048
MAX_CENSORED_FRACTION = 0.01
MAX_STEPS_CAP = 10**9
STATUS = {0: "exit", 1: "censored", 2: "ball", 3: "nan"}


@dataclass(frozen=True)
class SimulationConfig:
    epsilon: float
    dt: float
    n_paths: int
    max_steps: int
    start: tuple
    seed: int = 0
    crossing_mode: str = "interpolate"
    workers: int = 1
    max_censored_fraction: float = MAX_CENSORED_FRACTION
    backend: str | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 0:
            raise ValueError("n_paths must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.crossing_mode not in ("interpolate", "bridge"):
            raise ValueError(f"unknown crossing mode {self.crossing_mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_dict(self):
        d = asdict(self)
        d["start"] = [float(v) for v in self.start]
        return d


def default_max_steps(mean_exit, dt, factor=50, cap=MAX_STEPS_CAP):
    """Horizon of ``factor`` predicted mean exit times, in steps."""
    if not math.isfinite(mean_exit):
        return cap
    return int(min(cap, max(1000, math.ceil(factor * mean_exit / dt))))


@dataclass
class RawPaths:
    times: np.ndarray
    positions: np.ndarray
    status: np.ndarray
    steps: np.ndarray


def run(p, dom, cfg, ball=None):
    """Simulate all paths in fixed blocks; results are ordered by path index,
    so the outcome does not depend on ``cfg.workers``."""
    n = int(cfg.n_paths)
    starts = list(range(0, n, BLOCK))
    bridge = cfg.crossing_mode == "bridge"
    ball_arg = None if ball is None else (np.asarray(ball.center, dtype=float), float(ball.radius))

    def block(first):
        m = min(BLOCK, n - first)
        return kernels.run_paths(
            p, dom, cfg.start, cfg.epsilon, cfg.dt, cfg.max_steps, cfg.seed, first, m,
            bridge=bridge, ball=ball_arg, backend=cfg.backend,
        )

    if cfg.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    if not parts:
        return RawPaths(np.empty(0), np.empty((0, 2)), np.empty(0, np.int8), np.empty(0, np.int64))
    out = RawPaths(*(np.concatenate([q[i] for q in parts]) for i in range(4)))
    bad = np.flatnonzero(out.status == 3)
    if bad.size:
        i = int(bad[0])
        raise NaNState(
            f"path {i} produced a non-finite state at step {int(out.steps[i])} (seed {cfg.seed})",
            path=i, step=int(out.steps[i]), seed=cfg.seed,
        )
    return out


@dataclass
class ExitStats:
    n_paths: int
    n_exits: int
    n_censored: int
    mean: float
    std_error: float
    ci95: tuple
    histogram: dict
    censored_fraction: float
    raw: RawPaths = field(repr=False, default=None)

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "n_exits": self.n_exits,
            "n_censored": self.n_censored,
            "censored_fraction": self.censored_fraction,
            "mean": self.mean,
            "std_error": self.std_error,
            "ci95": list(self.ci95),
            "histogram": self.histogram,
        }

    def covers(self, value):
        return self.ci95[0] <= value <= self.ci95[1]

    def dump_times(self, path):
        """Raw exit times of the uncensored paths as little-endian float64."""
        t = self.raw.times[self.raw.status == 0]
        t.astype("<f8").tofile(path)


def _log_histogram(t, n_bins=30):
    pos = t[t > 0]
    if pos.size == 0:
        return {"edges": [], "counts": []}
    lo, hi = pos.min(), pos.max()
    if hi <= lo:
        hi = lo * (1 + 1e-9)
    edges = np.geomspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(pos, bins=edges)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def simulate_exit(p, dom, cfg):
    """Euler-Maruyama exit-time statistics over the uncensored paths."""
    if not bool(dom.contains(np.asarray(cfg.start, dtype=float))):
        raise ValueError("start must lie strictly inside D")
    raw = run(p, dom, cfg)
    n = int(cfg.n_paths)
    exited = raw.status == 0
    n_exit = int(exited.sum())
    n_cens = n - n_exit
    if n_exit == 0:
        raise AllCensored(f"none of {n} paths left D within {cfg.max_steps} steps")
    frac = n_cens / n
    if frac > cfg.max_censored_fraction:
        raise ExcessiveCensoring(
            f"{frac:.2%} of paths censored (limit {cfg.max_censored_fraction:.2%}); raise max_steps"
        )
    t = raw.times[exited]
    mean = float(np.sum(t) / n_exit)
    se = float(np.std(t, ddof=1) / math.sqrt(n_exit)) if n_exit > 1 else math.inf
    return ExitStats(
        n_paths=n, n_exits=n_exit, n_censored=n_cens, mean=mean, std_error=se,
        ci95=(mean - 1.96 * se, mean + 1.96 * se), histogram=_log_histogram(t),
        censored_fraction=frac, raw=raw,
    )


@dataclass
class HittingEstimate:
    probability: float
    ci95: tuple
    n_paths: int
    n_ball: int
    n_exit: int
    n_censored: int

    def to_dict(self):
        return asdict(self)


def hitting_probability(p, dom, cfg, ball):
    """Fraction of paths reaching the ball before leaving D (Wilson 95% interval)."""
    raw = run(p, dom, cfg, ball=ball)
    n = int(cfg.n_paths)
    n_ball = int(np.sum(raw.status == 2))
    n_exit = int(np.sum(raw.status == 0))
    n_cens = n - n_ball - n_exit
    if n and n_cens == n:
        raise AllCensored("no path reached the ball or the boundary")
    decided = n_ball + n_exit
    if decided == 0:
        return HittingEstimate(math.nan, (math.nan, math.nan), n, 0, 0, n_cens)
    ph = n_ball / decided
    z = 1.96
    den = 1 + z * z / decided
    mid = (ph + z * z / (2 * decided)) / den
    half = z * math.sqrt(ph * (1 - ph) / decided + z * z / (4 * decided**2)) / den
    return HittingEstimate(ph, (max(0.0, mid - half), min(1.0, mid + half)), n, n_ball, n_exit, n_cens)


def exit_location_histogram(p, dom, cfg, n_bins=16):
    """Counts of exit points by boundary angle on ``n_bins`` equal bins."""
    edges = np.linspace(0.0, 2 * np.pi, n_bins + 1)
    if cfg.n_paths == 0:
        return edges, np.zeros(n_bins, dtype=np.int64)
    raw = run(p, dom, cfg)
    pts = raw.positions[raw.status == 0]
    if len(pts) == 0:
        return edges, np.zeros(n_bins, dtype=np.int64)
    counts, _ = np.histogram(np.mod(dom.angle_of(pts), 2 * np.pi), bins=edges)
    return edges, counts


def write_summary(path, cfg, stats):
    doc = {"config": cfg.to_dict(), "stats": stats.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
