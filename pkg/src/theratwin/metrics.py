"""Reliability and performance metrics for policy-learning runs.

Covers dispersion (interquartile range), lower-tail risk (CVaR), cumulative
pre-convergence reward shortfall, and performance profiles with stratified
bootstrap confidence bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class RunMatrix:
    """Final normalized scores per (run, task), plus optional learning curves."""

    scores: np.ndarray
    learning_curves: tuple = ()

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        if scores.ndim != 2 or scores.size == 0:
            raise DomainError("scores must be a non-empty 2-D run x task matrix",
                              path="scores")
        if not np.all(np.isfinite(scores)):
            raise DomainError("scores must be finite", path="scores")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "learning_curves",
                           tuple(np.asarray(c, dtype=float) for c in self.learning_curves))


def iqr(samples) -> float:
    """Q3 - Q1 with linear-interpolation quantiles (position = (n-1)*p)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("iqr requires at least one sample", path="samples")
    return float(np.quantile(x, 0.75) - np.quantile(x, 0.25))


def cvar(samples, alpha: float) -> float:
    """Mean of the worst ceil(alpha * n) samples (lower tail)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("cvar requires at least one sample", path="samples")
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must be in (0, 1], got {alpha}", path="alpha")
    k = math.ceil(alpha * x.size)
    return float(np.mean(np.sort(x)[:k]))


def sampling_efficiency(curve, final: float) -> float:
    """Cumulative reward shortfall sum(max(0, final - r_t)); lower is better."""
    r = np.asarray(curve, dtype=float)
    if r.size == 0:
        raise DomainError("curve must be non-empty", path="curve")
    return float(np.sum(np.maximum(0.0, final - r)))


@dataclass(frozen=True)
class ProfileBand:
    """Performance profile: per-threshold point estimate with bootstrap band."""

    thresholds: np.ndarray
    point: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def to_csv(self) -> str:
        lines = ["tau,point,lo,hi"]
        lines += [f"{t:.17g},{p:.17g},{l:.17g},{h:.17g}"
                  for t, p, l, h in zip(self.thresholds, self.point, self.lo, self.hi)]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"tau": self.thresholds.tolist(), "point": self.point.tolist(),
                "lo": self.lo.tolist(), "hi": self.hi.tolist()}


def performance_profile(m: RunMatrix, thresholds, n_boot: int,
                        seed: int = 0) -> ProfileBand:
    """Fraction of (run, task) scores above each threshold, with 95% bands.

    Bands are the 2.5/97.5 percentiles over ``n_boot`` bootstrap resamples
    stratified by task: runs are resampled with replacement independently
    within each task. Deterministic for a fixed seed.
    """
    taus = np.asarray(thresholds, dtype=float)
    if taus.size == 0 or np.any(np.diff(taus) <= 0):
        raise DomainError("thresholds must be non-empty and increasing",
                          path="thresholds")
    if n_boot < 1:
        raise DomainError(f"n_boot must be >= 1, got {n_boot}", path="n_boot")
    scores = m.scores
    n_runs, n_tasks = scores.shape
    point = np.array([(scores > tau).mean() for tau in taus])

    rng = np.random.default_rng(seed)
    boot = np.empty((n_boot, taus.size))
    for b in range(n_boot):
        resampled = np.column_stack([
            scores[rng.integers(0, n_runs, n_runs), j] for j in range(n_tasks)
        ])
        boot[b] = [(resampled > tau).mean() for tau in taus]
    lo = np.quantile(boot, 0.025, axis=0)
    hi = np.quantile(boot, 0.975, axis=0)
    return ProfileBand(thresholds=taus, point=point, lo=lo, hi=hi)
