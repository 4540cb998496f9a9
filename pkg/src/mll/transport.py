"""Empirical Wasserstein-2 estimators between equal-size sample sets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import norm

from .errors import SizeMismatch, TooLarge
from .mirror_maps import MirrorMap
from .rng import stream

__all__ = ["W2Estimate", "w2_1d", "w2_assignment", "w2_sliced", "w2_phi", "w2_euclidean", "bootstrap_half_width"]

ASSIGNMENT_MAX_N = 512


@dataclass(frozen=True)
class W2Estimate:
    value: float
    method: str  # "exact_1d" | "assignment" | "sliced"
    n: int
    half_width: float = float("nan")

    @property
    def is_lower_bound_surrogate(self) -> bool:
        return self.method == "sliced"


def _as_samples(a) -> np.ndarray:
    a = np.asarray(getattr(a, "points", a), dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


def _check_sizes(a, b):
    if a.shape != b.shape:
        raise SizeMismatch(f"sample sets differ in shape: {a.shape} vs {b.shape}")
    if len(a) < 1:
        raise SizeMismatch("empty sample set")


def _w2_sorted(a: np.ndarray, b: np.ndarray) -> float:
    return math.sqrt(np.mean((np.sort(a) - np.sort(b)) ** 2))


def bootstrap_half_width(a, b, estimator, n_boot: int = 200, seed: int = 0, level: float = 0.95) -> float:
    """Percentile-free bootstrap half-width: ``z * sd`` of the estimator over resamples of both sets."""
    rng = stream(seed, "bootstrap")
    n = len(a)
    vals = np.empty(n_boot)
    for i in range(n_boot):
        vals[i] = estimator(a[rng.integers(0, n, n)], b[rng.integers(0, n, n)])
    return float(norm.ppf(0.5 + level / 2) * vals.std(ddof=1))


def w2_1d(a, b, n_boot: int = 0, seed: int = 0) -> W2Estimate:
    """Exact empirical W2 of two 1-D samples by sorted pairing."""
    a = _as_samples(a)
    b = _as_samples(b)
    _check_sizes(a, b)
    if a.shape[1] != 1:
        raise ValueError("w2_1d needs one-dimensional samples")
    a, b = a[:, 0], b[:, 0]
    hw = bootstrap_half_width(a, b, _w2_sorted, n_boot, seed) if n_boot else float("nan")
    return W2Estimate(_w2_sorted(a, b), "exact_1d", len(a), hw)


def _w2_assign(a: np.ndarray, b: np.ndarray) -> float:
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    r, c = linear_sum_assignment(cost)
    return math.sqrt(cost[r, c].mean())


def w2_assignment(a, b, n_boot: int = 0, seed: int = 0) -> W2Estimate:
    """Exact empirical W2 by optimal assignment on squared distances (``n <= 512``)."""
    a = _as_samples(a)
    b = _as_samples(b)
    _check_sizes(a, b)
    if len(a) > ASSIGNMENT_MAX_N:
        raise TooLarge(f"assignment solver limited to n <= {ASSIGNMENT_MAX_N}")
    hw = bootstrap_half_width(a, b, _w2_assign, n_boot, seed) if n_boot else float("nan")
    return W2Estimate(_w2_assign(a, b), "assignment", len(a), hw)


def w2_sliced(a, b, n_slices: int = 64, seed: int = 0) -> W2Estimate:
    """Root-mean of squared 1-D W2 over random projections.  Diagnostic only."""
    if n_slices < 32:
        raise ValueError("need at least 32 slices")
    a = _as_samples(a)
    b = _as_samples(b)
    _check_sizes(a, b)
    d = a.shape[1]
    if d == 1:
        return W2Estimate(_w2_sorted(a[:, 0], b[:, 0]), "sliced", len(a))
    u = stream(seed, "slices").standard_normal((n_slices, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pa, pb = a @ u.T, b @ u.T
    sq = np.mean((np.sort(pa, axis=0) - np.sort(pb, axis=0)) ** 2, axis=0)
    return W2Estimate(math.sqrt(sq.mean()), "sliced", len(a))


def w2_euclidean(a, b, n_boot: int = 0, seed: int = 0) -> W2Estimate:
    """Dispatch to the exact estimator that fits the data: sorted pairing in 1-D, assignment otherwise."""
    a = _as_samples(a)
    if a.shape[1] == 1:
        return w2_1d(a, b, n_boot, seed)
    return w2_assignment(a, b, n_boot, seed)


def w2_phi(mirror: MirrorMap, a, b, n_boot: int = 0, seed: int = 0) -> W2Estimate:
    """Mirror-modified W2 between primal samples: Euclidean W2 of their images under grad phi."""
    a = _as_samples(a)
    b = _as_samples(b)
    _check_sizes(a, b)
    return w2_euclidean(mirror.grad_map(a), mirror.grad_map(b), n_boot, seed)
