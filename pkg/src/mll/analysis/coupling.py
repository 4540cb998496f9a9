"""Synchronous-coupling checks: contraction rate, deviation and growth bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..engine import BLOCK_SIZE, BrownianPath, _em_fine, _map_blocks, synchronous_pair
from ..rng import stream
from .constants import growth_gamma

__all__ = ["ContractionFit", "contraction_rate", "DeviationReport", "deviation_check", "GrowthReport",
           "growth_check", "discrete_rate"]


@dataclass(frozen=True)
class ContractionFit:
    rate: float
    se: float
    h: float
    k: int
    pairs: int
    aborted: int
    non_contracting: bool
    times: np.ndarray = field(repr=False)
    sq_dist: np.ndarray = field(repr=False)
    sq_dist_sem: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "se": self.se, "h": self.h, "k": self.k, "pairs": self.pairs,
                "aborted": self.aborted, "non_contracting": self.non_contracting}


def _decay_rate(times, values) -> float:
    # E|Y - Y'|^2 ~ exp(-2 rate t)
    return -0.5 * float(np.polyfit(times, np.log(values), 1)[0])


def discrete_rate(multiplier: float, h: float) -> float:
    """Per-unit-time rate of a chain whose mean squared distance is multiplied by ``multiplier`` per step."""
    return -math.log(multiplier) / (2.0 * h)


def contraction_rate(mirror, pot, y0, y0p, h: float, k: int, pairs: int, seed: int,
                     threads: int | None = None, n_batches: int = 20) -> ContractionFit:
    """Fit the exponential decay rate of the synchronous-pair mean squared distance.

    The rate is ``-slope / 2`` of a least-squares line through
    ``log E|y_k - y'_k|^2`` against ``t = k h``.  Its standard error comes
    from refitting within each batch of pairs.  ``non_contracting`` is set
    when the fitted rate is not positive.
    """
    tr = synchronous_pair(mirror, pot, y0, y0p, h, k, seed, pairs=pairs, threads=threads, n_batches=n_batches)
    if np.any(tr.sq_dist_mean <= 0):
        raise ValueError("coupled pairs coincide; start the pair at distinct points")
    t = tr.times
    rate = _decay_rate(t, tr.sq_dist_mean)
    se = 0.0
    if tr.batch_means is not None and len(tr.batch_means) >= 2:
        rates = np.array([_decay_rate(t, b) for b in tr.batch_means])
        se = float(rates.std(ddof=1) / math.sqrt(len(rates)))
    return ContractionFit(rate, se, h, k, tr.n_pairs, tr.aborted, bool(rate <= 0), t, tr.sq_dist_mean,
                          tr.sq_dist_sem)


def _record_indices(t_grid, horizon, fine_steps):
    dt = horizon / fine_steps
    idx = [int(round(t / dt)) for t in t_grid]
    for t, i in zip(t_grid, idx):
        if i < 1 or abs(i * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not on the fine grid (dt = {dt})")
    return idx


def _t_grid(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 1 or not np.all(t > 0) or not np.all(np.diff(t) > 0):
        raise ValueError("t_grid must be positive and increasing")
    return t


def _instance_terms(mirror, pot):
    m, M = pot.relative_constants(mirror)
    alpha = mirror.msc_alpha
    return m, M, alpha


@dataclass(frozen=True)
class DeviationReport:
    t_grid: tuple
    lhs: tuple
    ratios: tuple
    ratio_se: tuple
    bound: float
    max_ratio: float
    passed: bool
    pairs: int
    discarded: int
    E_start_sq_dist: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def deviation_check(mirror, pot, law, law_p, t_grid, pairs: int, seed: int, fine_steps: int,
                    threads: int | None = None, block_size: int = BLOCK_SIZE) -> DeviationReport:
    """Check ``E|(Y'_t - Y'_0) - (Y_t - Y_0)|^2 <= 4 M E|Y'_0 - Y_0|^2 t`` on fine-oracle coupled pairs.

    Both solutions share one fine Brownian path per pair; ``t_grid`` must lie
    on that path's grid, which spans ``[0, max(t_grid)]`` in ``fine_steps``
    steps.  A point passes if its ratio is at most ``4M`` plus three
    standard errors.  Pairs with a fine iterate outside the dual domain are
    discarded and counted.
    """
    m, M, alpha = _instance_terms(mirror, pot)
    if alpha >= m:
        raise ValueError("deviation check needs alpha < m")
    t = _t_grid(t_grid)
    idx = _record_indices(t, t[-1], fine_steps)
    n_blocks = -(-pairs // block_size)

    def block(j):
        n = min(pairs, (j + 1) * block_size) - j * block_size
        a0 = law.sample(mirror, stream(seed, "deviation-init", j), n)
        b0 = law_p.sample(mirror, stream(seed, "deviation-init-p", j), n)
        path = BrownianPath(seed, t[-1], fine_steps, mirror.noise_dim, batch=n, key=("deviation", j))
        _, _, snaps = _em_fine(mirror, pot, np.vstack([a0, b0]), path, tile=2, record=set(idx))
        q = np.stack([np.sum(((snaps[i][n:] - b0) - (snaps[i][:n] - a0)) ** 2, axis=-1) for i in idx])
        ok = np.all(np.isfinite(q), axis=0)
        return q[:, ok], np.sum((b0 - a0) ** 2, axis=-1)[ok], int((~ok).sum())

    parts = _map_blocks(block, n_blocks, threads)
    q = np.concatenate([p[0] for p in parts], axis=1)
    d0 = np.concatenate([p[1] for p in parts])
    n = q.shape[1]
    den = float(d0.mean())
    if den <= 0:
        raise ValueError("start laws coincide")
    lhs = q.mean(axis=1)
    ratios = lhs / (den * t)
    se = q.std(axis=1, ddof=1) / math.sqrt(n) / (den * t)
    bound = 4.0 * M
    passed = bool(np.all(ratios <= bound + 3.0 * se))
    return DeviationReport(tuple(t.tolist()), tuple(lhs.tolist()), tuple(ratios.tolist()), tuple(se.tolist()),
                           bound, float(ratios.max()), passed, n, sum(p[2] for p in parts), den)


@dataclass(frozen=True)
class GrowthReport:
    t_grid: tuple
    lhs: tuple
    lhs_se: tuple
    gamma: float
    ratios: tuple
    passed: bool
    replicas: int
    discarded: int
    E_y0_sq: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def growth_check(mirror, pot, law, t_grid, replicas: int, seed: int, fine_steps: int,
                 threads: int | None = None, block_size: int = BLOCK_SIZE) -> GrowthReport:
    """Check ``E|Y_t - Y_0|^2 <= gamma t`` along the fine oracle.

    ``gamma`` is evaluated in closed form from ``y*``, ``A(y*)``, ``g(y*)``,
    ``M``, ``alpha`` and the second moment of the drawn starts.  Times must
    lie in ``(0, 1/(M^2 + 4 alpha)]``.
    """
    m, M, alpha = _instance_terms(mirror, pot)
    t = _t_grid(t_grid)
    if t[-1] > 1.0 / (M**2 + 4.0 * alpha) * (1 + 1e-12):
        raise ValueError("t_grid must lie in (0, 1/(M^2 + 4 alpha)]")
    idx = _record_indices(t, t[-1], fine_steps)
    n_blocks = -(-replicas // block_size)

    def block(j):
        n = min(replicas, (j + 1) * block_size) - j * block_size
        y0 = law.sample(mirror, stream(seed, "growth-init", j), n)
        path = BrownianPath(seed, t[-1], fine_steps, mirror.noise_dim, batch=n, key=("growth", j))
        _, _, snaps = _em_fine(mirror, pot, y0, path, record=set(idx))
        q = np.stack([np.sum((snaps[i] - y0) ** 2, axis=-1) for i in idx])
        ok = np.all(np.isfinite(q), axis=0)
        return q[:, ok], np.sum(y0**2, axis=-1), int((~ok).sum())

    parts = _map_blocks(block, n_blocks, threads)
    q = np.concatenate([p[0] for p in parts], axis=1)
    E0 = float(np.concatenate([p[1] for p in parts]).mean())
    n = q.shape[1]
    y_star = np.atleast_1d(pot.minimizer_dual(mirror))
    gamma = growth_gamma(alpha, M, E0, float(np.linalg.norm(y_star)),
                         float(np.linalg.norm(mirror.dual_inv_sqrt_factor(y_star))),
                         float(np.linalg.norm(pot.dual_drift(mirror, y_star))))
    lhs = q.mean(axis=1)
    se = q.std(axis=1, ddof=1) / math.sqrt(n)
    passed = bool(np.all(lhs <= gamma * t + 3.0 * se))
    return GrowthReport(tuple(t.tolist()), tuple(lhs.tolist()), tuple(se.tolist()), gamma,
                        tuple((lhs / (gamma * t)).tolist()), passed, n, sum(p[2] for p in parts), E0)
