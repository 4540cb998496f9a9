"""Asymptotic bias of MLA in W2 against exact draws from the dual target."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ..engine import SampleSet, run_chains
from ..errors import InsufficientBurnIn, Unsupported
from ..potentials import DualTarget
from ..rng import stream
from ..transport import bootstrap_half_width, w2_euclidean, _w2_sorted
from .fit import OrderFit, fit_order
from .laws import GaussianLaw

__all__ = ["BiasPoint", "BiasScan", "bias_at", "bias_scan", "ula_stationary_bias", "default_iterations"]


def ula_stationary_bias(c: float, h: float, d: int = 1) -> float:
    """Exact W2 between the ULA stationary law ``N(0, I / (c (1 - c h / 2)))`` and ``N(0, I / c)``."""
    return math.sqrt(d) * abs(1.0 / math.sqrt(c * (1.0 - c * h / 2.0)) - 1.0 / math.sqrt(c))


def default_iterations(beta: float, h: float) -> int:
    # the last quarter of the run starts after log(1e4) / beta time units
    return math.ceil(4.0 / 3.0 * math.log(1e4) / (beta * h))


@dataclass(frozen=True)
class BiasPoint:
    h: float
    k: int
    bias: float
    half_width: float
    snapshot_k: tuple
    snapshot_w2: tuple
    chains: int
    violations: int
    aborted: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class BiasScan:
    points: tuple
    fit: OrderFit | None
    noise_floor: float
    resolved: bool

    def to_dict(self) -> dict:
        return {"points": [p.to_dict() for p in self.points], "fit": self.fit.to_dict() if self.fit else None,
                "noise_floor": self.noise_floor, "resolved": self.resolved}


def _beta(mirror, pot) -> float:
    m, _ = pot.relative_constants(mirror)
    return m - mirror.msc_alpha


def bias_at(mirror, pot, h: float, k: int | None, chains: int, seed: int, init=None, n_snapshots: int = 4,
            n_boot: int = 200, exact: np.ndarray | None = None, threads: int | None = None,
            check_burn_in: bool = True) -> BiasPoint:
    """Asymptotic W2 bias at one step size.

    Runs ``chains`` chains for ``k`` steps, takes ``n_snapshots`` evenly
    spaced snapshots over the last quarter, and averages their exact
    empirical W2 to an equal-size exact sample.  The half-width is the
    bootstrap half-width of the final snapshot.  Raises
    :class:`InsufficientBurnIn` if the first and last snapshots differ by
    more than three combined standard errors.
    """
    target = DualTarget(mirror, pot)
    if not target.exact_sampler_available:
        raise Unsupported("bias estimation needs an exact dual sampler")
    beta = _beta(mirror, pot)
    k_min = math.ceil(math.log(1e3) / (beta * h))
    k = default_iterations(beta, h) if k is None else int(k)
    if k < k_min:
        raise ValueError(f"k = {k} is below the burn-in floor {k_min} for h = {h}")
    if init is None:
        init = GaussianLaw(pot.minimizer_dual(mirror), 0.1)
    y0 = init.sample(mirror, stream(seed, "bias-init"), chains)
    q = k // 4
    snap_k = sorted({k - round(q * (n_snapshots - 1 - i) / max(n_snapshots - 1, 1)) for i in range(n_snapshots)})
    final, snaps = run_chains(mirror, pot, SampleSet(y0, "dual"), h, k, chains, seed, threads=threads,
                              record_at=snap_k)
    if exact is None:
        exact = target.exact_dual_samples(chains, seed).points
    n = len(final)
    ref = exact[:n]
    ws = [w2_euclidean(snaps[s].points, ref).value for s in snap_k]
    a = snaps[snap_k[-1]].points
    if a.shape[1] == 1:
        hw = bootstrap_half_width(a[:, 0], ref[:, 0], _w2_sorted, n_boot, seed) if n_boot else float("nan")
    else:
        hw = w2_euclidean(a, ref, n_boot, seed).half_width
    if check_burn_in and n_boot and len(ws) > 1:
        sd = hw / norm.ppf(0.975)
        if abs(ws[-1] - ws[0]) > 3.0 * math.sqrt(2.0) * sd:
            raise InsufficientBurnIn(f"bias drifts from {ws[0]:.4g} to {ws[-1]:.4g} over the last quarter at h = {h}")
    prov = final.provenance
    return BiasPoint(h, k, float(np.mean(ws)), hw, tuple(snap_k), tuple(ws), n, prov["violations"], prov["aborted"])


def bias_scan(mirror, pot, h_grid, k_per_h=None, chains: int = 100_000, seed: int = 0, init=None,
              n_snapshots: int = 4, n_boot: int = 200, threads: int | None = None) -> BiasScan:
    """Asymptotic bias over a step-size grid and its log-log slope.

    ``k_per_h`` is a matching list of iteration counts (default: enough for
    the transient to fall below ``1e-4`` before the last quarter).  All
    step sizes share one exact reference sample.  The noise floor is the W2
    between two independent exact samples of the same size; the scan is
    unresolved when a bias estimate is within a half-width of that floor or
    when the fit itself is unresolved.
    """
    h_grid = [float(h) for h in h_grid]
    ks = [None] * len(h_grid) if k_per_h is None else list(k_per_h)
    if len(ks) != len(h_grid):
        raise ValueError("k_per_h must match h_grid")
    target = DualTarget(mirror, pot)
    if not target.exact_sampler_available:
        raise Unsupported("bias estimation needs an exact dual sampler")
    exact = target.exact_dual_samples(chains, seed).points
    points = tuple(bias_at(mirror, pot, h, k, chains, seed + 1 + i, init, n_snapshots, n_boot, exact, threads)
                   for i, (h, k) in enumerate(zip(h_grid, ks)))
    other = target.exact_dual_samples(chains, seed + 10_000).points
    floor = w2_euclidean(other, exact).value
    fit = None
    if len(points) >= 4:
        fit = fit_order([p.h for p in points], [p.bias for p in points], [p.half_width for p in points])
    resolved = bool(fit is not None and fit.resolved and all(p.bias - p.half_width > floor for p in points))
    return BiasScan(points, fit, float(floor), resolved)
