"""MLA steps, chain execution, Brownian paths and the fine Euler-Maruyama oracle.

Work is split into fixed-size blocks of chains (or replicas).  Block ``j``
draws from ``stream(seed, tag, j)``, so outputs depend only on the seed and
the block size, never on the thread count; blocks are reassembled in index
order.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainViolation, StepTooLarge
from .mirror_maps import MirrorMap, _as_points
from .potentials import Potential
from .rng import stream

__all__ = [
    "POLICIES",
    "SampleSet",
    "ChainState",
    "BrownianPath",
    "CouplingTrace",
    "mla_step_dual",
    "mla_step_primal",
    "run_chains",
    "em_fine_reference",
    "gbm_exact",
    "synchronous_pair",
    "default_threads",
]

POLICIES = ("fail", "reject_resample", "clamp_epsilon")
BLOCK_SIZE = 8192
MAX_RESAMPLE = 100
ABORT_FRACTION = 0.01


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("MLL_THREADS", "1")))
    except ValueError:
        return 1


def _map_blocks(fn, n_blocks: int, threads: int | None):
    threads = threads or default_threads()
    if threads <= 1 or n_blocks <= 1:
        return [fn(j) for j in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_blocks)))


@dataclass
class SampleSet:
    points: np.ndarray
    space: str = "dual"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.space not in ("primal", "dual"):
            raise ValueError("space must be 'primal' or 'dual'")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("sample points must be finite")

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class ChainState:
    """A single chain: dual iterate, iteration index, step size, violation count."""

    y: np.ndarray
    k: int = 0
    h: float = 0.0
    violations: int = 0
    valid: bool = True

    def advance(self, mirror, pot, z, policy="fail", rng=None):
        y, events = _step_with_policy(mirror, pot, self.y[None], self.h, np.asarray(z, float)[None], policy, rng)
        self.violations += int(events.sum())
        if np.isnan(y).any():
            self.valid = False
        else:
            self.y = y[0]
        self.k += 1
        return self


def _propose(mirror: MirrorMap, pot: Potential, y, h, z):
    return y - h * pot.dual_drift(mirror, y) + math.sqrt(2.0 * h) * mirror.apply_dual_factor(y, z)


def _step_with_policy(mirror, pot, y, h, z, policy, rng, noise_dim=None):
    """One batched step; returns (new y with NaN rows for aborted chains, per-row event counts)."""
    new = _propose(mirror, pot, y, h, z)
    bad = ~mirror.in_dual_domain(new)
    events = bad.astype(np.int64)
    if not bad.any():
        return new, events
    if policy == "fail":
        new[bad] = np.nan
    elif policy == "clamp_epsilon":
        new[bad] = mirror.clamp_dual(new[bad])
    elif policy == "reject_resample":
        if rng is None:
            raise ValueError("reject_resample needs a generator")
        k = noise_dim or mirror.noise_dim
        for _ in range(MAX_RESAMPLE):
            idx = np.flatnonzero(bad)
            zz = rng.standard_normal((len(idx), k))
            cand = _propose(mirror, pot, y[idx], h, zz)
            ok = mirror.in_dual_domain(cand)
            new[idx[ok]] = cand[ok]
            bad[idx[ok]] = False
            events[idx[~ok]] += 1
            if not bad.any():
                break
        new[bad] = np.nan
    else:
        raise ValueError(f"unknown violation policy {policy!r}")
    return new, events


def mla_step_dual(mirror: MirrorMap, pot: Potential, y, h: float, z, policy: str = "fail",
                  rng: np.random.Generator | None = None, h_cap: float | None = None) -> np.ndarray:
    """``y - h g(y) + sqrt(2h) A(y) z``.

    ``z`` is supplied by the caller so that steps can be coupled.  Under the
    default ``"fail"`` policy a proposal outside the dual domain raises
    :class:`DomainViolation`.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    if h_cap is not None and h > h_cap:
        warnings.warn(f"step size {h} exceeds cap {h_cap}", StepTooLarge, stacklevel=2)
    y = mirror._check_dual(y)
    single = y.ndim == 1
    Y = y.reshape(-1, mirror.dim)
    Z = np.asarray(z, float).reshape(-1, mirror.noise_dim)
    new, events = _step_with_policy(mirror, pot, Y, h, Z, policy, rng)
    if np.isnan(new).any():
        raise DomainViolation(f"MLA step left the dual domain ({int(events.sum())} events)")
    return new[0] if single else new.reshape(y.shape)


def mla_step_primal(mirror: MirrorMap, pot: Potential, x, h: float, z) -> np.ndarray:
    """``grad phi*(grad phi(x) - h grad f(x) + sqrt(2h) C(x) z)``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    x = mirror._check_primal(x)
    y = mirror.grad_map(x) - h * pot.grad_f(x) + math.sqrt(2.0 * h) * mirror.apply_factor(x, z)
    return mirror.dual_grad_map(mirror._check_dual(y))


def run_chains(mirror: MirrorMap, pot: Potential, init: SampleSet, h: float, k: int, chains: int,
               seed: int, policy: str = "fail", threads: int | None = None,
               record_at=(), block_size: int = BLOCK_SIZE):
    """Run ``chains`` independent MLA chains for ``k`` steps from ``init``.

    ``init`` holds either one dual point (shared start) or one per chain.
    Returns the final iterates as a dual :class:`SampleSet`; when
    ``record_at`` lists iteration indices, also returns a dict of snapshots.
    Raises :class:`DomainViolation` if more than 1% of chains abort.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown violation policy {policy!r}")
    if init.space != "dual":
        raise ValueError("initial samples must be dual points")
    if k < 0 or chains < 1:
        raise ValueError("need k >= 0 and chains >= 1")
    start = init.points
    if len(start) not in (1, chains):
        raise ValueError("init must hold one point or one point per chain")
    if not np.all(mirror.in_dual_domain(start)):
        raise DomainViolation("initial points outside the dual domain")
    start = np.broadcast_to(start, (chains, mirror.dim))
    record = sorted({int(r) for r in record_at if 0 <= r <= k})
    n_blocks = -(-chains // block_size)

    def block(j):
        lo, hi = j * block_size, min(chains, (j + 1) * block_size)
        rng = stream(seed, "chains", j)
        y = np.array(start[lo:hi], dtype=float)
        alive = np.ones(hi - lo, dtype=bool)
        events = np.zeros(hi - lo, dtype=np.int64)
        snaps = {}
        if 0 in record:
            snaps[0] = y.copy()
        for it in range(1, k + 1):
            z = rng.standard_normal((hi - lo, mirror.noise_dim))
            if alive.all():
                y, ev = _step_with_policy(mirror, pot, y, h, z, policy, rng)
            else:
                idx = np.flatnonzero(alive)
                y[idx], ev_a = _step_with_policy(mirror, pot, y[idx], h, z[idx], policy, rng)
                ev = np.zeros(hi - lo, dtype=np.int64)
                ev[idx] = ev_a
            events += ev
            alive &= ~np.isnan(y).any(axis=-1)
            if it in record:
                snaps[it] = y.copy()
        return y, alive, events, snaps

    parts = _map_blocks(block, n_blocks, threads)
    y = np.concatenate([p[0] for p in parts])
    alive = np.concatenate([p[1] for p in parts])
    events = np.concatenate([p[2] for p in parts])
    aborted = int((~alive).sum())
    if aborted > ABORT_FRACTION * chains:
        raise DomainViolation(f"{aborted} of {chains} chains left the dual domain under policy {policy!r}")
    prov = {"seed": seed, "h": h, "k": k, "chains": chains, "policy": policy,
            "violations": int(events.sum()), "aborted": aborted}
    final = SampleSet(y[alive], "dual", prov)
    if not record_at:
        return final
    snaps = {}
    for r in record:
        pts = np.concatenate([p[3][r] for p in parts])
        snaps[r] = SampleSet(pts[alive], "dual", dict(prov, k=r))
    return final, snaps


class BrownianPath:
    """Brownian increments on a fine grid of ``fine_steps`` steps over ``[0, horizon]``.

    Increments are generated per fine step from ``stream(seed, "path", j)``,
    so any window can be regenerated without storing the table.  ``batch``
    independent paths are carried side by side (shape ``(batch, noise_dim)``
    per step); ``batch=None`` gives a single path.
    """

    def __init__(self, seed: int, horizon: float, fine_steps: int, noise_dim: int, batch: int | None = None,
                 key: tuple = ()):
        if fine_steps < 1 or not horizon > 0:
            raise ValueError("need fine_steps >= 1 and horizon > 0")
        self.seed = int(seed)
        self.horizon = float(horizon)
        self.fine_steps = int(fine_steps)
        self.noise_dim = int(noise_dim)
        self.batch = batch
        self.key = tuple(key)
        self.dt = self.horizon / self.fine_steps

    def _shape(self):
        return (self.noise_dim,) if self.batch is None else (self.batch, self.noise_dim)

    def increment(self, j: int) -> np.ndarray:
        if not 0 <= j < self.fine_steps:
            raise IndexError(j)
        return stream(self.seed, "path", *self.key, j).standard_normal(self._shape()) * math.sqrt(self.dt)

    def aggregate(self, j0: int, j1: int) -> np.ndarray:
        """Sum of increments over fine steps ``[j0, j1)``."""
        out = np.zeros(self._shape())
        for j in range(j0, j1):
            out += self.increment(j)
        return out

    @property
    def increments(self) -> np.ndarray:
        return np.stack([self.increment(j) for j in range(self.fine_steps)])

    def value(self) -> np.ndarray:
        return self.aggregate(0, self.fine_steps)


def _em_fine(mirror: MirrorMap, pot: Potential, Y: np.ndarray, path: BrownianPath, tile: int = 1, record=None):
    """Batched fine Euler-Maruyama.

    ``Y`` has ``tile * batch`` rows; consecutive groups of ``batch`` rows share
    the path's increments (synchronous coupling).  Returns the endpoint (NaN
    rows for replicas that left the domain), the summed increment ``W_T`` of
    shape ``(batch, noise_dim)`` and the requested snapshots.
    """
    Y = np.array(Y, dtype=float)
    alive = np.ones(len(Y), dtype=bool)
    W = None
    snaps = {}
    if record and 0 in record:
        snaps[0] = Y.copy()
    dt = path.dt
    root2 = math.sqrt(2.0)
    for j in range(path.fine_steps):
        dW = path.increment(j).reshape(-1, path.noise_dim)
        W = dW.copy() if W is None else W + dW
        if tile > 1:
            dW = np.tile(dW, (tile, 1))
        if alive.all():
            Y = Y - dt * pot.dual_drift(mirror, Y) + root2 * mirror.apply_dual_factor(Y, dW)
            bad = np.flatnonzero(~mirror.in_dual_domain(Y))
        else:
            idx = np.flatnonzero(alive)
            Yi = Y[idx]
            Yi = Yi - dt * pot.dual_drift(mirror, Yi) + root2 * mirror.apply_dual_factor(Yi, dW[idx])
            Y[idx] = Yi
            bad = idx[~mirror.in_dual_domain(Yi)]
        if len(bad):
            Y[bad] = np.nan
            alive[bad] = False
        if record and (j + 1) in record:
            snaps[j + 1] = Y.copy()
    return Y, W, snaps


def em_fine_reference(mirror: MirrorMap, pot: Potential, y0, path: BrownianPath, record=None):
    """Euler-Maruyama for ``dY = -g(Y) dt + sqrt(2) A(Y) dW`` on the path's fine grid.

    This is the proxy for the exact solution ``Y_h`` in local-error
    experiments; a coarse MLA step fed ``path.value() / sqrt(h)`` uses
    exactly the same randomness.  Returns the endpoint at ``path.horizon``.
    Replicas whose fine iterates leave the dual domain come back as NaN rows
    so the caller can discard and count them; for a single path this raises
    :class:`DomainViolation` instead.  With ``record`` (fine-step indices)
    also returns ``{j: Y_j}``.
    """
    y0 = _as_points(y0, mirror.dim)
    if not np.all(mirror.in_dual_domain(y0)):
        raise DomainViolation("initial point outside the dual domain")
    rows = path.batch or 1
    Y = np.array(np.broadcast_to(y0.reshape(-1, mirror.dim), (rows, mirror.dim)))
    Y, _, snaps = _em_fine(mirror, pot, Y, path, record=record)
    if path.batch is None:
        if np.isnan(Y).any():
            raise DomainViolation("fine Euler-Maruyama path left the dual domain")
        Y = Y[0]
        snaps = {j: v[0] for j, v in snaps.items()}
    if record is not None:
        return Y, snaps
    return Y


def gbm_exact(y0, alpha: float, t: float, w):
    """Pathwise solution ``y0 exp(-(1 + alpha) t + sqrt(2 alpha) W_t)``."""
    return np.asarray(y0, float) * np.exp(-(1.0 + alpha) * t + math.sqrt(2.0 * alpha) * np.asarray(w, float))


@dataclass
class CouplingTrace:
    """Per-iteration mean (and standard error) of ``||y_k - y'_k||^2`` over coupled pairs."""

    h: float
    sq_dist_mean: np.ndarray
    sq_dist_sem: np.ndarray
    n_pairs: int
    aborted: int
    batch_means: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(len(self.sq_dist_mean))


def synchronous_pair(mirror: MirrorMap, pot: Potential, y0, y0p, h: float, k: int, seed: int,
                     pairs: int | None = None, threads: int | None = None, n_batches: int = 20,
                     block_size: int = BLOCK_SIZE) -> CouplingTrace:
    """Advance pairs of chains with identical noise and track their squared distance.

    ``y0`` and ``y0p`` are single dual points (broadcast to ``pairs`` copies)
    or arrays of starts.  A pair is dropped if either chain leaves the dual
    domain.  Pairs are processed in about ``n_batches`` contiguous blocks and
    ``batch_means`` holds the trace averaged within each block, for
    batch-means error estimates of derived quantities.
    """
    y0 = _as_points(y0, mirror.dim)
    y0p = _as_points(y0p, mirror.dim)
    n = pairs or max(len(y0.reshape(-1, mirror.dim)), len(y0p.reshape(-1, mirror.dim)))
    Y0 = np.broadcast_to(y0.reshape(-1, mirror.dim), (n, mirror.dim))
    Y0p = np.broadcast_to(y0p.reshape(-1, mirror.dim), (n, mirror.dim))
    if not (np.all(mirror.in_dual_domain(Y0)) and np.all(mirror.in_dual_domain(Y0p))):
        raise DomainViolation("pair starts outside the dual domain")
    block_size = min(block_size, max(1, -(-n // n_batches)))
    n_blocks = -(-n // block_size)

    def block(j):
        lo, hi = j * block_size, min(n, (j + 1) * block_size)
        rng = stream(seed, "pairs", j)
        a = np.array(Y0[lo:hi])
        b = np.array(Y0p[lo:hi])
        dist = np.empty((k + 1, hi - lo))
        dist[0] = np.sum((a - b) ** 2, axis=-1)
        ok = np.ones(hi - lo, dtype=bool)
        for it in range(1, k + 1):
            z = rng.standard_normal((hi - lo, mirror.noise_dim))
            a = _propose(mirror, pot, a, h, z)
            b = _propose(mirror, pot, b, h, z)
            bad = ~(mirror.in_dual_domain(a) & mirror.in_dual_domain(b))
            if bad.any():
                # dropped pairs restart so the batch stays in the domain; excluded below
                ok &= ~bad
                a[bad] = Y0[lo:hi][bad]
                b[bad] = Y0p[lo:hi][bad]
            dist[it] = np.sum((a - b) ** 2, axis=-1)
        kept = dist[:, ok]
        return kept.sum(axis=1), (kept**2).sum(axis=1), int(ok.sum()), hi - lo

    parts = _map_blocks(block, n_blocks, threads)
    total = np.sum([p[0] for p in parts], axis=0)
    total_sq = np.sum([p[1] for p in parts], axis=0)
    m = sum(p[2] for p in parts)
    dropped = n - m
    if m == 0:
        raise DomainViolation("every coupled pair left the dual domain")
    if dropped > ABORT_FRACTION * n:
        raise DomainViolation(f"{dropped} of {n} coupled pairs left the dual domain")
    mean = total / m
    var = np.maximum(total_sq / m - mean**2, 0.0) * m / max(m - 1, 1)
    sem = np.sqrt(var / m)
    bm = None
    if n_blocks >= 2:
        bm = np.stack([p[0] / p[2] for p in parts if p[2] > 0])
    return CouplingTrace(h, mean, sem, m, dropped, bm)
