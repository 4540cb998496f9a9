"""Modified self-concordance: pairwise ratios, polytope bounds and the 2-D epsilon family."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegeneratePair
from ..mirror_maps import MirrorMap, PolytopeLogBarrier
from ..rng import stream

__all__ = ["msc_pair_ratio", "MscReport", "msc_report_polytope", "epsilon_example", "epsilon_witness",
           "epsilon_witness_family", "epsilon_bound"]


def msc_pair_ratio(mirror: MirrorMap, x, x2) -> np.ndarray:
    """``|C(x') - C(x)|_HS^2 / |grad phi(x') - grad phi(x)|^2`` with the map's pinned factor ``C``.

    Vectorised over leading axes of ``x`` and ``x2``.
    """
    x = mirror._check_primal(x)
    x2 = mirror._check_primal(x2)
    dy = mirror.grad_map(x2) - mirror.grad_map(x)
    den = np.sum(dy**2, axis=-1)
    if np.any(den == 0):
        raise DegeneratePair("dual images coincide")
    dc = mirror.hessian_sqrt_factor(x2) - mirror.hessian_sqrt_factor(x)
    return np.sum(dc**2, axis=(-2, -1)) / den


def epsilon_example(eps: float) -> PolytopeLogBarrier:
    """Cone ``{x : x_1 > 0, s x_1 + eps x_2 > 0}`` with ``s = sqrt(1 - eps^2)``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    s = math.sqrt(1.0 - eps**2)
    return PolytopeLogBarrier(np.array([[1.0, s], [0.0, eps]]), np.zeros(2))


def epsilon_bound(eps: float) -> float:
    """``1 / sigma_2^2 = 1 / (1 - sqrt(1 - eps^2))`` for the epsilon example."""
    return 1.0 / (1.0 - math.sqrt(1.0 - eps**2))


def epsilon_witness_family(eps: float, a) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``x = (1, 0)``, ``x' = (a, b(a))`` whose dual difference lies along the weakest singular direction."""
    s = math.sqrt(1.0 - eps**2)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = -a * (a - 1.0) * s * (s + 1.0) / (eps * ((a - 1.0) * s + a))
    x = np.broadcast_to([1.0, 0.0], (len(a), 2)).copy()
    return x, np.column_stack([a, b])


def epsilon_witness(eps: float) -> tuple[np.ndarray, np.ndarray]:
    """``x = (1, 0)``, ``x' = (2, -2 s (s + 1) / (eps (s + 2)))``."""
    x, x2 = epsilon_witness_family(eps, 2.0)
    return x[0], x2[0]


@dataclass(frozen=True)
class MscReport:
    factor_name: str
    singular_values: tuple
    analytic_upper: float | None  # None when the singular-value bound does not apply
    empirical_sup: float
    witness_pair: tuple
    probes: int
    witness_ratio: float | None = None

    @property
    def within_bound(self) -> bool | None:
        if self.analytic_upper is None:
            return None
        return self.empirical_sup <= self.analytic_upper + 1e-9

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["witness_pair"] = [list(map(float, p)) for p in self.witness_pair]
        out["within_bound"] = self.within_bound
        return out


def _matches_epsilon_example(mirror: PolytopeLogBarrier):
    A = mirror.A
    if A.shape != (2, 2) or np.any(mirror.b != 0):
        return None
    eps = A[1, 1]
    if not 0 < eps < 1:
        return None
    ref = epsilon_example(eps)
    return eps if np.allclose(ref.A, A, atol=1e-14) else None


def msc_report_polytope(A, b, probe_pairs: int = 10_000, seed: int = 0, box: float = 3.0) -> MscReport:
    """Singular values, the bound ``1 / sigma_d^2`` and an empirical sup of pair ratios.

    Probe points are uniform in a box of half-width ``box`` around the
    barrier's interior point, kept if strictly inside.  When the polytope is
    the 2-D epsilon example its witness family is added to the probes.  The
    empirical sup is a lower bound on the true constant, the singular-value
    bound an upper bound.
    """
    mirror = A if isinstance(A, PolytopeLogBarrier) else PolytopeLogBarrier(A, b)
    rng = stream(seed, "msc-probes")
    d = mirror.dim
    need = 2 * probe_pairs
    pts = []
    got = 0
    while got < need:
        cand = mirror.interior_point + rng.uniform(-box, box, size=(2 * need, d))
        cand = cand[np.all(mirror.slack(cand) > 1e-9, axis=-1)]
        pts.append(cand)
        got += len(cand)
    pts = np.concatenate(pts)[:need]
    x, x2 = pts[:probe_pairs], pts[probe_pairs:]
    ratios = msc_pair_ratio(mirror, x, x2)
    best = int(np.argmax(ratios))
    sup, pair = float(ratios[best]), (x[best], x2[best])
    witness_ratio = None
    eps = _matches_epsilon_example(mirror)
    if eps is not None:
        wx, wx2 = epsilon_witness(eps)
        witness_ratio = float(msc_pair_ratio(mirror, wx, wx2))
        fx, fx2 = epsilon_witness_family(eps, np.linspace(1.1, 10.0, 64))
        keep = mirror.in_domain(fx2)
        fr = msc_pair_ratio(mirror, fx[keep], fx2[keep])
        for r, p in [(witness_ratio, (wx, wx2))] + [(float(v), (fx[keep][i], fx2[keep][i])) for i, v in enumerate(fr)]:
            if r > sup:
                sup, pair = r, p
    # |A dw| >= sigma_d |dw| needs A injective, i.e. one constraint per dimension
    upper = mirror.msc_alpha if mirror.A.shape[0] == mirror.A.shape[1] else None
    return MscReport(mirror.factor_name, tuple(mirror.singular_values.tolist()), upper, sup, pair,
                     probe_pairs, witness_ratio)
