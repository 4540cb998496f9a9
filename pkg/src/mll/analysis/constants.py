"""Closed-form constants of the mean-square convergence analysis of MLA.

Everything here is arithmetic on the inputs; nothing is estimated.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NotContractive
from ..potentials import DualTarget

__all__ = ["TheoremConstants", "theorem_constants", "constants_for", "growth_gamma"]


@dataclass(frozen=True)
class TheoremConstants:
    m: float
    M: float
    alpha: float
    d: int
    beta: float
    C0: float
    C1: float
    D1: float
    C2: float
    D2: float
    h1: float
    h2: float
    h_max: float
    h_max_terms: tuple
    h_max_alt: float
    U: float
    V: float
    gamma: float
    C_MLA: float
    E_y0_sq: float
    E_target_sq: float

    def mixing_step(self, eps: float) -> float:
        """Step size ``eps^2 / (4 C_MLA^2)`` that makes the bias term at most ``eps / 2``."""
        return eps**2 / (4.0 * self.C_MLA**2)

    def mixing_time(self, eps: float, w0: float) -> float:
        """Iterations ``log(2 sqrt(2) w0 / eps) / (beta h)`` at the step size above."""
        return math.log(2.0 * math.sqrt(2.0) * w0 / eps) / (self.beta * self.mixing_step(eps))

    def mixing_time_leading(self, eps: float) -> float:
        """``mixing_time`` without its logarithmic factor: ``4 C_MLA^2 / (beta eps^2)``."""
        return 1.0 / (self.beta * self.mixing_step(eps))

    def weak_envelope(self, E_y0_sq: float, h) -> np.ndarray:
        """Local weak error bound ``(C1 + D1 sqrt(E|Y0|^2)) h^{3/2}``."""
        return (self.C1 + self.D1 * math.sqrt(E_y0_sq)) * np.asarray(h, float) ** 1.5

    def strong_envelope(self, E_y0_sq: float, h) -> np.ndarray:
        """Root local strong error bound ``sqrt(C2^2 + D2^2 E|Y0|^2) h``."""
        return math.sqrt(self.C2**2 + self.D2**2 * E_y0_sq) * np.asarray(h, float)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["h_max_terms"] = list(self.h_max_terms)
        return out


def growth_gamma(alpha, M, E_y0_sq, y_star_norm, A_star_hs, g_star_norm) -> float:
    """Slope ``gamma`` of the short-time growth bound ``E|Y_t - Y_0|^2 <= gamma t``."""
    k = 1.0 + 4.0 * alpha
    return 8 * k * E_y0_sq + 8 * k * y_star_norm**2 + 16 * A_star_hs**2 + 4 * g_star_norm**2 / M**2


def theorem_constants(m, M, alpha, d, y_star_norm, A_star_hs, g_star_norm, E_y0_sq, E_target_sq) -> TheoremConstants:
    """Evaluate every constant of the convergence bound for MLA.

    Local orders are ``p1 = 3/2`` and ``p2 = 1``; the deviation bound holds
    for all times, so no short-time horizon enters ``h_max``.
    ``h_max_alt`` uses ``1 + 8 alpha`` in place of ``1 + 4 alpha`` inside
    ``C0 D2``; it is reported for comparison only.
    """
    m, M, alpha = float(m), float(M), float(alpha)
    if not (m > 0 and M >= m):
        raise ValueError("need 0 < m <= M")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha >= m:
        raise NotContractive(f"alpha = {alpha} >= m = {m}: no contraction")
    k = 1.0 + 4.0 * alpha
    V = float(y_star_norm + A_star_hs + g_star_norm / M)
    beta = m - alpha
    C0 = 4.0 * M
    C1 = 3.0 * M * math.sqrt(k) * V
    D1 = 2.0 * M * math.sqrt(k)
    C2 = 7.0 * k * V
    D2 = 5.0 * k
    h1 = h2 = 1.0 / (M**2 + 4.0 * alpha)
    r2 = math.sqrt(2.0)
    terms = (h1, h2, 1.0 / (4.0 * beta), (math.sqrt(beta) / (4 * r2 * D2)) ** 2,
             (beta / (8 * r2 * (D1 + C0 * D2))) ** 2)
    alt_last = (beta / (8 * r2 * (D1 + C0 * 5.0 * (1.0 + 8.0 * alpha)))) ** 2
    U = math.sqrt(4.0 * E_y0_sq + 6.0 * E_target_sq)
    C = (2.0 / beta) * (C1 + C0 * C2 + r2 * U * (D1 + C0 * D2)) + (2.0 / math.sqrt(beta)) * (C2 + r2 * D2 * U)
    gamma = growth_gamma(alpha, M, E_y0_sq, y_star_norm, A_star_hs, g_star_norm)
    return TheoremConstants(m, M, alpha, int(d), beta, C0, C1, D1, C2, D2, h1, h2, min(terms), terms,
                            min(terms[:4] + (alt_last,)), U, V, gamma, C, float(E_y0_sq), float(E_target_sq))


def constants_for(mirror, pot, E_y0_sq: float, E_target_sq: float | None = None) -> TheoremConstants:
    """Constants for a (map, potential) instance from its exact ``(m, M)``, ``alpha`` and ``y*``."""
    m, M = pot.relative_constants(mirror)
    y_star = np.atleast_1d(pot.minimizer_dual(mirror))
    A_star = mirror.dual_inv_sqrt_factor(y_star)
    g_star = pot.dual_drift(mirror, y_star)
    if E_target_sq is None:
        E_target_sq = DualTarget(mirror, pot).second_moment()
    return theorem_constants(m, M, mirror.msc_alpha, mirror.dim, float(np.linalg.norm(y_star)),
                             float(np.linalg.norm(A_star)), float(np.linalg.norm(g_star)), E_y0_sq, E_target_sq)
