"""Legendre-duality, factor and finite-difference invariants of a mirror map."""
from __future__ import annotations

import numpy as np

from ..engine import mla_step_dual, mla_step_primal
from ..errors import DomainViolation
from ..rng import stream

__all__ = ["duality_suite", "TOLERANCES"]

TOLERANCES = {
    "roundtrip": 1e-8,  # |grad phi*(grad phi(x)) - x| / (1 + |x|)
    "factor_product": 1e-10,  # |C C^T - H| / |H|
    "factor_consistency": 1e-9,  # max entry of |A(grad phi(x)) - C(x)|
    "dual_hessian": 1e-8,  # |hess phi*(grad phi(x)) - H^{-1}| / |H^{-1}|
    "fd_gradient": 1e-4,
    "fd_hessian": 1e-3,
    "primal_dual_step": 1e-8,  # |x'_primal - x'_dual| / (1 + |x'|)
}


def _fd_grad(fn, x, step):
    """Central differences along each coordinate; ``step`` holds one step per row."""
    n, d = x.shape
    out = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        diff = fn(x + step[:, None] * e) - fn(x - step[:, None] * e)
        out.append(diff / (2.0 * step.reshape((n,) + (1,) * (diff.ndim - 1))))
    return np.stack(out, axis=1)


def _rel(a, b, axes):
    return np.linalg.norm(a - b, axis=axes) / np.maximum(np.linalg.norm(b, axis=axes), 1e-300)


def duality_suite(mirror, pot, n: int = 1000, seed: int = 0, h: float = 1e-3) -> dict:
    """Worst-case errors of each invariant over ``n`` interior points, with pass flags.

    The MLA comparison uses standard normal ``z`` and step ``h``; pairs whose
    dual step leaves the domain are skipped and counted.
    """
    rng = stream(seed, "duality", mirror.kind)
    x = mirror.sample_interior(rng, n)
    y = mirror.grad_map(x)
    nx = np.linalg.norm(x, axis=-1)
    errs = {}
    errs["roundtrip"] = float(np.max(np.linalg.norm(mirror.dual_grad_map(y) - x, axis=-1) / (1.0 + nx)))
    H = mirror.hessian(x)
    C = mirror.hessian_sqrt_factor(x)
    errs["factor_product"] = float(np.max(_rel(C @ np.swapaxes(C, -1, -2), H, (-2, -1))))
    errs["factor_consistency"] = float(np.max(np.abs(mirror.dual_inv_sqrt_factor(y) - C)))
    errs["dual_hessian"] = float(np.max(_rel(mirror.dual_hessian(y), np.linalg.inv(H), (-2, -1))))
    # points whose FD stencil would cross the boundary are left out of the FD checks
    step = 1e-6 * (1.0 + nx)
    fd_ok = np.ones(n, dtype=bool)
    for i in range(mirror.dim):
        e = np.zeros(mirror.dim)
        e[i] = 1.0
        fd_ok &= mirror.in_domain(x + step[:, None] * e) & mirror.in_domain(x - step[:, None] * e)
    xs, ss = x[fd_ok], step[fd_ok]
    g_fd = _fd_grad(lambda p: mirror.value(p), xs, ss)
    errs["fd_gradient"] = float(np.max(_rel(g_fd, mirror.grad_map(xs), -1)))
    H_fd = _fd_grad(lambda p: mirror.grad_map(p), xs, ss)
    errs["fd_hessian"] = float(np.max(_rel(np.swapaxes(H_fd, -1, -2), mirror.hessian(xs), (-2, -1))))
    z = rng.standard_normal((n, mirror.noise_dim))
    worst, skipped = 0.0, 0
    for xi, zi in zip(x, z):
        try:
            xd = mirror.dual_grad_map(mla_step_dual(mirror, pot, mirror.grad_map(xi), h, zi))
        except DomainViolation:
            skipped += 1
            continue
        xp = mla_step_primal(mirror, pot, xi, h, zi)
        worst = max(worst, float(np.linalg.norm(xp - xd) / (1.0 + np.linalg.norm(xd))))
    errs["primal_dual_step"] = worst
    checks = {k: bool(v <= TOLERANCES[k]) for k, v in errs.items()}
    return {"map": mirror.kind, "points": int(n), "fd_points": int(fd_ok.sum()), "mla_skipped": skipped,
            "errors": errs, "passed": checks}
