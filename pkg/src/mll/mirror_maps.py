"""Legendre mirror maps and their Hessian square-root factors.

All methods are vectorised over leading axes: a point is an array whose last
axis has length ``dim`` and any number of batch axes may precede it.  Factors
have trailing shape ``(dim, noise_dim)``.

Each map pins one square-root factor of its Hessian.  The modified
self-concordance constant depends on that choice, so the factor is part of
the map's identity and is reported under ``factor_name``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

from .errors import DomainViolation, NoConvergence, SingularConstraints, Unsupported

__all__ = [
    "MirrorMap",
    "Quadratic",
    "OrthantLogBarrier",
    "PolytopeLogBarrier",
    "Gbm1d",
    "map_from_config",
]


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


class MirrorMap:
    """Base class.  Subclasses provide closed forms where they exist."""

    kind: str = ""
    factor_name: str = ""

    def __init__(self, dim: int, noise_dim: int):
        if dim < 1 or noise_dim < 1:
            raise ValueError("dimensions must be positive")
        self.dim = int(dim)
        self.noise_dim = int(noise_dim)

    # -- domains ---------------------------------------------------------
    def in_domain(self, x) -> np.ndarray:
        raise NotImplementedError

    def in_dual_domain(self, y) -> np.ndarray:
        raise NotImplementedError

    def _check_primal(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        if not np.all(self.in_domain(x)):
            raise DomainViolation(f"{self.kind}: point outside the primal domain")
        return x

    def _check_dual(self, y) -> np.ndarray:
        y = _as_points(y, self.dim)
        if not np.all(self.in_dual_domain(y)):
            raise DomainViolation(f"{self.kind}: point outside the dual domain")
        return y

    def clamp_dual(self, y, eps: float = 1e-12) -> np.ndarray:
        """Project dual points to ``eps`` inside the dual domain."""
        raise Unsupported(f"{self.kind} has no dual clamp")

    # -- potential and derivatives ----------------------------------------
    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_map(self, x) -> np.ndarray:
        raise NotImplementedError

    def dual_grad_map(self, y) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def dual_hessian(self, y) -> np.ndarray:
        return np.linalg.inv(self.hessian(self.dual_grad_map(y)))

    def hessian_sqrt_factor(self, x) -> np.ndarray:
        raise NotImplementedError

    def dual_inv_sqrt_factor(self, y) -> np.ndarray:
        """``A(y)`` with ``A A^T = (hess phi*)(y)^{-1}``, equal to the primal factor at ``dual_grad_map(y)``."""
        return self.hessian_sqrt_factor(self.dual_grad_map(y))

    def apply_dual_factor(self, y, z) -> np.ndarray:
        """Return ``A(y) @ z`` batched; diagonal maps override this."""
        return np.einsum("...ij,...j->...i", self.dual_inv_sqrt_factor(y), np.asarray(z, float))

    def apply_factor(self, x, z) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.hessian_sqrt_factor(x), np.asarray(z, float))

    def bregman(self, x, x2) -> np.ndarray:
        x = self._check_primal(x)
        x2 = self._check_primal(x2)
        out = self.value(x) - self.value(x2) - np.sum(self.grad_map(x2) * (x - x2), axis=-1)
        return np.maximum(out, 0.0)

    # -- modified self-concordance ----------------------------------------
    @property
    def msc_alpha(self) -> float:
        """Known modified self-concordance constant (or an upper bound) for the pinned factor."""
        raise NotImplementedError

    def sample_interior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` interior points from a fixed reference box; used by property tests."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_config()})"


class Quadratic(MirrorMap):
    """``phi(x) = |x|^2 / 2``; MLA reduces to the unadjusted Langevin algorithm."""

    kind = "quadratic"
    factor_name = "identity"

    def __init__(self, dim: int):
        super().__init__(dim, dim)

    def in_domain(self, x):
        x = _as_points(x, self.dim)
        return np.all(np.isfinite(x), axis=-1)

    in_dual_domain = in_domain

    def clamp_dual(self, y, eps=1e-12):
        return _as_points(y, self.dim).copy()

    def value(self, x):
        x = self._check_primal(x)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad_map(self, x):
        return self._check_primal(x).copy()

    def dual_grad_map(self, y):
        return self._check_dual(y).copy()

    def hessian(self, x):
        x = self._check_primal(x)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def dual_hessian(self, y):
        return self.hessian(y)

    def hessian_sqrt_factor(self, x):
        return self.hessian(x)

    def dual_inv_sqrt_factor(self, y):
        return self.hessian(y)

    def apply_dual_factor(self, y, z):
        return np.broadcast_to(np.asarray(z, float), np.broadcast_shapes(np.shape(y), np.shape(z))).copy()

    apply_factor = apply_dual_factor

    @property
    def msc_alpha(self):
        return 0.0

    def sample_interior(self, rng, n):
        return rng.uniform(-5.0, 5.0, size=(n, self.dim))

    def to_config(self):
        return {"kind": self.kind, "dim": self.dim}


class OrthantLogBarrier(MirrorMap):
    """``phi(x) = -sum log x_i`` on the open positive orthant.

    The dual domain is the open negative orthant, ``grad phi(x) = -1/x`` and
    the pinned factor is ``diag(1/x) = diag(|y|)``, which is 1-Lipschitz in
    the dual coordinates, so the modified self-concordance constant is 1.
    """

    kind = "orthant_log_barrier"
    factor_name = "diag(1/x)"

    def __init__(self, dim: int):
        super().__init__(dim, dim)

    def in_domain(self, x):
        x = _as_points(x, self.dim)
        return np.all((x > 0) & np.isfinite(x), axis=-1)

    def in_dual_domain(self, y):
        y = _as_points(y, self.dim)
        return np.all((y < 0) & np.isfinite(y), axis=-1)

    def clamp_dual(self, y, eps=1e-12):
        return np.minimum(_as_points(y, self.dim), -eps)

    def value(self, x):
        return -np.sum(np.log(self._check_primal(x)), axis=-1)

    def grad_map(self, x):
        return -1.0 / self._check_primal(x)

    def dual_grad_map(self, y):
        return -1.0 / self._check_dual(y)

    def hessian(self, x):
        x = self._check_primal(x)
        return _diag(1.0 / x**2)

    def dual_hessian(self, y):
        y = self._check_dual(y)
        return _diag(1.0 / y**2)

    def hessian_sqrt_factor(self, x):
        return _diag(1.0 / self._check_primal(x))

    def dual_inv_sqrt_factor(self, y):
        return _diag(-self._check_dual(y))

    def apply_dual_factor(self, y, z):
        return -_as_points(y, self.dim) * np.asarray(z, float)

    def apply_factor(self, x, z):
        return np.asarray(z, float) / _as_points(x, self.dim)

    @property
    def msc_alpha(self):
        return 1.0

    def sample_interior(self, rng, n):
        return np.exp(rng.uniform(-3.0, 3.0, size=(n, self.dim)))

    def to_config(self):
        return {"kind": self.kind, "dim": self.dim}


class Gbm1d(MirrorMap):
    """One-dimensional map whose dual dynamics with drift ``g(y) = y`` is
    geometric Brownian motion ``dY = -Y dt + sqrt(2 alpha) Y dW``.

    ``phi(x) = -log(-x) / alpha`` on ``x < 0``, so ``y = -1/(alpha x) > 0`` and
    ``A(y) = sqrt(alpha) y``.  The dual domain is the positive half-line rather
    than the whole line; leaving it is a domain violation.
    """

    kind = "gbm1d"
    factor_name = "sqrt(phi'')"

    def __init__(self, alpha: float):
        super().__init__(1, 1)
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)

    def in_domain(self, x):
        x = _as_points(x, 1)
        return np.all((x < 0) & np.isfinite(x), axis=-1)

    def in_dual_domain(self, y):
        y = _as_points(y, 1)
        return np.all((y > 0) & np.isfinite(y), axis=-1)

    def clamp_dual(self, y, eps=1e-12):
        return np.maximum(_as_points(y, 1), eps)

    def value(self, x):
        return -np.log(-self._check_primal(x))[..., 0] / self.alpha

    def grad_map(self, x):
        return -1.0 / (self.alpha * self._check_primal(x))

    def dual_grad_map(self, y):
        return -1.0 / (self.alpha * self._check_dual(y))

    def hessian(self, x):
        x = self._check_primal(x)
        return (1.0 / (self.alpha * x**2))[..., None]

    def dual_hessian(self, y):
        y = self._check_dual(y)
        return (1.0 / (self.alpha * y**2))[..., None]

    def hessian_sqrt_factor(self, x):
        x = self._check_primal(x)
        return (1.0 / (math.sqrt(self.alpha) * np.abs(x)))[..., None]

    def dual_inv_sqrt_factor(self, y):
        return (math.sqrt(self.alpha) * self._check_dual(y))[..., None]

    def apply_dual_factor(self, y, z):
        return math.sqrt(self.alpha) * _as_points(y, 1) * np.asarray(z, float)

    def apply_factor(self, x, z):
        return np.asarray(z, float) / (math.sqrt(self.alpha) * np.abs(_as_points(x, 1)))

    @property
    def msc_alpha(self):
        return self.alpha

    def sample_interior(self, rng, n):
        return -np.exp(rng.uniform(-3.0, 3.0, size=(n, 1)))

    def to_config(self):
        return {"kind": self.kind, "alpha": self.alpha}


class PolytopeLogBarrier(MirrorMap):
    """Log-barrier ``phi(x) = -sum log(a_i^T x - b_i)`` of ``{x : A^T x >= b}``.

    ``A`` is ``d x m`` with one constraint per column.  Columns are rescaled to
    unit norm at construction (``b`` with them); this leaves the polytope, the
    gradient, the Hessian and the factor ``A S_x^{-1}`` unchanged.  The factor
    is rectangular, so ``noise_dim = m``.
    """

    kind = "polytope_log_barrier"
    factor_name = "A S_x^{-1}"

    newton_tol = 1e-12
    newton_max_iter = 100

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        d, m = A.shape
        if b.shape != (m,):
            raise ValueError(f"b must have length {m}")
        norms = np.linalg.norm(A, axis=0)
        if np.any(norms == 0):
            raise ValueError("constraint columns must be nonzero")
        super().__init__(d, m)
        self.column_scale = norms
        self.A = A / norms
        self.b = b / norms
        self.singular_values = np.linalg.svd(self.A, compute_uv=False)
        if d > m or self.singular_values[-1] <= 1e-14 * self.singular_values[0]:
            raise SingularConstraints("constraint matrix must have rank d (need d <= m)")
        self.interior_point = self._chebyshev_center()
        self._dual_is_whole_space = bool(self._in_dual_cone(np.zeros(d)))

    def _chebyshev_center(self) -> np.ndarray:
        d, m = self.A.shape
        # maximise r subject to a_i^T x - b_i >= r, r <= 1
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A_ub = np.hstack([-self.A.T, np.ones((m, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=-self.b, bounds=[(None, None)] * d + [(None, 1.0)])
        if res.status != 0 or res.x[-1] <= 0:
            raise ValueError("polytope has empty interior")
        return res.x[:d]

    def _in_dual_cone(self, y) -> bool:
        # y = -A w for some w > 0  <=>  y in the interior of the dual domain
        d, m = self.A.shape
        c = np.zeros(m + 1)
        c[-1] = -1.0
        A_eq = np.hstack([self.A, np.zeros((d, 1))])
        A_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
        scale = 1.0 + np.linalg.norm(y)
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=-np.asarray(y) / scale,
                      bounds=[(0, None)] * m + [(None, 1.0)])
        return res.status == 0 and res.x[-1] > 1e-10

    def slack(self, x) -> np.ndarray:
        return _as_points(x, self.dim) @ self.A - self.b

    def in_domain(self, x):
        x = _as_points(x, self.dim)
        return np.all(self.slack(x) > 0, axis=-1) & np.all(np.isfinite(x), axis=-1)

    def in_dual_domain(self, y):
        y = _as_points(y, self.dim)
        finite = np.all(np.isfinite(y), axis=-1)
        if self._dual_is_whole_space:
            return finite
        flat = y.reshape(-1, self.dim)
        ok = np.array([bool(f) and self._in_dual_cone(p) for p, f in zip(flat, finite.reshape(-1))])
        return ok.reshape(y.shape[:-1])

    def value(self, x):
        return -np.sum(np.log(self.slack(self._check_primal(x))), axis=-1)

    def grad_map(self, x):
        s = self.slack(self._check_primal(x))
        return -(1.0 / s) @ self.A.T

    def hessian(self, x):
        s = self.slack(self._check_primal(x))
        C = self.A * (1.0 / s)[..., None, :]
        return C @ np.swapaxes(C, -1, -2)

    def hessian_sqrt_factor(self, x):
        s = self.slack(self._check_primal(x))
        return self.A * (1.0 / s)[..., None, :]

    def apply_factor(self, x, z):
        s = self.slack(_as_points(x, self.dim))
        return (np.asarray(z, float) / s) @ self.A.T

    def apply_dual_factor(self, y, z):
        return self.apply_factor(self.dual_grad_map(y), z)

    def dual_grad_map(self, y):
        """Invert the mirror map by damped Newton on ``phi(x) - <x, y>``."""
        y = _as_points(y, self.dim)
        shape = y.shape
        Y = y.reshape(-1, self.dim)
        if not np.all(np.isfinite(Y)):
            raise DomainViolation("non-finite dual point")
        X = np.broadcast_to(self.interior_point, Y.shape).copy()
        tol = self.newton_tol * (1.0 + np.linalg.norm(Y, axis=-1))
        active = np.ones(len(Y), dtype=bool)
        # iterates for points outside the dual cone diverge; that is reported below, not via warnings
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            for _ in range(self.newton_max_iter):
                Xa, Ya = X[active], Y[active]
                s = Xa @ self.A - self.b
                r = -(1.0 / s) @ self.A.T - Ya
                done = np.linalg.norm(r, axis=-1) <= tol[active]
                idx = np.flatnonzero(active)
                active[idx[done]] = False
                if not active.any():
                    return X.reshape(shape)
                keep = ~done
                Xa, Ya, s, r = Xa[keep], Ya[keep], s[keep], r[keep]
                C = self.A * (1.0 / s)[:, None, :]
                H = C @ np.swapaxes(C, -1, -2)
                step = -np.linalg.solve(H, r[..., None])[..., 0]
                slope = np.sum(r * step, axis=-1)
                f0 = -np.sum(np.log(s), axis=-1) - np.sum(Xa * Ya, axis=-1)
                t = np.ones(len(Xa))
                # Newton decrement below 1/4: the full step is feasible and quadratically convergent
                pending = -slope >= 0.0625
                for _ in range(60):
                    trial = Xa + t[:, None] * step
                    st = trial @ self.A - self.b
                    feas = np.all(st > 0, axis=-1)
                    ft = np.full(len(Xa), np.inf)
                    ft[feas] = -np.sum(np.log(st[feas]), axis=-1) - np.sum(trial[feas] * Ya[feas], axis=-1)
                    ok = feas & (ft <= f0 + 0.25 * t * slope + 1e-15 * np.abs(f0))
                    pending &= ~ok
                    if not pending.any():
                        break
                    t[pending] *= 0.5
                X[idx[keep]] = Xa + t[:, None] * step
        if not np.all(self.in_dual_domain(Y[active])):
            raise DomainViolation("dual point outside the dual cone of the polytope")
        raise NoConvergence("Newton inversion of the polytope barrier did not converge")

    @property
    def msc_alpha(self):
        """``1 / sigma_d^2``; a valid upper bound for the pinned factor only when ``A`` is square."""
        return float(1.0 / self.singular_values[-1] ** 2)

    def sample_interior(self, rng, n):
        pts = []
        got = 0
        while got < n:
            cand = self.interior_point + rng.uniform(-3.0, 3.0, size=(4 * n, self.dim))
            cand = cand[np.all(cand @ self.A - self.b > 1e-3, axis=-1)]
            pts.append(cand)
            got += len(cand)
        return np.concatenate(pts)[:n]

    def to_config(self):
        return {"kind": self.kind, "A": self.A.tolist(), "b": self.b.tolist()}


def _diag(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape + (v.shape[-1],))
    idx = np.arange(v.shape[-1])
    out[..., idx, idx] = v
    return out


def map_from_config(cfg: dict) -> MirrorMap:
    """Build a map from its JSON description."""
    kind = cfg.get("kind")
    if kind == "quadratic":
        return Quadratic(int(cfg["dim"]))
    if kind == "orthant_log_barrier":
        return OrthantLogBarrier(int(cfg["dim"]))
    if kind == "gbm1d":
        return Gbm1d(float(cfg["alpha"]))
    if kind == "polytope_log_barrier":
        return PolytopeLogBarrier(cfg["A"], cfg["b"])
    raise ValueError(f"unknown map kind {kind!r}")
