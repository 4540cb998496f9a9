"""Target potentials ``f`` and their dual-space drift ``g = grad f o grad phi*``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import root

from .errors import DomainViolation, NoConvergence, Unsupported
from .mirror_maps import MirrorMap, OrthantLogBarrier, Quadratic, _as_points
from .rng import stream

__all__ = ["Potential", "RelativeAffine", "QuadraticGaussian", "DualTarget", "potential_from_config"]


class Potential:
    kind: str = ""

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_f(self, x) -> np.ndarray:
        raise NotImplementedError

    def dual_drift(self, mirror: MirrorMap, y) -> np.ndarray:
        """``g(y) = grad f(grad phi*(y))``."""
        return self.grad_f(mirror.dual_grad_map(y))

    def relative_constants(self, mirror: MirrorMap) -> tuple[float, float]:
        """Exact ``(m, M)``: relative strong convexity and smoothness."""
        raise NotImplementedError

    def minimizer_dual(self, mirror: MirrorMap) -> np.ndarray:
        """``y* = grad phi(argmin f)``, the zero of the dual drift."""
        y0 = mirror.grad_map(getattr(mirror, "interior_point", np.ones(mirror.dim)))
        sol = root(lambda y: self.dual_drift(mirror, y), y0, tol=1e-14)
        if not sol.success or np.linalg.norm(self.dual_drift(mirror, sol.x)) > 1e-10:
            raise NoConvergence("root finding on the dual drift failed")
        return sol.x

    def to_config(self) -> dict:
        raise NotImplementedError


class RelativeAffine(Potential):
    """``f = lam * phi + <b, x>`` for a bound mirror map.

    The dual drift is exactly ``lam * y + b``, so ``m = M = lam``, the dual
    minimiser is ``-b / lam`` and ``hess f = lam * hess phi``.  On the orthant
    barrier the target is a product of ``Gamma(lam + 1, rate=b_i)`` laws,
    which requires ``b > 0``.
    """

    kind = "relative_affine"

    def __init__(self, mirror: MirrorMap, lam: float, b=None):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.mirror = mirror
        self.lam = float(lam)
        b = np.zeros(mirror.dim) if b is None else np.broadcast_to(np.asarray(b, float), (mirror.dim,)).copy()
        if isinstance(mirror, OrthantLogBarrier) and not np.all(b > 0):
            raise ValueError("b must be strictly positive on the orthant barrier for a normalisable target")
        self.b = b

    @property
    def rel_m(self):
        return self.lam

    @property
    def rel_M(self):
        return self.lam

    def value(self, x):
        x = _as_points(x, self.mirror.dim)
        return self.lam * self.mirror.value(x) + x @ self.b

    def grad_f(self, x):
        return self.lam * self.mirror.grad_map(x) + self.b

    def hessian_f(self, x):
        return self.lam * self.mirror.hessian(x)

    def dual_drift(self, mirror, y):
        if mirror is not self.mirror:
            raise ValueError("potential is bound to a different mirror map")
        y = mirror._check_dual(y)
        return self.lam * y + self.b

    def relative_constants(self, mirror):
        return self.lam, self.lam

    def minimizer_dual(self, mirror):
        y = -self.b / self.lam
        if not mirror.in_dual_domain(y):
            raise DomainViolation("minimiser lies outside the dual domain")
        return y

    def to_config(self):
        return {"kind": self.kind, "lambda": self.lam, "b": self.b.tolist()}


class QuadraticGaussian(Potential):
    """``f = c |x|^2 / 2``.  Relative constants are only defined against the quadratic map."""

    kind = "quadratic_gaussian"

    def __init__(self, c: float, dim: int = 1):
        if not c > 0:
            raise ValueError("c must be positive")
        self.c = float(c)
        self.dim = int(dim)

    def value(self, x):
        x = _as_points(x, self.dim)
        return 0.5 * self.c * np.sum(x * x, axis=-1)

    def grad_f(self, x):
        return self.c * _as_points(x, self.dim)

    def dual_drift(self, mirror, y):
        if isinstance(mirror, Quadratic):
            return self.c * mirror._check_dual(y)
        return super().dual_drift(mirror, y)

    def relative_constants(self, mirror):
        if not isinstance(mirror, Quadratic):
            raise Unsupported("relative constants of a Gaussian are only exact for the quadratic map")
        return self.c, self.c

    def minimizer_dual(self, mirror):
        if isinstance(mirror, Quadratic):
            return np.zeros(self.dim)
        return super().minimizer_dual(mirror)

    def to_config(self):
        return {"kind": self.kind, "c": self.c}


def potential_from_config(cfg: dict, mirror: MirrorMap) -> Potential:
    kind = cfg.get("kind")
    if kind == "relative_affine":
        return RelativeAffine(mirror, float(cfg["lambda"]), cfg.get("b"))
    if kind == "quadratic_gaussian":
        return QuadraticGaussian(float(cfg["c"]), mirror.dim)
    raise ValueError(f"unknown potential kind {kind!r}")


@dataclass(frozen=True)
class DualTarget:
    """The pushforward target ``(grad phi)_# nu`` on the dual space."""

    mirror: MirrorMap
    potential: Potential

    @property
    def exact_sampler_available(self) -> bool:
        if isinstance(self.potential, RelativeAffine) and isinstance(self.mirror, OrthantLogBarrier):
            return self.potential.mirror is self.mirror
        return isinstance(self.potential, QuadraticGaussian) and isinstance(self.mirror, Quadratic)

    def dual_log_density(self, y) -> np.ndarray:
        """Unnormalised ``-f~(y) = -f(grad phi*(y)) + log det hess phi*(y)``."""
        y = self.mirror._check_dual(y)
        x = self.mirror.dual_grad_map(y)
        _, logdet = np.linalg.slogdet(self.mirror.dual_hessian(y))
        return -self.potential.value(x) + logdet

    def exact_dual_samples(self, n: int, seed: int):
        """``n`` independent exact draws from the dual target."""
        from .engine import SampleSet

        if not self.exact_sampler_available:
            raise Unsupported(f"no closed-form sampler for {self.potential.kind} on {self.mirror.kind}")
        rng = stream(seed, "exact-dual")
        d = self.mirror.dim
        if isinstance(self.potential, QuadraticGaussian):
            pts = rng.standard_normal((n, d)) / np.sqrt(self.potential.c)
        else:
            x = rng.gamma(self.potential.lam + 1.0, 1.0, size=(n, d)) / self.potential.b
            pts = -1.0 / x
        return SampleSet(pts, "dual", {"seed": seed, "source": "exact", "n": n})

    def second_moment(self) -> float:
        """``E ||Y||^2`` under the dual target, in closed form."""
        if isinstance(self.potential, QuadraticGaussian) and isinstance(self.mirror, Quadratic):
            return self.mirror.dim / self.potential.c
        if self.exact_sampler_available:
            # y = -1/x with x ~ Gamma(k, rate b): E[x^-2] = b^2 / ((k-1)(k-2))
            k = self.potential.lam + 1.0
            if k <= 2:
                return float("inf")
            return float(np.sum(self.potential.b**2) / ((k - 1.0) * (k - 2.0)))
        raise Unsupported("no closed-form second moment for this target")
