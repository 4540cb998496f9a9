"""Initial laws for dual starting points."""
from __future__ import annotations

import numpy as np

__all__ = ["PointLaw", "GaussianLaw", "law_from_config"]


class PointLaw:
    """Point mass at ``y0``."""

    def __init__(self, y0):
        self.y0 = np.atleast_1d(np.asarray(y0, dtype=float))

    @property
    def dim(self):
        return len(self.y0)

    def sample(self, mirror, rng, n):
        if not mirror.in_dual_domain(self.y0):
            raise ValueError("point law lies outside the dual domain")
        return np.broadcast_to(self.y0, (n, len(self.y0))).copy()

    def to_config(self):
        return {"kind": "point", "y0": self.y0.tolist()}


class GaussianLaw:
    """``N(mean, std^2 I)`` restricted to the dual domain by rejection."""

    def __init__(self, mean, std):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        if not std > 0:
            raise ValueError("std must be positive")
        self.std = float(std)

    @property
    def dim(self):
        return len(self.mean)

    def sample(self, mirror, rng, n):
        out = np.empty((n, len(self.mean)))
        got = 0
        for _ in range(1000):
            cand = self.mean + self.std * rng.standard_normal((n, len(self.mean)))
            cand = cand[mirror.in_dual_domain(cand)][: n - got]
            out[got:got + len(cand)] = cand
            got += len(cand)
            if got == n:
                return out
        raise ValueError("Gaussian law has negligible mass on the dual domain")

    def to_config(self):
        return {"kind": "gaussian", "mean": self.mean.tolist(), "std": self.std}


def law_from_config(cfg, dim: int | None = None):
    """Accept ``{"kind": "point", "y0": ...}``, ``{"kind": "gaussian", ...}`` or a bare point."""
    if not isinstance(cfg, dict):
        return PointLaw(cfg)
    kind = cfg.get("kind")
    if kind == "point":
        return PointLaw(cfg["y0"])
    if kind == "gaussian":
        return GaussianLaw(cfg["mean"], float(cfg["std"]))
    raise ValueError(f"unknown law kind {kind!r}")
