"""Log-log order fits of error estimates against step size."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, t as student_t

from ..errors import DegenerateGrid

__all__ = ["OrderFit", "fit_order", "RESOLUTION_LIMIT"]

# fits are refused when any half-width exceeds this fraction of its estimate
RESOLUTION_LIMIT = 0.3


@dataclass(frozen=True)
class OrderFit:
    h_grid: tuple
    errors: tuple
    half_widths: tuple
    slope: float
    slope_ci: tuple
    intercept: float
    resolved: bool = True

    def to_dict(self) -> dict:
        return {
            "h_grid": list(self.h_grid),
            "errors": list(self.errors),
            "half_widths": list(self.half_widths),
            "slope": self.slope,
            "slope_ci": list(self.slope_ci),
            "intercept": self.intercept,
            "resolved": self.resolved,
        }


def fit_order(h_grid, errors, half_widths=None, level: float = 0.95) -> OrderFit:
    """Least-squares fit of ``log error = intercept + slope * log h``.

    With ``half_widths`` (MC half-widths at ``level``) each point is weighted
    by the inverse variance of its log error, and the covariance is inflated
    by the reduced chi-square when the scatter exceeds the stated noise.
    Without them this is plain OLS with a Student-t interval.
    ``resolved`` is False when some half-width exceeds 30% of its estimate;
    callers should then not trust the slope.
    """
    h = np.asarray(h_grid, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.ndim != 1 or h.shape != e.shape:
        raise DegenerateGrid("h_grid and errors must be matched 1-D sequences")
    if len(h) < 4:
        raise DegenerateGrid("need at least 4 grid points")
    if not np.all(np.diff(h) < 0) or not np.all(h > 0):
        raise DegenerateGrid("h_grid must be positive and strictly decreasing")
    if not np.all(e > 0) or not np.all(np.isfinite(e)):
        raise DegenerateGrid("errors must be positive and finite")
    n = len(h)
    X = np.column_stack([np.ones(n), np.log(h)])
    ly = np.log(e)
    if half_widths is not None:
        hw = np.asarray(half_widths, dtype=float)
        z = norm.ppf(0.5 + level / 2)
        sd = np.maximum(hw / z / e, 1e-300)
        w = 1.0 / sd**2
        resolved = bool(np.all(hw <= RESOLUTION_LIMIT * e))
    else:
        hw = np.full(n, np.nan)
        w = np.ones(n)
        resolved = True
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    coef = cov @ (XtW @ ly)
    resid = ly - X @ coef
    chi2 = float(np.sum(w * resid**2)) / (n - 2)
    if half_widths is None:
        cov = cov * chi2
    else:
        cov = cov * max(1.0, chi2)
    q = student_t.ppf(0.5 + level / 2, n - 2)
    se = math.sqrt(max(cov[1, 1], 0.0))
    slope = float(coef[1])
    return OrderFit(tuple(h.tolist()), tuple(e.tolist()), tuple(hw.tolist()), slope,
                    (slope - q * se, slope + q * se), float(coef[0]), resolved)
