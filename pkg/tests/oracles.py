"""Independent closed-form oracles used by the tests.

These are written from the defining formulas and share no code with the
package.  Values marked FROZEN were evaluated once with these formulas and
pinned, so a change to either side shows up as a failure.
"""
import math

import numpy as np


# -- mirror maps ---------------------------------------------------------
def orthant_grad(x):
    return -1.0 / np.asarray(x, float)


def orthant_dual_grad(y):
    return -1.0 / np.asarray(y, float)


def orthant_bregman_1d(x, xp):
    # -log x + log x' + (x - x') / x'
    return -math.log(x) + math.log(xp) + (x - xp) / xp


def polytope_grad(A, b, x):
    A = np.asarray(A, float)
    s = A.T @ np.asarray(x, float) - np.asarray(b, float)
    return -sum(A[:, i] / s[i] for i in range(A.shape[1]))


# -- dynamics ------------------------------------------------------------
def ula_stationary_variance(c, h):
    # y' = (1 - c h) y + sqrt(2h) z  =>  v = 2h / (1 - (1 - c h)^2)
    return 2.0 * h / (1.0 - (1.0 - c * h) ** 2)


def ula_bias(c, h, d=1):
    return math.sqrt(d) * abs(math.sqrt(ula_stationary_variance(c, h)) - 1.0 / math.sqrt(c))


def gbm_second_moment_ratio(alpha, t):
    # E exp(-2(1 + alpha) t + 2 sqrt(2 alpha) W_t) with W_t ~ N(0, t)
    return math.exp(-2.0 * (1.0 + alpha) * t + 0.5 * 4.0 * 2.0 * alpha * t)


def orthant_pair_multiplier(h, lam=2.0):
    # difference obeys d' = d (1 - lam h - sqrt(2h) z); E (.)^2
    return (1.0 - lam * h) ** 2 + 2.0 * h


def orthant_deviation_ratio(t):
    # E|(D_t - D_0)|^2 / (D_0^2 t) with D_t = D_0 exp(-3t - sqrt(2) W_t)
    return (1.0 - math.exp(-2.0 * t)) / t


# -- constants -----------------------------------------------------------
def hmax_expanded(m, M, alpha):
    """The explicit minimum with 1 + 4 alpha throughout."""
    b = m - alpha
    k = 1 + 4 * alpha
    return min(1 / (M**2 + 4 * alpha), 1 / (4 * b), b / (800 * k**2),
               b**2 / (128 * (2 * M * math.sqrt(k) + 20 * M * k) ** 2))


def cmla_expanded(m, M, alpha, V, U):
    b = m - alpha
    k = 1 + 4 * alpha
    return (2 / b) * (3 * M * math.sqrt(k) * V + 28 * M * k * V
                      + math.sqrt(2) * U * (2 * M * math.sqrt(k) + 20 * M * k)) \
        + (2 / math.sqrt(b)) * (7 * k * V + 5 * math.sqrt(2) * k * U)


def gamma_orthant(E_y0_sq, lam=2.0, b=1.0, alpha=1.0):
    y_star = -b / lam
    k = 1 + 4 * alpha
    # A(y*) = |y*| and g(y*) = 0
    return 8 * k * E_y0_sq + 8 * k * y_star**2 + 16 * y_star**2


# -- self-concordance ----------------------------------------------------
def epsilon_sigma_min_sq(eps):
    """Smallest eigenvalue of A A^T for columns (1, 0), (s, eps)."""
    s = math.sqrt(1 - eps**2)
    G = np.array([[1 + s * s, s * eps], [s * eps, eps * eps]])
    return float(np.linalg.eigvalsh(G)[0])


# FROZEN reference values
FROZEN = {
    "ula_bias_h0.1": 0.025978352085154,
    "gbm_ratio_a0.5_t1": 0.36787944117144233,
    "orthant_hmax": 1.7894892382538917e-07,
    "orthant_D1": 8.94427190999916,
    "eps0.2_bound": 49.49489742783178,
    "eps0.4_bound": 11.978219618694798,
    "eps0.1_bound": 199.4987437106621,
    "orthant_gamma_E1": 54.0,
}
