"""Independent closed-form oracles used to freeze expected test values.

Everything here is derived from first principles (Gaussian moments, chi-square
moments, Ito isometry) with plain numpy/stdlib math, deliberately sharing no
code with the package under test.
"""

import math
from statistics import NormalDist

import numpy as np


def normal_even_moment(power: int, var: float) -> float:
    """E Z^power for Z ~ N(0, var), even power: (power-1)!! * var^(power/2)."""
    assert power % 2 == 0
    dfact = 1
    for k in range(power - 1, 0, -2):
        dfact *= k
    return dfact * var ** (power // 2)


def gauss_expect(f, var: float, order: int = 200) -> float:
    """E f(Z), Z ~ N(0, var), by high-order Gauss-Hermite quadrature."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    return float(np.sum(w * f(z * math.sqrt(var))))


# --- drift-control benchmark: dX = a dt + dW, a ~ N(0,1) per interval --------
#
# Terminal law: X_T = (T/n) sum_i xi_i + W_T ~ N(0, T^2/n + T).

def drift_control_terminal_var(n: int, T: float = 1.0) -> float:
    return T * T / n + T


def drift_control_weak_x4(n: int, T: float = 1.0) -> float:
    """|E X_T^4 - E W_T^4| = 3 (T + T^2/n)^2 - 3 T^2."""
    return normal_even_moment(4, drift_control_terminal_var(n, T)) - normal_even_moment(4, T)


def drift_control_strong_rmse(n: int, T: float = 1.0) -> float:
    """X_T - W_T = (T/n) sum xi_i ~ N(0, T^2/n)."""
    return T / math.sqrt(n)


def drift_control_fourth_moment(n: int, T: float = 1.0) -> float:
    return normal_even_moment(4, drift_control_terminal_var(n, T))


def drift_control_interior_fourth_moment(k: int, n: int, T: float = 1.0) -> float:
    """E X_{t_k}^4 at t_k = k T / n: variance k (T/n)^2 + t_k."""
    dt = T / n
    var = k * dt * dt + k * dt
    return normal_even_moment(4, var)


def conditional_quantile_identity(n: int, T: float = 1.0, rho: float = 0.05) -> float:
    """E^W X_T = (T/n) sum xi_i ~ N(0, T^2/n); (1-rho) quantile of its modulus."""
    return NormalDist().inv_cdf(1.0 - rho / 2.0) * T / math.sqrt(n)


# --- volatility-control benchmark: dX = a dW, a ~ N(0,1) per interval --------
#
# Conditionally on xi, X_T ~ N(0, V) with V = (T/n) sum xi_i^2 ~ (T/n) chi2_n.

def vol_control_weak_x4(n: int, T: float = 1.0) -> float:
    """E X_T^4 = 3 E V^2 = 3 (T/n)^2 n(n+2); aggregated E W_T^4 = 3 T^2."""
    ev2 = (T / n) ** 2 * n * (n + 2)
    return 3.0 * ev2 - 3.0 * T * T


def vol_control_strong_rmse(n: int, T: float = 1.0) -> float:
    """E (X_T - W_T)^2 = T E (xi - 1)^2 = 2 T by Ito isometry, any n."""
    return math.sqrt(2.0 * T)


# --- estimator probes on the drift-control dynamics --------------------------

def td_quadratic_mean(n: int, T: float = 1.0) -> float:
    """E sum (dV + R) with V = x^2, r = 0: telescopes to E X_T^2 = T + T^2/n."""
    return drift_control_terminal_var(n, T)


def qv_drift_control_mean(n: int, T: float = 1.0) -> float:
    """E sum (a dt + dW)^2 = sum (dt^2 E a^2 + dt) = T^2/n + T."""
    return T * T / n + T


def qv_vol_control_mean(n: int, T: float = 1.0) -> float:
    """E sum (a dW)^2 = sum E a^2 dt = T exactly, any n."""
    return T


def lq_policy_gradient(T: float = 1.0) -> float:
    """J~(psi) = x0 + psi T (aggregated drift is psi), so dJ~/dpsi = T."""
    return T
