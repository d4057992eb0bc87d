"""Independent oracles: closed-form extremals, hand algebra and high-precision differences.

Nothing here imports the package; every value is computed from first principles.
"""

import math

import mpmath
import numpy as np

# quadratic problem, x(0)=0, x(1)=1: x = t, psi = 2, u = 1, cost 1
def quadratic_closed(t):
    t = np.asarray(t, dtype=float)
    return t, np.full_like(t, 2.0), np.ones_like(t)


# L = u^2, xdot = u x: u = psi x / 2 and C = psi x is constant, so u = C/2,
# x = x0 exp(C t / 2), psi = C / x
def multiplicative_closed(t, x0=1.0, psi0_a=2.0):
    C = psi0_a * x0
    x = x0 * np.exp(C * np.asarray(t) / 2)
    return x, C / x, np.full_like(x, C / 2)


# L = u^2 + x^2, xdot = u: x'' = x, so x = A sinh t + B cosh t and psi = 2 x'
def harmonic_closed(t, x0, psi_a):
    t = np.asarray(t, dtype=float)
    B, A = x0, psi_a / 2
    x = A * np.sinh(t) + B * np.cosh(t)
    dx = A * np.cosh(t) + B * np.sinh(t)
    return x, 2 * dx, dx


def central_difference(f, point, var, h=1e-6, dps=40):
    """Centred difference of f in ``var`` at ``point`` using mpmath at ``dps`` digits."""
    with mpmath.workdps(dps):
        hi = dict(point)
        lo = dict(point)
        hi[var] = mpmath.mpf(point[var]) + mpmath.mpf(h)
        lo[var] = mpmath.mpf(point[var]) - mpmath.mpf(h)
        return float((f(hi) - f(lo)) / (2 * mpmath.mpf(h)))


def five_point_derivative(values, h):
    """Fourth-order centred first derivative on interior nodes 2..N-2."""
    v = np.asarray(values, dtype=float)
    return (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)


E = math.e
