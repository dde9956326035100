"""Independent brute-force oracles used by the test suite.

These deliberately avoid the library's own quadrature and summation code:
plain midpoint Riemann sums and direct formula evaluation only.
"""
import numpy as np


def riemann_mollify(f, n, t, x, npts=1_000_000):
    """Midpoint Riemann sum for cutoff_n(x) * int f(t, x - y) (1-y^2)^n / c_n dy."""
    h = 2.0 / npts
    y = -1.0 + (np.arange(npts) + 0.5) * h
    c_n = riemann_mass(n, npts)
    dens = (1.0 - y * y) ** n / c_n
    vals = np.asarray(f(t, x - y), dtype=float)
    phi = plateau(n, x)
    return phi * float(np.sum(vals * dens) * h)


def riemann_mass(n, npts=1_000_000):
    h = 2.0 / npts
    y = -1.0 + (np.arange(npts) + 0.5) * h
    return float(np.sum((1.0 - y * y) ** n) * h)


def plateau(n, x):
    ax = abs(float(x))
    if ax <= n:
        return 1.0
    if ax >= n + 1:
        return 0.0
    u = ax - n
    return 1.0 - (6.0 * u ** 5 - 15.0 * u ** 4 + 10.0 * u ** 3)
