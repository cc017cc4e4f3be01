"""Independent brute-force references used by the tests."""

import math

import numpy as np
from scipy import integrate


def cell_kernel(a, h, b, k, p):
    """Exact integral of ``|u - v|^p`` over each cell ``[a_i, a_i + h] x [b_j, b_j + k]``.

    With ``G(z) = |z|^{p+2} / ((p+1)(p+2))`` one has ``G'' = |z|^p``, so the
    cell integral is a second difference of ``G``.
    """
    G = lambda z: np.abs(z) ** (p + 2.0) / ((p + 1.0) * (p + 2.0))  # noqa: E731
    d = a[:, None] - b[None, :]
    return G(d + h) - G(d) - G(d + h - k) + G(d - k)


def mode_covariance_grid(l, t, s, hurst, C=1.0, D=0.0, n=2000, extrapolate=True):
    """``D e^{-lam(t+s)} + C H(2H-1) int_0^t int_0^s e^{-lam(t-u)} e^{-lam(s-v)} |u-v|^{2H-2}``.

    Midpoint rule on an ``n x n`` grid: exponentials at cell midpoints, the
    weakly singular kernel integrated exactly per cell.  The rule is second
    order in the cell width, so by default the ``n`` and ``n / 2`` results are
    Richardson-combined.
    """
    if extrapolate:
        fine = mode_covariance_grid(l, t, s, hurst, C, D, n, False)
        coarse = mode_covariance_grid(l, t, s, hurst, C, D, n // 2, False)
        return (4 * fine - coarse) / 3
    lam = l * (l + 1.0)
    h, k = t / n, s / n
    a, b = h * np.arange(n), k * np.arange(n)
    K = cell_kernel(a, h, b, k, 2 * hurst - 2)
    fu = np.exp(-lam * (t - (a + h / 2)))
    fv = np.exp(-lam * (s - (b + k / 2)))
    return C * hurst * (2 * hurst - 1) * float(fu @ K @ fv) + D * math.exp(-lam * (t + s))


def lag_kernel_direct(l, r, hurst):
    """``psi_l(r) = kappa / (2 lam) int |u|^{2H-2} e^{-lam |u - r|} du`` by plain adaptive quadrature."""
    lam = l * (l + 1.0)
    p = 2 * hurst - 2
    f = lambda u: abs(u) ** p * math.exp(-lam * abs(u - r))  # noqa: E731
    parts = [
        integrate.quad(f, -np.inf, 0, epsabs=0, epsrel=1e-12, limit=200)[0],
        integrate.quad(f, r, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0],
    ]
    if r > 0:
        # the alg weight carries |u|^p on [0, r]
        parts.append(integrate.quad(lambda u: math.exp(-lam * (r - u)), 0, r, weight="alg", wvar=(p, 0),
                                    epsabs=0, epsrel=1e-12)[0])
    return hurst * (2 * hurst - 1) / (2 * lam) * sum(parts)


def spectral_weight_integral(lam, hurst):
    """``int_R |tau|^{1-2H} / (lam^2 + tau^2) d tau``."""
    b = 1 - 2 * hurst
    f = lambda x: x**b / (lam * lam + x * x)  # noqa: E731
    head = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-13, limit=200)[0]
    tail = integrate.quad(f, 1, np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    return 2 * (head + tail)
