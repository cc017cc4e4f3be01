"""Covariance machinery for fractional Brownian motion with H > 1/2.

Unit-variance convention: ``E beta(t)^2 = t^{2H}``, which requires the factor
``alpha_H = H (2H - 1)`` in front of every double integral against
``|x - y|^{2H-2}``.  The Fourier-side constant is ``alpha_H * c_H`` so that both
engines target the same number.  ``FbmConvention(unit_variance=False)`` drops
the factor from both sides.

All covariances are computed by adaptive quadrature (QUADPACK through
``scipy.integrate.quad``).  Weakly singular factors ``|u|^{2H-2}`` are
integrated with algebraic-endpoint weights (QAWS), oscillatory Fourier tails
with the cosine-weighted rule (QAWF).

Notation: ``lam = l (l + 1)`` is the decay rate of mode ``l``;
``g(t, x) = exp(-lam (t - x)) 1_[0, t](x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError

# exp(-lam t) below this is treated as exactly zero (relative to O(1) terms)
NEGLIGIBLE = 1e-17
_SATURATED = -math.log(NEGLIGIBLE)
# below this value of lam * min(t, s) the lag decomposition cancels badly
_DECOMP_MIN = 0.5


@dataclass(frozen=True)
class FbmConvention:
    hurst: float
    unit_variance: bool = True

    def __post_init__(self):
        H = float(self.hurst)
        if not (0.5 < H < 1.0):
            raise DomainError(f"Hurst index must lie in (1/2, 1), got {H}")
        object.__setattr__(self, "hurst", H)

    @property
    def alpha_h(self) -> float:
        return self.hurst * (2.0 * self.hurst - 1.0)

    @property
    def c_h(self) -> float:
        H = self.hurst
        return math.gamma(H - 0.5) / (2.0 ** (2.0 - 2.0 * H) * math.sqrt(math.pi) * math.gamma(1.0 - H))

    @property
    def kernel_factor(self) -> float:
        """Prefactor of the time-domain double integral."""
        return self.alpha_h if self.unit_variance else 1.0

    @property
    def fourier_factor(self) -> float:
        """Prefactor of the spectral integral against ``|tau|^{1-2H}``."""
        return self.kernel_factor * self.c_h


@dataclass(frozen=True)
class ExpKernelSpec:
    decay_rate: float
    upper_time: float

    def __post_init__(self):
        if self.decay_rate < 0:
            raise DomainError("decay_rate must be nonnegative")
        if self.upper_time < 0:
            raise DomainError("upper_time must be nonnegative")

    @classmethod
    def for_degree(cls, l: int, t: float) -> "ExpKernelSpec":
        return cls(float(l * (l + 1)), float(t))


@dataclass(frozen=True)
class QuadratureConfig:
    epsabs: float = 1e-300
    epsrel: float = 1e-10
    limit: int = 200
    # accept a QUADPACK warning if the error estimate is within this factor of the target
    slack: float = 10.0

    def __post_init__(self):
        if not (self.epsabs > 0 and self.epsrel > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.limit < 1:
            raise DomainError("limit must be positive")


DEFAULT_QUAD = QuadratureConfig()


def _quad(f, a, b, cfg: QuadratureConfig, epsabs=None, **kw) -> float:
    eabs = cfg.epsabs if epsabs is None else epsabs
    res = integrate.quad(f, a, b, epsabs=eabs, epsrel=cfg.epsrel, limit=cfg.limit, full_output=1, **kw)
    val, err = res[0], res[1]
    if len(res) > 3:
        target = max(eabs, cfg.epsrel * abs(val))
        if not np.isfinite(val) or err > cfg.slack * target:
            raise QuadratureError(
                f"quadrature on [{a}, {b}] reached {err:.3g} (target {target:.3g}): {res[3]}",
                achieved=err,
                requested=target,
            )
    return val


def _qawf(f, a, omega, cfg: QuadratureConfig, epsabs: float) -> float:
    # cosine-weighted Fourier integral over [a, inf); QAWF honours epsabs only
    res = integrate.quad(f, a, np.inf, weight="cos", wvar=omega, epsabs=epsabs, limlst=200, limit=cfg.limit, full_output=1)
    val, err = res[0], res[1]
    if len(res) > 3 and err > cfg.slack * epsabs:
        raise QuadratureError(f"Fourier tail reached {err:.3g} (target {epsabs:.3g})", achieved=err, requested=epsabs)
    return val


def _check_time(*ts):
    for t in ts:
        if t < 0:
            raise DomainError(f"times must be nonnegative, got {t}")


def r_cov(t: float, s: float, conv: FbmConvention):
    """fBm covariance ``(t^{2H} + s^{2H} - |t - s|^{2H}) / 2``."""
    t = np.asarray(t, float)
    s = np.asarray(s, float)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("times must be nonnegative")
    h2 = 2.0 * conv.hurst
    val = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(val) if val.ndim == 0 else val


def weighted_inner(a: ExpKernelSpec, b: ExpKernelSpec, conv: FbmConvention, quad: QuadratureConfig | None = None) -> float:
    """``kappa * int int g_a(x) g_b(y) |x - y|^{2H-2} dx dy``.

    The inner variable is eliminated exactly with ``u = x - y``, leaving a 1D
    integral over ``u in [-tb, ta]`` whose only singularity is ``|u|^{2H-2}``
    at ``u = 0``; panels touching 0 carry it as an algebraic QAWS weight.
    """
    cfg = quad or DEFAULT_QUAD
    la, ta = a.decay_rate, a.upper_time
    lb, tb = b.decay_rate, b.upper_time
    if ta == 0.0 or tb == 0.0:
        return 0.0
    mu = la + lb
    p = 2.0 * conv.hurst - 2.0

    def smooth(u):
        ylo = max(0.0, -u)
        yhi = min(tb, ta - u)
        w = yhi - ylo
        if w <= 0.0:
            return 0.0
        e = la * (u + yhi - ta) + lb * (yhi - tb)
        h = w if mu * w < 1e-12 else -math.expm1(-mu * w) / mu
        return math.exp(e) * h

    d = ta - tb
    cuts = sorted({-tb, 0.0, d, ta})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        if hi == 0.0:
            total += _quad(smooth, lo, hi, cfg, weight="alg", wvar=(0.0, p))
        elif lo == 0.0:
            total += _quad(smooth, lo, hi, cfg, weight="alg", wvar=(p, 0.0))
        else:
            total += _quad(lambda u: abs(u) ** p * smooth(u), lo, hi, cfg)
    return conv.kernel_factor * total


def c33(conv: FbmConvention) -> float:
    """``int_R |tau|^{1-2H} / (1 + tau^2) d tau = pi / sin(pi H)``."""
    H = conv.hurst
    if H < 0.5 + 1e-3:
        raise DomainError("c33 is only evaluated for H >= 0.501")
    return math.pi / math.sin(math.pi * H)


def stationary_variance(l: int, conv: FbmConvention) -> float:
    """Saturated ``lim_{t->inf} sigma_l^2(t) = kappa c_H c33 lam^{-2H}`` for ``l >= 1``."""
    if l < 1:
        raise DomainError("no stationary limit for l = 0")
    lam = l * (l + 1.0)
    return conv.fourier_factor * c33(conv) * lam ** (-2.0 * conv.hurst)


def lag_kernel(l: int, r, conv: FbmConvention, quad: QuadratureConfig | None = None):
    """Stationary mode covariance ``psi_l(r)``.

    ``psi_l(r) = kappa int_{-inf}^{t} int_{-inf}^{s} e^{-lam(t-x)} e^{-lam(s-y)} |x-y|^{2H-2}``
    with ``r = t - s``; reduces to ``kappa / (2 lam) int |u|^{2H-2} e^{-lam |u - r|} du``.
    """
    cfg = quad or DEFAULT_QUAD
    if l < 1:
        raise DomainError("lag_kernel needs l >= 1")
    lam = l * (l + 1.0)
    a = 2.0 * conv.hurst - 1.0
    ga = math.gamma(a) * lam ** (-a)

    def one(r):
        r = abs(float(r))
        if r == 0.0:
            return 2.0 * ga
        left = math.exp(-lam * r) * ga
        mid = _quad(lambda u: math.exp(-lam * (r - u)), 0.0, r, cfg, weight="alg", wvar=(a - 1.0, 0.0))
        right = _quad(lambda w: (r + w / lam) ** (a - 1.0) * math.exp(-w), 0.0, np.inf, cfg) / lam
        return left + mid + right

    scale = conv.kernel_factor / (2.0 * lam)
    arr = np.asarray(r, float)
    if arr.ndim == 0:
        return scale * one(arr)
    return scale * np.array([one(v) for v in arr.ravel()]).reshape(arr.shape)


def sigma_l_sq(l: int, t: float, conv: FbmConvention, quad: QuadratureConfig | None = None, method: str = "auto") -> float:
    """``sigma_l^2(t) = kappa int int g_l(t, x) g_l(t, y) |x - y|^{2H-2}``.

    ``method='quadrature'`` always integrates; ``'auto'`` returns the
    stationary limit once ``exp(-lam t)`` is below double-precision relevance.
    """
    if t <= 0:
        raise DomainError("sigma_l_sq needs t > 0")
    if method not in ("auto", "quadrature"):
        raise DomainError(f"unknown method {method!r}")
    if l == 0:
        return conv.kernel_factor / conv.alpha_h * t ** (2.0 * conv.hurst)
    lam = l * (l + 1.0)
    if method == "auto" and lam * t > _SATURATED:
        return stationary_variance(l, conv)
    spec = ExpKernelSpec(lam, float(t))
    return weighted_inner(spec, spec, conv, quad)


def sigma_l_sq_fourier(l: int, t: float, conv: FbmConvention, quad: QuadratureConfig | None = None) -> float:
    """Fourier-side ``sigma_l^2(t)``.

    ``kappa c_H * 2 int_0^inf (1 - 2 e^{-lam t} cos(t tau) + e^{-2 lam t}) tau^{1-2H} / (lam^2 + tau^2) d tau``,
    i.e. ``|g_hat|^2`` written out.  The non-oscillatory part uses an
    algebraic weight on ``[0, lam]`` and a plain semi-infinite rule beyond;
    the cosine part uses the algebraic weight up to one period and QAWF on
    the tail, so no truncation of the frequency axis is needed.
    """
    cfg = quad or DEFAULT_QUAD
    if l < 1:
        raise DomainError("Fourier engine is undefined for l = 0; use sigma_l_sq")
    if t <= 0:
        raise DomainError("sigma_l_sq_fourier needs t > 0")
    lam = l * (l + 1.0)
    b = 1.0 - 2.0 * conv.hurst

    def lor(tau):
        return 1.0 / (lam * lam + tau * tau)

    base = _quad(lor, 0.0, lam, cfg, weight="alg", wvar=(b, 0.0))
    base += _quad(lambda tau: tau**b * lor(tau), lam, np.inf, cfg)
    decay = math.exp(-lam * t)
    total = (1.0 + decay * decay) * base
    if decay > NEGLIGIBLE:
        tau1 = 2.0 * math.pi / t
        osc = _quad(lambda tau: math.cos(t * tau) * lor(tau), 0.0, tau1, cfg, weight="alg", wvar=(b, 0.0))
        osc += _qawf(lambda tau: tau**b * lor(tau), tau1, t, cfg, epsabs=max(cfg.epsrel * base, cfg.epsabs))
        total -= 2.0 * decay * osc
    return conv.fourier_factor * 2.0 * total


def u_cov(l: int, t: float, s: float, C: float, D: float, conv: FbmConvention, quad: QuadratureConfig | None = None) -> float:
    """Mode covariance ``U_l(t, s) = D e^{-lam (t+s)} + C K_l(t, s)``.

    ``K_l`` is the weighted inner product of ``g_l(t, .)`` and ``g_l(s, .)``;
    for ``l = 0`` it is the fBm covariance itself.
    """
    _check_time(t, s)
    if C < 0 or D < 0:
        raise DomainError("C and D must be nonnegative")
    lam = l * (l + 1.0)
    t, s = (float(t), float(s)) if t >= s else (float(s), float(t))
    out = D * math.exp(-lam * (t + s))
    if C == 0.0 or s == 0.0:
        return out
    if l == 0:
        k = conv.kernel_factor / conv.alpha_h * r_cov(t, s, conv)
    else:
        k = weighted_inner(ExpKernelSpec(lam, t), ExpKernelSpec(lam, s), conv, quad)
    return out + C * k


def noise_kernel_matrix(l: int, times, conv: FbmConvention, quad: QuadratureConfig | None = None) -> np.ndarray:
    """Matrix ``[K_l(t_i, t_j)]`` (the ``C = 1, D = 0`` mode covariance).

    When ``lam * min(t > 0)`` is large enough the lag identity
    ``K(t,s) = psi(t-s) - e^{-lam t} psi(s) - e^{-lam s} psi(t) + e^{-lam(t+s)} psi(0)``
    reduces the work to one quadrature per distinct lag and per distinct
    time; otherwise each entry is integrated directly.
    """
    times = np.asarray(times, float)
    _check_time(*times)
    n = times.size
    K = np.zeros((n, n))
    if l == 0:
        K = conv.kernel_factor / conv.alpha_h * r_cov(times[:, None], times[None, :], conv)
        return np.asarray(K, float).reshape(n, n)
    lam = l * (l + 1.0)
    pos = times > 0
    if not np.any(pos):
        return K
    tp = times[pos]
    if lam * tp.min() >= _DECOMP_MIN:
        lags = np.abs(tp[:, None] - tp[None, :])
        ulag, inv = np.unique(lags, return_inverse=True)
        psi_lag = lag_kernel(l, ulag, conv, quad)[inv].reshape(lags.shape)
        e = np.exp(-lam * tp)
        if e.max() > NEGLIGIBLE:
            utp, tinv = np.unique(tp, return_inverse=True)
            psi_t = lag_kernel(l, utp, conv, quad)[tinv]
            psi0 = lag_kernel(l, 0.0, conv, quad)
            sub = psi_lag - np.outer(e, psi_t) - np.outer(psi_t, e) + psi0 * np.outer(e, e)
        else:
            sub = psi_lag
        idx = np.flatnonzero(pos)
        K[np.ix_(idx, idx)] = sub
        return K
    for i in range(n):
        for j in range(i, n):
            if times[i] > 0 and times[j] > 0:
                K[i, j] = K[j, i] = u_cov(l, times[i], times[j], 1.0, 0.0, conv, quad)
    return K


@dataclass(frozen=True)
class SpectralSum:
    """Stationary kernel of a weighted family of modes.

    ``Gamma(r) = sum_l w_l psi_l(r)``; evaluated on the Fourier side through
    ``S(tau) = sum_l w_l / (lam_l^2 + tau^2)``, one quadrature per lag
    regardless of how many modes are summed.
    """

    degrees: np.ndarray
    weights: np.ndarray
    conv: FbmConvention
    quad: QuadratureConfig = field(default=DEFAULT_QUAD)

    def __post_init__(self):
        d = np.asarray(self.degrees, int)
        w = np.asarray(self.weights, float)
        if d.shape != w.shape or np.any(d < 1):
            raise DomainError("SpectralSum needs matching degrees >= 1 and weights")
        object.__setattr__(self, "degrees", d)
        object.__setattr__(self, "weights", w)

    def _density(self, tau):
        lam = self.degrees * (self.degrees + 1.0)
        return float(np.sum(self.weights / (lam * lam + tau * tau)))

    def variance(self) -> float:
        """``Gamma(0)``."""
        lam = self.degrees * (self.degrees + 1.0)
        return self.conv.fourier_factor * c33(self.conv) * float(np.sum(self.weights * lam ** (-2.0 * self.conv.hurst)))

    def increment(self, r: float) -> float:
        """``Gamma(0) - Gamma(r) = kappa c_H 2 int_0^inf (1 - cos r tau) tau^{1-2H} S(tau) d tau``."""
        r = abs(float(r))
        if r == 0.0 or self.degrees.size == 0:
            return 0.0
        cfg = self.quad
        b = 1.0 - 2.0 * self.conv.hurst
        S = self._density
        tau1 = 2.0 * math.pi / r
        lam = self.degrees * (self.degrees + 1.0)
        knots = np.sort(lam[(lam > 0) & (lam < tau1)])
        pts = np.unique(np.geomspace(knots[0], knots[-1], 12)) if knots.size else None
        head = _quad(lambda x: (1.0 - math.cos(r * x)) * x**b * S(x), 0.0, tau1, cfg, points=pts)
        flat = _quad(lambda x: x**b * S(x), tau1, np.inf, cfg)
        osc = _qawf(lambda x: x**b * S(x), tau1, r, cfg, epsabs=max(cfg.epsrel * (head + flat), cfg.epsabs))
        return self.conv.fourier_factor * 2.0 * (head + flat - osc)

    def covariance(self, r: float) -> float:
        return self.variance() - self.increment(r)
