"""Special functions on the unit sphere.

Conventions: colatitude ``theta`` in [0, pi], longitude ``phi`` in [0, 2 pi),
complex orthonormal harmonics with the Condon-Shortley phase, so that
``Y_{l,-m} = (-1)^m conj(Y_{lm})`` and ``sum_m |Y_lm|^2 = (2l+1)/(4 pi)``.

Harmonic tables store only ``m >= 0``; the flat index of ``(l, m)`` is
``l (l + 1) / 2 + m`` (see :func:`mode_index`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * math.pi
_LOG_RESCALE = 1e200


@dataclass(frozen=True)
class SphericalPoint:
    colatitude: float
    longitude: float

    def __post_init__(self):
        theta = float(self.colatitude)
        phi = float(self.longitude)
        if not (0.0 <= theta <= math.pi):
            raise DomainError(f"colatitude {theta} outside [0, pi]")
        object.__setattr__(self, "colatitude", theta)
        object.__setattr__(self, "longitude", phi % TWO_PI)

    @property
    def unit_vector(self) -> np.ndarray:
        return unit_vectors(self.colatitude, self.longitude)

    @classmethod
    def from_vector(cls, v) -> "SphericalPoint":
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        theta = math.acos(min(1.0, max(-1.0, v[2])))
        phi = math.atan2(v[1], v[0]) % TWO_PI
        return cls(theta, phi)


@dataclass(frozen=True)
class HarmonicIndex:
    degree: int
    order: int

    def __post_init__(self):
        if self.degree < 0 or abs(self.order) > self.degree:
            raise DomainError(f"invalid harmonic index (l={self.degree}, m={self.order})")


def unit_vectors(theta, phi) -> np.ndarray:
    """Cartesian unit vectors, shape ``broadcast(theta, phi).shape + (3,)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)), axis=-1)


def n_modes(L: int) -> int:
    """Number of (l, m >= 0) pairs with l <= L."""
    return (L + 1) * (L + 2) // 2


def mode_index(l, m):
    return l * (l + 1) // 2 + m


def mode_degrees(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Degree and order arrays in flat-table order for ``l <= L, 0 <= m <= l``."""
    ls = np.repeat(np.arange(L + 1), np.arange(1, L + 2))
    ms = np.concatenate([np.arange(l + 1) for l in range(L + 1)])
    return ls, ms


def legendre_p(l: int, x):
    """Legendre polynomial ``P_l(x)`` by Bonnet's three-term recurrence."""
    if int(l) != l or l < 0:
        raise DomainError(f"degree must be a nonnegative integer, got {l}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise DomainError("legendre_p requires -1 <= x <= 1")
    p_prev = np.ones_like(x)
    if l == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = x.copy()
    for k in range(2, int(l) + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    return p if p.ndim else float(p)


def legendre_p_all(L: int, x) -> np.ndarray:
    """All ``P_l(x)`` for ``l = 0..L``; shape ``(L + 1,) + x.shape``."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise DomainError("legendre_p_all requires -1 <= x <= 1")
    out = np.empty((L + 1,) + x.shape)
    out[0] = 1.0
    if L >= 1:
        out[1] = x
    for k in range(2, L + 1):
        out[k] = ((2 * k - 1) * x * out[k - 1] - (k - 1) * out[k - 2]) / k
    return out


def _log_sectoral(L: int) -> np.ndarray:
    # log of |lambda_mm| / sin(theta)^m for m = 0..L
    k = np.arange(1, L + 1)
    steps = 0.5 * np.log((2.0 * k + 1.0) / (2.0 * k))
    return -0.5 * math.log(4.0 * math.pi) + np.concatenate([[0.0], np.cumsum(steps)])


def iter_legendre_degrees(L: int, theta):
    """Yield ``(l, lambda_l[m, point])`` for ``l = 0..L`` with ``m = 0..l``.

    Upward recurrence in ``l`` at fixed ``m``; each order row carries its own
    log-scale which is renormalized whenever the working values grow large,
    so high orders near the poles neither overflow nor lose the seed to
    underflow.  Memory is ``O(L * points)``.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float)).reshape(-1)
    x = np.cos(th)
    with np.errstate(divide="ignore"):
        log_sin = np.log(np.abs(np.sin(th)))
    P = th.size
    logsec = _log_sectoral(L)
    scale = np.zeros((L + 1, P))
    cur = np.zeros((L + 1, P))
    prev = np.zeros((L + 1, P))
    for l in range(L + 1):
        new = np.zeros((l + 1, P))
        if l >= 2:
            m = np.arange(l - 1)[:, None]
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            new[: l - 1] = a * (x * cur[: l - 1] - b * prev[: l - 1])
        if l >= 1:
            new[l - 1] = x * math.sqrt(2.0 * l + 1.0) * cur[l - 1]
        new[l] = -1.0 if l % 2 else 1.0
        with np.errstate(invalid="ignore"):
            scale[l] = logsec[l] + l * log_sin if l else logsec[0]
        big = np.abs(new) > _LOG_RESCALE
        if np.any(big):
            fac = np.where(big, np.abs(new), 1.0)
            new /= fac
            cur[: l + 1] /= fac
            scale[: l + 1] += np.log(fac)
        prev[: l + 1], cur[: l + 1] = cur[: l + 1], new
        with np.errstate(under="ignore", invalid="ignore"):
            vals = new * np.exp(scale[: l + 1])
        vals[~np.isfinite(vals)] = 0.0
        yield l, vals


def legendre_table(L: int, theta) -> np.ndarray:
    """Normalized associated Legendre functions ``lambda_lm(cos theta)``.

    ``Y_lm(theta, phi) = lambda_lm(cos theta) exp(i m phi)``.  Returned shape is
    ``(n_modes(L),) + theta.shape`` in flat-table order.
    """
    shape = np.shape(theta)
    size = int(np.prod(shape)) if shape else 1
    out = np.zeros((n_modes(L), size))
    for l, vals in iter_legendre_degrees(L, theta):
        out[l * (l + 1) // 2 : l * (l + 1) // 2 + l + 1] = vals
    return out.reshape((n_modes(L),) + shape)


def order_power(L: int, theta: float, weights) -> np.ndarray:
    """``sum_l weights[l] lambda_lm(cos theta)^2`` for ``m = 0..L`` without storing the table."""
    w = np.asarray(weights, float)
    out = np.zeros(L + 1)
    for l, vals in iter_legendre_degrees(L, theta):
        out[: l + 1] += w[l] * vals[:, 0] ** 2
    return out


def harmonics_table(L: int, theta, phi) -> np.ndarray:
    """Complex ``Y_lm`` for ``m >= 0``; shape ``(n_modes(L),) + broadcast shape``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    lam = legendre_table(L, theta)
    _, ms = mode_degrees(L)
    ms = ms.reshape((-1,) + (1,) * theta.ndim)
    return lam * np.exp(1j * ms * phi[None])


def spherical_harmonic(idx: HarmonicIndex, p: SphericalPoint) -> complex:
    l, m = idx.degree, idx.order
    lam = legendre_table(l, p.colatitude)[mode_index(l, abs(m))]
    y = complex(lam * np.exp(1j * abs(m) * p.longitude))
    if m < 0:
        y = (-1) ** (-m) * y.conjugate()
    return y


def geodesic_distance(x, y):
    """Great-circle distance; accepts SphericalPoints or arrays of unit vectors."""
    u = x.unit_vector if isinstance(x, SphericalPoint) else np.asarray(x, float)
    v = y.unit_vector if isinstance(y, SphericalPoint) else np.asarray(y, float)
    c = np.clip(np.sum(u * v, axis=-1), -1.0, 1.0)
    d = np.arccos(c)
    return float(d) if np.ndim(d) == 0 else d


def rotation_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def _j0_series(x: float) -> float:
    q = -0.25 * x * x
    term, total, k = 1.0, 1.0, 0
    while True:
        k += 1
        term *= q / (k * k)
        total += term
        if abs(term) < 1e-17 * max(1.0, abs(total)):
            return total


def _j0_miller(x: float) -> float:
    n = int(x + 30 + 4 * math.sqrt(x))
    n += n % 2
    jp, j = 0.0, 1e-300
    norm = 0.0
    for k in range(n, 0, -1):
        jm = 2.0 * k / x * j - jp
        jp, j = j, jm
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j
        if abs(j) > 1e250:
            j *= 1e-250
            jp *= 1e-250
            norm *= 1e-250
    norm += j
    return j / norm


def _j0_hankel(x: float) -> float:
    p, q = 1.0, 0.0
    a = 1.0
    k = 0
    terms_p, terms_q = [1.0], []
    inv8x = 1.0 / (8.0 * x)
    last = 1.0
    while k < 60:
        k += 1
        a *= -((2 * k - 1) ** 2) * inv8x / k
        if abs(a) > last:
            break
        last = abs(a)
        if k % 2:
            terms_q.append(a if (k // 2) % 2 == 0 else -a)
        else:
            terms_p.append(a if (k // 2) % 2 == 0 else -a)
        if last < 1e-18:
            break
    p = math.fsum(terms_p)
    q = math.fsum(terms_q)
    chi = x - 0.25 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(chi) - q * math.sin(chi))


def bessel_j0(x):
    """Bessel function ``J_0`` for ``x >= 0``.

    Power series below 8, Miller's backward recurrence (normalized by
    ``J_0 + 2 sum J_2k = 1``) up to 25, Hankel's asymptotic expansion beyond.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("bessel_j0 is defined here for x >= 0")

    def one(v):
        if v < 8.0:
            return _j0_series(v)
        if v < 25.0:
            return _j0_miller(v)
        return _j0_hankel(v)

    if arr.ndim == 0:
        return one(float(arr))
    return np.array([one(float(v)) for v in arr.ravel()]).reshape(arr.shape)


def hilb_approx(l: int, theta):
    """Main term ``sqrt(theta / sin theta) J_0((l + 1/2) theta)`` of Hilb's formula."""
    th = np.asarray(theta, dtype=float)
    if np.any(th <= 0.0) or np.any(th >= math.pi):
        raise DomainError("hilb_approx requires 0 < theta < pi")
    val = np.sqrt(th / np.sin(th)) * bessel_j0((l + 0.5) * th)
    return float(val) if np.ndim(val) == 0 else val
