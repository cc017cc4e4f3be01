"""Field assembly, spectral operators and analytic field covariances.

Besides assembling ``u(t, x) = sum_lm u_lm(t) Y_lm(x)`` from coefficient
paths, this module samples two reduced views of the field exactly:

* the time path at a fixed point, from the covariance
  ``sum_l (2l+1)/(4 pi) U_l(t_i, t_j)`` (isotropy makes it point-free);
* the field on the equator at a fixed time.  On ``theta = pi/2`` all degrees
  of order ``m`` collapse into one coefficient ``a_m = sum_l u_lm lambda_lm(0)``,
  independent across ``m`` with variance ``sum_l U_l(t, t) lambda_lm(0)^2``,
  so a ring of any resolution costs one FFT per replicate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import fbm_kernel as fk
from .errors import DomainError, SymmetryError
from .harmonics import (
    SphericalPoint,
    geodesic_distance,
    legendre_p_all,
    legendre_table,
    mode_degrees,
    order_power,
    unit_vectors,
)
from .spectral_sampler import (
    STREAM_FIELD,
    CoefficientPathSet,
    CovarianceMatrix,
    ModelParams,
    initial_spectrum,
    power_coefficient,
    replicate_rng,
)

IMAG_TOL = 1e-8


@dataclass(frozen=True)
class FieldGrid:
    """Evaluation points; ``rings`` tags a colatitude x uniform-longitude layout."""

    colatitude: np.ndarray
    longitude: np.ndarray
    rings: tuple | None = None

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.colatitude, float))
        ph = np.atleast_1d(np.asarray(self.longitude, float))
        if th.shape != ph.shape or th.ndim != 1 or th.size == 0:
            raise DomainError("FieldGrid needs matching nonempty 1D coordinate arrays")
        if np.any(th < 0) or np.any(th > math.pi):
            raise DomainError("colatitudes must lie in [0, pi]")
        object.__setattr__(self, "colatitude", th)
        object.__setattr__(self, "longitude", np.mod(ph, 2 * math.pi))

    @property
    def size(self) -> int:
        return self.colatitude.size

    @property
    def unit_vectors(self) -> np.ndarray:
        return unit_vectors(self.colatitude, self.longitude)

    @classmethod
    def from_points(cls, points) -> "FieldGrid":
        pts = list(points)
        return cls([p.colatitude for p in pts], [p.longitude for p in pts])

    @classmethod
    def ring_grid(cls, colatitudes, n_lon: int) -> "FieldGrid":
        th = np.atleast_1d(np.asarray(colatitudes, float))
        ph = 2 * math.pi * np.arange(n_lon) / n_lon
        T, P = np.meshgrid(th, ph, indexing="ij")
        return cls(T.ravel(), P.ravel(), rings=(tuple(th.tolist()), int(n_lon)))

    @classmethod
    def gauss_legendre(cls, n_lat: int, n_lon: int | None = None) -> "FieldGrid":
        x, _ = np.polynomial.legendre.leggauss(n_lat)
        return cls.ring_grid(np.arccos(x[::-1]), n_lon or 2 * n_lat)

    def points(self) -> list[SphericalPoint]:
        return [SphericalPoint(a, b) for a, b in zip(self.colatitude, self.longitude)]


@dataclass
class FieldSample:
    """Real field values ``values[replicate, time, point]`` with provenance."""

    values: np.ndarray
    times: np.ndarray
    grid: FieldGrid
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim == 2:
            v = v[None]
        if v.shape[1:] != (len(self.times), self.grid.size):
            raise DomainError("field values do not match (times, points)")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        self.values = v


def _ring_synthesis(coeffs: CoefficientPathSet, grid: FieldGrid) -> np.ndarray:
    thetas, n_lon = grid.rings
    L = coeffs.L
    if n_lon < 2 * L + 1:
        return None
    ls, ms = mode_degrees(L)
    lam = legendre_table(L, np.asarray(thetas))  # (M, J)
    R, _, n = coeffs.values.shape
    out = np.empty((R, n, len(thetas), n_lon))
    # a[r, i, j, m] = sum_l u_lm lambda_lm(theta_j)
    a = np.zeros((R, n, len(thetas), L + 1), complex)
    for m in range(L + 1):
        sel = ms == m
        a[..., m] = np.einsum("rki,kj->rij", coeffs.values[:, sel], lam[sel])
    B = np.zeros((R, n, len(thetas), n_lon), complex)
    B[..., : L + 1] = a
    for m in range(1, L + 1):
        sel = ms == m
        neg = np.einsum("rki,kj->rij", (-1) ** m * np.conj(coeffs.values[:, sel]), (-1) ** m * lam[sel])
        B[..., n_lon - m] = neg
    full = np.fft.ifft(B, axis=-1) * n_lon
    _check_imag(full)
    out[:] = full.real
    return out.reshape(R, n, -1)


def _check_imag(z):
    if z.size == 0:
        return
    resid = float(np.max(np.abs(z.imag)))
    if resid > IMAG_TOL:
        raise SymmetryError(f"imaginary residue {resid:.3g} exceeds {IMAG_TOL}")


def evaluate_field(coeffs: CoefficientPathSet, grid: FieldGrid) -> FieldSample:
    """Truncated sum over ``l <= L, |m| <= l`` with negative orders read out by symmetry."""
    prov = {"L": coeffs.L, "seed": coeffs.seed, "replicate_offset": coeffs.replicate_offset, "kind": coeffs.kind}
    prov.update(coeffs.metadata)
    if grid.rings is not None:
        vals = _ring_synthesis(coeffs, grid)
        if vals is not None:
            return FieldSample(vals, coeffs.times, grid, prov)
    L = coeffs.L
    ls, ms = mode_degrees(L)
    lam = legendre_table(L, grid.colatitude)  # (M, P)
    e = np.exp(1j * ms[:, None] * grid.longitude[None, :])
    Y = lam * e
    Yneg = ((-1.0) ** ms)[:, None] * lam * np.conj(e)
    R, M, n = coeffs.values.shape
    u = coeffs.values.transpose(0, 2, 1).reshape(R * n, M)
    uneg = ((-1.0) ** ms)[None, :] * np.conj(u)
    pos = u @ Y
    neg = uneg[:, ms > 0] @ Yneg[ms > 0]
    total = (pos + neg).reshape(R, n, grid.size)
    _check_imag(total)
    return FieldSample(total.real, coeffs.times, grid, prov)


def laplace_beltrami(coeffs: CoefficientPathSet) -> CoefficientPathSet:
    l = np.arange(coeffs.L + 1)
    return coeffs.scaled(-l * (l + 1.0))


def fractional_smoothing(coeffs: CoefficientPathSet, k: float) -> CoefficientPathSet:
    """Multiply the degree-``l`` block by ``(1 + l(l+1))^{k/2}``."""
    l = np.arange(coeffs.L + 1)
    return coeffs.scaled((1.0 + l * (l + 1.0)) ** (0.5 * k))


def smoothing_multiplier(l, k: float):
    l = np.asarray(l, float)
    return (1.0 + l * (l + 1.0)) ** (0.5 * k)


def noise_kernels(L: int, t: float, s: float, conv: fk.FbmConvention, quad=None) -> np.ndarray:
    """``K_l(t, s)`` for ``l = 0..L`` (mode covariance with ``C = 1, D = 0``)."""
    fk._check_time(t, s)
    t, s = (float(t), float(s)) if t >= s else (float(s), float(t))
    out = np.zeros(L + 1)
    if s == 0.0:
        return out
    out[0] = conv.kernel_factor / conv.alpha_h * fk.r_cov(t, s, conv)
    for l in range(1, L + 1):
        lam = l * (l + 1.0)
        if lam * s > fk._SATURATED:
            if t == s:
                out[l:] = [fk.stationary_variance(j, conv) for j in range(l, L + 1)]
            else:
                out[l:] = [fk.lag_kernel(j, t - s, conv, quad) for j in range(l, L + 1)]
            break
        if t == s:
            out[l] = fk.sigma_l_sq(l, t, conv, quad, method="quadrature")
        else:
            out[l] = fk.u_cov(l, t, s, 1.0, 0.0, conv, quad)
    return out


def mode_covariances(params: ModelParams, t: float, s: float, quad=None) -> np.ndarray:
    """``U_l(t, s)`` for ``l = 0..L``."""
    l = np.arange(params.L + 1)
    U = power_coefficient(params, l) * noise_kernels(params.L, t, s, params.conv, quad)
    if params.d0 > 0:
        U = U + initial_spectrum(params, l) * np.exp(-l * (l + 1.0) * (t + s))
    return U


def _cos_distance(x, y) -> float:
    return math.cos(geodesic_distance(x, y))


def field_covariance(params: ModelParams, t: float, s: float, x: SphericalPoint, y: SphericalPoint, quad=None) -> float:
    """``sum_{l <= L} (2l+1)/(4 pi) U_l(t, s) P_l(<x, y>)``."""
    for v in (t, s):
        if not 0 <= v <= params.horizon * (1 + 1e-12):
            raise DomainError("times must lie in [0, T]")
    U = mode_covariances(params, t, s, quad)
    l = np.arange(params.L + 1)
    P = legendre_p_all(params.L, _cos_distance(x, y))
    return float(np.sum((2 * l + 1) / (4 * math.pi) * U * P))


def noise_covariance(params: ModelParams, t: float, s: float, x: SphericalPoint, y: SphericalPoint) -> float:
    """``R_H(t, s) Lambda_L(x, y)`` with ``Lambda_L = sum (2l+1)/(4 pi) C_l P_l``."""
    if params.alpha <= 2:
        raise DomainError("pointwise noise covariance needs alpha > 2")
    l = np.arange(params.L + 1)
    lam = np.sum((2 * l + 1) / (4 * math.pi) * power_coefficient(params, l) * legendre_p_all(params.L, _cos_distance(x, y)))
    return float(fk.r_cov(t, s, params.conv) * lam)


def point_time_covariance(params: ModelParams, times, quad=None) -> CovarianceMatrix:
    """Covariance of ``u(t_i, x)`` at a fixed point (independent of ``x``).

    Degrees whose transient ``exp(-lam t_min)`` is negligible are stationary
    in time and are summed on the Fourier side (one quadrature per distinct
    lag); the remaining low degrees are built mode by mode.
    """
    times = np.asarray(times, float)
    conv = params.conv
    n = times.size
    l = np.arange(params.L + 1)
    w = (2 * l + 1) / (4 * math.pi)
    C = power_coefficient(params, l)
    pos = times > 0
    tmin = times[pos].min() if np.any(pos) else 0.0
    lam = l * (l + 1.0)
    far = (l >= 1) & (lam * tmin > fk._SATURATED)
    A = np.zeros((n, n))
    for j in np.flatnonzero(~far):
        A += w[j] * C[j] * fk.noise_kernel_matrix(int(j), times, conv, quad)
    if np.any(far):
        S = fk.SpectralSum(l[far], w[far] * C[far], conv, quad or fk.DEFAULT_QUAD)
        idx = np.flatnonzero(pos)
        tp = times[idx]
        lags = np.abs(tp[:, None] - tp[None, :])
        ulag, inv = np.unique(lags, return_inverse=True)
        var = S.variance()
        cov = np.array([var - S.increment(r) for r in ulag])[inv].reshape(lags.shape)
        A[np.ix_(idx, idx)] += cov
    if params.d0 > 0:
        D = initial_spectrum(params, l)
        E = np.exp(-lam[:, None] * times[None, :])
        A += np.einsum("l,li,lj->ij", w * D, E, E)
    return CovarianceMatrix(A)


def point_increment_variance(params: ModelParams, t: float, lags, quad=None) -> np.ndarray:
    """``E|u(t + r, x) - u(t, x)|^2`` for each lag ``r``.

    Stationary high degrees contribute ``2 (Gamma(0) - Gamma(r))`` computed
    directly as a ``(1 - cos)`` spectral integral, so tiny lags do not suffer
    cancellation; low degrees use ``U_l(t+r, t+r) + U_l(t, t) - 2 U_l(t+r, t)``.
    """
    lags = np.atleast_1d(np.asarray(lags, float))
    conv = params.conv
    l = np.arange(params.L + 1)
    w = (2 * l + 1) / (4 * math.pi)
    C = power_coefficient(params, l)
    D = initial_spectrum(params, l)
    lam = l * (l + 1.0)
    far = (l >= 1) & (lam * t > fk._SATURATED)
    out = np.zeros(lags.size)
    near = np.flatnonzero(~far)
    for k, r in enumerate(lags):
        if r == 0:
            continue
        grid = np.array([t, t + r])
        for j in near:
            K = fk.noise_kernel_matrix(int(j), grid, conv, quad)
            v = C[j] * (K[0, 0] + K[1, 1] - 2 * K[0, 1])
            if D[j] > 0:
                v += D[j] * (math.exp(-lam[j] * t) - math.exp(-lam[j] * (t + r))) ** 2
            out[k] += w[j] * v
    if np.any(far):
        S = fk.SpectralSum(l[far], w[far] * C[far], conv, quad or fk.DEFAULT_QUAD)
        for k, r in enumerate(lags):
            out[k] += 2.0 * S.increment(r)
        if params.d0 > 0:
            fd = np.flatnonzero(far)
            e = np.exp(-lam[fd, None] * t) * (1 - np.exp(-lam[fd, None] * lags[None, :]))
            out += np.sum((w[fd] * D[fd])[:, None] * e**2, axis=0)
    return out


def sample_time_paths(params: ModelParams, times, seed: int, replicates: int, quad=None, cov: CovarianceMatrix | None = None) -> np.ndarray:
    """Exact draws of ``u(t_i, x)`` at one point; shape ``(replicates, n_times)``."""
    cov = cov or point_time_covariance(params, times, quad)
    n = cov.n
    z = np.stack([replicate_rng(seed, STREAM_FIELD, r).standard_normal(n) for r in range(replicates)])
    return cov.sample(z)


def ring_mode_variances(params: ModelParams, t: float, k: float = 0.0, quad=None) -> np.ndarray:
    """``Var a_m = sum_l U_l(t, t) m_k(l)^2 lambda_lm(0)^2`` for ``m = 0..L`` on the equator.

    ``k`` applies the fractional operator ``(1 - Delta)^{k/2}`` to the field.
    """
    L = params.L
    U = mode_covariances(params, t, t, quad) * smoothing_multiplier(np.arange(L + 1), k) ** 2
    return order_power(L, math.pi / 2, U)


def sample_equator(params: ModelParams, t: float, n_lon: int, seed: int, replicates: int, k: float = 0.0,
                   variances: np.ndarray | None = None, quad=None) -> np.ndarray:
    """Exact field draws on ``n_lon`` equally spaced equator points; shape ``(replicates, n_lon)``."""
    L = params.L
    if n_lon < 2 * L + 1:
        raise DomainError("equator sampling needs n_lon >= 2 L + 1")
    V = ring_mode_variances(params, t, k, quad) if variances is None else np.asarray(variances)
    sd = np.sqrt(V)
    out = np.empty((replicates, n_lon))
    for r in range(replicates):
        z = replicate_rng(seed, STREAM_FIELD, r).standard_normal((L + 1, 2))
        a = sd * (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)
        a[0] = sd[0] * z[0, 0]
        B = np.zeros(n_lon, complex)
        B[: L + 1] = a
        B[n_lon - L :] = np.conj(a[1:][::-1])
        u = np.fft.ifft(B) * n_lon
        _check_imag(u)
        out[r] = u.real
    return out


FIELD_CSV_HEADER = ("t", "colatitude", "longitude", "value")


def write_field_csv(sample: FieldSample, fh, replicate: int = 0) -> None:
    """Rows ``t,colatitude,longitude,value`` for one replicate, time-major."""
    fh.write(",".join(FIELD_CSV_HEADER) + "\n")
    g = sample.grid
    for i, t in enumerate(sample.times):
        for j in range(g.size):
            fh.write(f"{t:.17g},{g.colatitude[j]:.17g},{g.longitude[j]:.17g},{sample.values[replicate, i, j]:.17g}\n")


def save_field_npz(sample: FieldSample, path) -> None:
    """Binary layout: float64 ``values[replicate, time, point]``, ``times``,
    ``colatitude``, ``longitude`` and a JSON ``provenance`` string."""
    np.savez(path, values=sample.values, times=np.asarray(sample.times, float),
             colatitude=sample.grid.colatitude, longitude=sample.grid.longitude,
             provenance=np.array(json.dumps(sample.provenance, sort_keys=True, default=str)))


def load_field_npz(path) -> FieldSample:
    with np.load(path) as d:
        grid = FieldGrid(d["colatitude"], d["longitude"])
        return FieldSample(d["values"], d["times"], grid, json.loads(str(d["provenance"])))
