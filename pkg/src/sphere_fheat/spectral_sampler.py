"""Exact Gaussian sampling of harmonic coefficient paths.

Each coefficient path ``u_lm(t_i)`` is drawn as ``factor @ z`` with the
Cholesky factor of the mode covariance ``U_l(t_i, t_j)``.  Complex modes
(``m > 0``) split their variance evenly between real and imaginary parts;
``m = 0`` is real.  Negative orders are never stored: they are read out as
``(-1)^m conj(u_{l,|m|})``.

Random streams: replicate ``r`` of stream kind ``k`` owns the generator
``default_rng(SeedSequence(seed, spawn_key=(k, r)))``.  Inside a replicate,
mode ``(l, m)`` consumes the fixed block of ``2 n`` normals at flat index
``l (l + 1) / 2 + m``, so results do not depend on chunking, worker count or
(for a shared prefix) on the truncation level.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import linalg

from . import fbm_kernel as fk
from .errors import DomainError, FactorizationError, PreconditionError
from .harmonics import mode_degrees, mode_index, n_modes

STREAM_NOISE = 1
STREAM_INITIAL = 2
STREAM_FBM = 3
STREAM_FIELD = 4

JITTER_LEVELS = (0.0, 1e-14, 1e-12, 1e-10)


@dataclass(frozen=True)
class Upsilon:
    """Prefactor ``Upsilon(l)`` of the noise spectrum.

    ``kind='constant'`` uses ``values[0]`` for every degree; ``kind='periodic'``
    cycles through ``values`` (``Upsilon(l) = values[l % len(values)]``).
    """

    kind: str = "constant"
    values: tuple = (1.0,)

    def __post_init__(self):
        if self.kind not in ("constant", "periodic"):
            raise DomainError(f"unknown Upsilon kind {self.kind!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals or min(vals) <= 0:
            raise DomainError("Upsilon values must be positive")
        object.__setattr__(self, "values", vals)

    def __call__(self, l):
        l = np.asarray(l)
        if self.kind == "constant":
            out = np.full(l.shape, self.values[0])
        else:
            out = np.asarray(self.values)[l % len(self.values)]
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or len(set(self.values)) == 1

    @property
    def bound(self) -> float:
        return max(max(self.values), 1.0 / min(self.values))


@dataclass(frozen=True)
class ModelParams:
    hurst: float
    alpha: float
    L: int
    beta: float = 5.0
    d0: float = 0.0
    horizon: float = 1.0
    upsilon: Upsilon = field(default_factory=Upsilon)
    c0: float | None = None

    def __post_init__(self):
        fk.FbmConvention(self.hurst)
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")
        if int(self.L) != self.L or self.L < 1:
            raise DomainError("truncation L must be a positive integer")
        if self.d0 < 0:
            raise DomainError("d0 must be nonnegative")
        if self.d0 > 0 and self.beta <= 4:
            raise DomainError("beta must exceed 4 when d0 > 0")
        if self.horizon <= 0:
            raise DomainError("horizon must be positive")
        c0 = self.upsilon.bound if self.c0 is None else float(self.c0)
        if c0 < 1:
            raise DomainError("c0 must be >= 1")
        u = self.upsilon(np.arange(self.L + 1))
        if np.any(u < 1.0 / c0 * (1 - 1e-12)) or np.any(u > c0 * (1 + 1e-12)):
            raise DomainError(f"Upsilon leaves [1/c0, c0] = [{1 / c0}, {c0}]")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "L", int(self.L))

    @property
    def conv(self) -> fk.FbmConvention:
        return fk.FbmConvention(self.hurst)

    def with_L(self, L: int) -> "ModelParams":
        return ModelParams(self.hurst, self.alpha, L, self.beta, self.d0, self.horizon, self.upsilon, self.c0)

    def replace(self, **kw) -> "ModelParams":
        d = dict(hurst=self.hurst, alpha=self.alpha, L=self.L, beta=self.beta, d0=self.d0,
                 horizon=self.horizon, upsilon=self.upsilon, c0=None)
        d.update(kw)
        return ModelParams(**d)


def power_coefficient(params: ModelParams, l):
    """``C_l = Upsilon(l) (l + 1/2)^{-alpha}``."""
    l = np.asarray(l)
    if np.any(l < 0):
        raise DomainError("degree must be nonnegative")
    out = params.upsilon(l) * (l + 0.5) ** (-params.alpha)
    return float(out) if np.ndim(out) == 0 else out


def initial_spectrum(params: ModelParams, l):
    """``D_l = D0 (l + 1/2)^{-beta}``; identically zero when ``D0 = 0``."""
    l = np.asarray(l)
    if np.any(l < 0):
        raise DomainError("degree must be nonnegative")
    if params.d0 == 0:
        out = np.zeros(l.shape)
    else:
        out = params.d0 * (l + 0.5) ** (-params.beta)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray
    horizon: float | None = None

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, float))
        if t.ndim != 1 or t.size == 0:
            raise DomainError("time grid must be a nonempty 1D sequence")
        if np.any(np.diff(t) <= 0):
            raise DomainError("time grid must be strictly increasing")
        if t[0] < 0 or (self.horizon is not None and t[-1] > self.horizon * (1 + 1e-12)):
            raise DomainError("time grid must lie in [0, T]")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return self.times.size

    @classmethod
    def uniform(cls, start: float, stop: float, n: int, horizon: float | None = None) -> "TimeGrid":
        return cls(np.linspace(start, stop, n), horizon)


class CovarianceMatrix:
    """Dense symmetric PSD matrix with a lazily computed, jittered Cholesky factor.

    Rows whose diagonal is exactly zero (e.g. ``t = 0`` without initial data)
    are degenerate coordinates and get zero factor rows.
    """

    def __init__(self, matrix, symmetry_tol: float = 1e-12):
        A = np.array(matrix, dtype=float, copy=True)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DomainError("covariance must be square")
        scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
        if A.size and np.max(np.abs(A - A.T)) > symmetry_tol * scale:
            raise DomainError("covariance is not symmetric")
        self.matrix = 0.5 * (A + A.T)
        self._factor = None
        self.jitter = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def active(self) -> np.ndarray:
        return np.diag(self.matrix) > 0

    @property
    def factor(self) -> np.ndarray:
        if self._factor is None:
            self._factor = self._factorize()
        return self._factor

    def _factorize(self) -> np.ndarray:
        A = self.matrix
        d = np.diag(A)
        if np.any(d < 0):
            raise FactorizationError("negative variance on the diagonal", min_eigenvalue=float(d.min()))
        act = d > 0
        F = np.zeros_like(A)
        if not np.any(act):
            self.jitter = 0.0
            return F
        if np.any(A[~act][:, act] != 0):
            raise FactorizationError("zero-variance coordinate with nonzero covariance")
        sub = A[np.ix_(act, act)]
        unit = float(np.trace(sub)) / sub.shape[0]
        for j in JITTER_LEVELS:
            try:
                Lsub = linalg.cholesky(sub + j * unit * np.eye(sub.shape[0]), lower=True)
            except linalg.LinAlgError:
                continue
            self.jitter = j * unit
            F[np.ix_(act, act)] = Lsub
            return F
        lo = float(np.linalg.eigvalsh(sub)[0])
        raise FactorizationError(
            f"covariance not factorizable with jitter <= 1e-10 * trace/n (min eigenvalue {lo:.3g})",
            min_eigenvalue=lo,
        )

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals ``z[..., n]`` to correlated draws."""
        return z @ self.factor.T

    def conditional_variance(self, target: int, given: Sequence[int]) -> float:
        """Schur complement ``A_tt - A_tg A_gg^{-1} A_gt``."""
        given = [g for g in given if self.matrix[g, g] > 0]
        v = float(self.matrix[target, target])
        if not given:
            return v
        sub = CovarianceMatrix(self.matrix[np.ix_(given, given)])
        c = self.matrix[given, target]
        w = linalg.solve_triangular(sub.factor, c, lower=True)
        return v - float(w @ w)


def build_mode_covariance(params: ModelParams, l: int, grid: TimeGrid, quad: fk.QuadratureConfig | None = None) -> CovarianceMatrix:
    """``[U_l(t_i, t_j)]`` with ``C_l, D_l`` taken from ``params``."""
    if not 0 <= l <= params.L:
        raise DomainError(f"degree {l} outside [0, {params.L}]")
    t = grid.times
    lam = l * (l + 1.0)
    C = power_coefficient(params, l)
    D = initial_spectrum(params, l)
    U = C * fk.noise_kernel_matrix(l, t, params.conv, quad)
    if D > 0:
        e = np.exp(-lam * t)
        U = U + D * np.outer(e, e)
    return CovarianceMatrix(U)


@dataclass
class CoefficientPathSet:
    """Complex coefficient paths, ``values[r, idx(l, m), i]`` for ``m >= 0``."""

    values: np.ndarray
    times: np.ndarray
    L: int
    seed: int | None = None
    replicate_offset: int = 0
    kind: str = "solution"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 2:
            v = v[None]
        if v.shape[1] != n_modes(self.L) or v.shape[2] != len(self.times):
            raise DomainError("values shape does not match (L, times)")
        self.values = v.astype(complex, copy=False)
        self.times = np.asarray(self.times, float)

    @property
    def replicates(self) -> int:
        return self.values.shape[0]

    @property
    def replicate_ids(self) -> np.ndarray:
        return self.replicate_offset + np.arange(self.replicates)

    def coefficient(self, l: int, m: int) -> np.ndarray:
        """Path of ``u_lm`` for any ``|m| <= l``; shape ``(replicates, n_times)``."""
        if not (0 <= l <= self.L and abs(m) <= l):
            raise DomainError(f"no coefficient ({l}, {m}) at truncation {self.L}")
        v = self.values[:, mode_index(l, abs(m))]
        if m < 0:
            v = (-1) ** (-m) * np.conj(v)
        return v

    def scaled(self, multiplier) -> "CoefficientPathSet":
        """New set with the ``l``-block multiplied by ``multiplier[l]``."""
        mult = np.asarray(multiplier, float)
        ls, _ = mode_degrees(self.L)
        vals = self.values * mult[ls][None, :, None]
        return CoefficientPathSet(vals, self.times, self.L, self.seed, self.replicate_offset, self.kind, dict(self.metadata))

    def __add__(self, other: "CoefficientPathSet") -> "CoefficientPathSet":
        if other.L != self.L or not np.array_equal(other.times, self.times):
            raise DomainError("cannot add path sets on different truncations or grids")
        return CoefficientPathSet(self.values + other.values, self.times, self.L, self.seed, self.replicate_offset, self.kind)

    def __mul__(self, c: float) -> "CoefficientPathSet":
        return CoefficientPathSet(self.values * c, self.times, self.L, self.seed, self.replicate_offset, self.kind)

    __rmul__ = __mul__

    @staticmethod
    def concatenate(parts: Sequence["CoefficientPathSet"]) -> "CoefficientPathSet":
        parts = sorted(parts, key=lambda p: p.replicate_offset)
        first = parts[0]
        vals = np.concatenate([p.values for p in parts], axis=0)
        return CoefficientPathSet(vals, first.times, first.L, first.seed, first.replicate_offset, first.kind, dict(first.metadata))


def replicate_rng(seed: int, kind: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(kind), int(replicate))))


def _replicate_normals(seed: int, kind: int, replicates: np.ndarray, M: int, n: int) -> np.ndarray:
    out = np.empty((replicates.size, M, 2, n))
    for k, r in enumerate(replicates):
        out[k] = replicate_rng(seed, kind, r).standard_normal((M, 2, n))
    return out


def _complexify(z: np.ndarray, ms: np.ndarray) -> np.ndarray:
    # z[..., M, 2, n] of correlated draws -> complex modes with the m = 0 rule
    re, im = z[..., 0, :], z[..., 1, :]
    cplx = (re + 1j * im) / math.sqrt(2.0)
    real0 = re + 0j
    return np.where((ms == 0)[:, None], real0, cplx)


def _mode_factors(params: ModelParams, grid: TimeGrid, quad) -> list[np.ndarray]:
    # noise part only; the initial condition is drawn separately
    factors = []
    for l in range(params.L + 1):
        C = power_coefficient(params, l)
        K = CovarianceMatrix(C * fk.noise_kernel_matrix(l, grid.times, params.conv, quad))
        factors.append(K.factor)
    return factors


def _sample_chunk(args) -> CoefficientPathSet:
    params, times, factors, seed, offset, count = args
    L = params.L
    M = n_modes(L)
    n = times.size
    ls, ms = mode_degrees(L)
    reps = offset + np.arange(count)
    z = _replicate_normals(seed, STREAM_NOISE, reps, M, n)
    corr = np.empty_like(z)
    for l in range(L + 1):
        sl = slice(mode_index(l, 0), mode_index(l, l) + 1)
        corr[:, sl] = z[:, sl] @ factors[l].T
    vals = _complexify(corr, ms)
    if params.d0 > 0:
        D = initial_spectrum(params, ls)
        lam = ls * (ls + 1.0)
        z0 = np.empty((count, M, 2, 1))
        for k, r in enumerate(reps):
            z0[k] = replicate_rng(seed, STREAM_INITIAL, r).standard_normal((M, 2, 1))
        u0 = _complexify(z0 * np.sqrt(D)[:, None, None], ms)
        vals = vals + u0 * np.exp(-lam[:, None] * times[None, :])
    return CoefficientPathSet(vals, times, L, seed, int(offset), "solution",
                              {"hurst": params.hurst, "alpha": params.alpha, "L": L})


def sample_coefficient_paths(
    params: ModelParams,
    grid: TimeGrid,
    seed: int,
    replicates: int,
    chunk: int | None = None,
    workers: int = 1,
    quad: fk.QuadratureConfig | None = None,
) -> Iterator[CoefficientPathSet]:
    """Yield solution coefficient paths in replicate chunks (ordered by replicate).

    The noise contribution of mode ``(l, m)`` has covariance ``C_l K_l``; the
    initial condition ``u0_lm ~ D_l`` comes from an independent stream and is
    propagated as ``u0_lm exp(-lam t)``.  Their sum has covariance ``U_l``.
    """
    if replicates < 1:
        raise PreconditionError("replicates must be >= 1")
    if grid.times[-1] > params.horizon * (1 + 1e-12):
        raise PreconditionError("time grid exceeds the horizon")
    factors = _mode_factors(params, grid, quad)
    chunk = chunk or max(1, min(replicates, 4096 // max(1, len(grid))))
    tasks = [(params, grid.times, factors, seed, off, min(chunk, replicates - off)) for off in range(0, replicates, chunk)]
    if workers <= 1:
        for t in tasks:
            yield _sample_chunk(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_sample_chunk, tasks)


def sample_all(params, grid, seed, replicates, **kw) -> CoefficientPathSet:
    return CoefficientPathSet.concatenate(list(sample_coefficient_paths(params, grid, seed, replicates, **kw)))


def sample_noise_coefficients(params: ModelParams, grid: TimeGrid, seed: int, replicates: int = 1) -> CoefficientPathSet:
    """Noise coefficients ``sqrt(C_l) beta_lm(t_i)`` with ``beta`` of covariance ``R_H``."""
    if replicates < 1:
        raise PreconditionError("replicates must be >= 1")
    L = params.L
    M = n_modes(L)
    n = len(grid)
    ls, ms = mode_degrees(L)
    R = CovarianceMatrix(fk.r_cov(grid.times[:, None], grid.times[None, :], params.conv).reshape(n, n))
    z = _replicate_normals(seed, STREAM_FBM, np.arange(replicates), M, n)
    beta = _complexify(R.sample(z), ms)
    vals = beta * np.sqrt(power_coefficient(params, ls))[None, :, None]
    return CoefficientPathSet(vals, grid.times, L, seed, 0, "noise")


CSV_HEADER = ("replicate", "l", "m", "t", "re", "im")


def write_coefficients_csv(paths: CoefficientPathSet, fh) -> None:
    """One row per (replicate, l, m >= 0, time): ``replicate,l,m,t,re,im``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    ls, ms = mode_degrees(paths.L)
    for r, rid in enumerate(paths.replicate_ids):
        for k in range(ls.size):
            for i, t in enumerate(paths.times):
                v = paths.values[r, k, i]
                w.writerow((int(rid), int(ls[k]), int(ms[k]), f"{t:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"))


def read_coefficients_csv(fh) -> CoefficientPathSet:
    rows = list(csv.DictReader(fh))
    if not rows:
        raise DomainError("empty coefficient file")
    rep = np.array([int(r["replicate"]) for r in rows])
    l = np.array([int(r["l"]) for r in rows])
    m = np.array([int(r["m"]) for r in rows])
    t = np.array([float(r["t"]) for r in rows])
    v = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    L = int(l.max())
    times = np.unique(t)
    reps = np.unique(rep)
    vals = np.zeros((reps.size, n_modes(L), times.size), complex)
    vals[np.searchsorted(reps, rep), mode_index(l, m), np.searchsorted(times, t)] = v
    return CoefficientPathSet(vals, times, L, replicate_offset=int(reps[0]))
