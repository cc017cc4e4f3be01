"""Spectral simulation and verification of the stochastic heat equation on the
unit sphere driven by noise that is fractional Brownian in time (H > 1/2)
and isotropically colored in space."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DomainError,
    FactorizationError,
    PreconditionError,
    QuadratureError,
    SphereFheatError,
    SymmetryError,
)
from .harmonics import HarmonicIndex, SphericalPoint, bessel_j0, legendre_p, spherical_harmonic  # noqa: F401
from .fbm_kernel import FbmConvention, QuadratureConfig, lag_kernel, sigma_l_sq, sigma_l_sq_fourier, u_cov  # noqa: F401
from .spectral_sampler import CoefficientPathSet, ModelParams, TimeGrid, Upsilon, sample_all, sample_coefficient_paths  # noqa: F401
from .field import FieldGrid, FieldSample, evaluate_field, field_covariance  # noqa: F401
