"""Covariance algebra and the dimensionless (rho, kappa) reparameterization.

Physical coordinates are ordered (x, y, ct). A covariance matrix ``Sigma``
(units length^2) maps a relative detection vector ``delta_r`` and a momentum
difference ``delta_k`` to the dimensionless pair::

    rho   = Sigma^{-1/2} delta_r
    kappa = Sigma^{+1/2} delta_k

so that ``rho . kappa == delta_r . delta_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError

SYMMETRY_RTOL = 1e-12
EIGEN_FLOOR = 1e-12  # relative to the largest eigenvalue
CANONICAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """A 3x3 symmetric positive-definite covariance matrix.

    The spectral decomposition is computed once and reused for the square
    root and inverse square root.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.shape != (3, 3):
            raise DomainError(f"covariance must be 3x3, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("covariance has non-finite entries")
        scale = max(np.max(np.abs(a)), np.finfo(float).tiny)
        if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
            raise DomainError("covariance is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        w = self._eig[0]
        if w[0] <= EIGEN_FLOOR * max(w[-1], 0.0) or w[0] <= 0.0:
            raise DomainError(
                f"covariance is not positive definite: smallest eigenvalue {w[0]:.6g}"
            )

    @classmethod
    def diagonal(cls, sigma_x: float, sigma_y: float, sigma_t: float) -> CovarianceMatrix:
        """Diagonal covariance from standard deviations (sigma_t in length units, i.e. c*sigma_t)."""
        return cls(np.diag([sigma_x**2, sigma_y**2, sigma_t**2]))

    @classmethod
    def identity(cls) -> CovarianceMatrix:
        return cls(np.eye(3))

    @cached_property
    def _eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.entries)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eig[0]

    @cached_property
    def sqrt(self) -> np.ndarray:
        w, v = self._eig
        return _symmetrize((v * np.sqrt(w)) @ v.T)

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        w, v = self._eig
        return _symmetrize((v / np.sqrt(w)) @ v.T)

    @cached_property
    def inverse(self) -> np.ndarray:
        w, v = self._eig
        return _symmetrize((v / w) @ v.T)

    @property
    def det(self) -> float:
        return float(np.prod(self._eig[0]))

    def __add__(self, other: CovarianceMatrix) -> CovarianceMatrix:
        return CovarianceMatrix(self.entries + other.entries)

    def scaled(self, factor: float) -> CovarianceMatrix:
        return CovarianceMatrix(self.entries * factor)


def _symmetrize(a: np.ndarray) -> np.ndarray:
    out = 0.5 * (a + a.T)
    out.setflags(write=False)
    return out


def covariance_from_config(obj: Sequence[float] | Mapping[str, float]) -> CovarianceMatrix:
    """Parse a row-major 9-element list or a ``{sigma_x, sigma_y, sigma_t}`` mapping."""
    if isinstance(obj, Mapping):
        try:
            return CovarianceMatrix.diagonal(
                float(obj["sigma_x"]), float(obj["sigma_y"]), float(obj["sigma_t"])
            )
        except KeyError as exc:
            raise DomainError(f"diagonal covariance shorthand is missing {exc}") from None
    flat = np.asarray(obj, dtype=float).ravel()
    if flat.size != 9:
        raise DomainError(f"covariance needs 9 row-major entries, got {flat.size}")
    return CovarianceMatrix(flat.reshape(3, 3))


def matrix_sqrt(sigma: CovarianceMatrix) -> CovarianceMatrix:
    """Unique SPD square root of ``sigma``."""
    return CovarianceMatrix(sigma.sqrt)


def delta_k_vector(dk_x: float, dk_y: float, domega_over_c: float) -> np.ndarray:
    """Signed momentum-difference vector (-dk_x, -dk_y, domega/c) in the (x, y, ct) frame."""
    return np.array([-dk_x, -dk_y, domega_over_c], dtype=float)


def kappa_from_momentum(sigma: CovarianceMatrix, delta_k: Sequence[float]) -> np.ndarray:
    """kappa = Sigma^{1/2} delta_k, where ``delta_k`` is already the signed vector.

    Build ``delta_k`` from physical transverse momenta with :func:`delta_k_vector`.
    """
    return np.asarray(delta_k, dtype=float) @ sigma.sqrt


def rho_from_position(sigma: CovarianceMatrix, delta_r: np.ndarray) -> np.ndarray:
    """rho = Sigma^{-1/2} delta_r; accepts a single vector or an (n, 3) stack."""
    return np.asarray(delta_r, dtype=float) @ sigma.inv_sqrt


def position_from_rho(sigma: CovarianceMatrix, rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=float) @ sigma.sqrt


@dataclass(frozen=True)
class SphericalMomentum:
    """kappa in spherical form: magnitude, polar angle from axis 1, azimuth in the (2, 3) plane."""

    magnitude: float
    theta: float
    phi: float

    def __post_init__(self):
        if not (self.magnitude >= 0.0):
            raise DomainError(f"magnitude must be non-negative, got {self.magnitude}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.magnitude, self.theta, self.phi)

    def kappa(self) -> np.ndarray:
        return kappa_from_spherical(self)

    def basis(self) -> np.ndarray:
        """Rows are d kappa / d(magnitude, theta, phi)."""
        m, t, p = self.as_tuple()
        st, ct, sp, cp = math.sin(t), math.cos(t), math.sin(p), math.cos(p)
        return np.array(
            [
                [ct, st * cp, st * sp],
                [-m * st, m * ct * cp, m * ct * sp],
                [0.0, -m * st * sp, m * st * cp],
            ]
        )


def spherical_from_kappa(kappa: Sequence[float]) -> SphericalMomentum:
    """Total map kappa -> (|kappa|, theta, phi).

    Equivalent to theta = arccos(k1/|k|), phi = sgn(k3) arccos(k2/sqrt(k2^2+k3^2)),
    evaluated with atan2 for accuracy near the poles. sgn(0) is taken as +1,
    phi = 0 on the polar axis and the origin maps to (0, 0, 0).
    """
    k1, k2, k3 = (float(c) for c in kappa)
    rho23 = math.hypot(k2, k3)
    mag = math.hypot(k1, rho23)
    if mag == 0.0:
        return SphericalMomentum(0.0, 0.0, 0.0)
    theta = math.atan2(rho23, k1)
    if rho23 == 0.0:
        phi = 0.0
    elif k3 == 0.0:
        phi = 0.0 if k2 > 0.0 else math.pi
    else:
        phi = math.atan2(k3, k2)
    return SphericalMomentum(mag, theta, phi)


def kappa_from_spherical(s: SphericalMomentum) -> np.ndarray:
    m, t, p = s.as_tuple()
    return m * np.array([math.cos(t), math.sin(t) * math.cos(p), math.sin(t) * math.sin(p)])


def canonicalize(kappa: Sequence[float]) -> np.ndarray:
    """Pick the representative of {kappa, -kappa} whose first non-negligible component is positive.

    Vectors with every component below the tolerance fall back to the first nonzero component.
    """
    k = np.array(kappa, dtype=float)
    for tol in (CANONICAL_TOL, 0.0):
        for c in k:
            if abs(c) > tol:
                return -k if c < 0.0 else k
    return k


def canonicalize_many(kappa: np.ndarray) -> np.ndarray:
    """Row-wise :func:`canonicalize` for an (n, 3) array."""
    k = np.array(kappa, dtype=float)
    big = np.abs(k) > CANONICAL_TOL
    tiny = ~np.any(big, axis=-1)
    big[tiny] = k[tiny] != 0.0
    first = np.argmax(big, axis=-1)
    lead = np.take_along_axis(k, first[..., None], axis=-1)[..., 0]
    flip = np.any(big, axis=-1) & (lead < 0.0)
    k[flip] *= -1.0
    return k


def spherical_many(kappa: np.ndarray) -> np.ndarray:
    """Vectorized spherical coordinates with the same conventions as :func:`spherical_from_kappa`."""
    k = np.asarray(kappa, dtype=float)
    rho23 = np.hypot(k[..., 1], k[..., 2])
    mag = np.hypot(k[..., 0], rho23)
    theta = np.where(mag > 0.0, np.arctan2(rho23, k[..., 0]), 0.0)
    phi = np.arctan2(k[..., 2], k[..., 1])
    phi = np.where((k[..., 2] == 0.0) & (k[..., 1] < 0.0), math.pi, phi)
    phi = np.where(rho23 == 0.0, 0.0, phi)
    return np.stack([mag, theta, phi], axis=-1)
