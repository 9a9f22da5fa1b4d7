"""Classical and quantum Fisher information for the resolved interferometer.

Every classical quantity reduces to two Gaussian moments of the beat kernel
along the kappa direction, with l = rho . kappa / |kappa|::

    I0 = E[beta_nu(|kappa| l)],    I2 = E[beta_nu(|kappa| l) l^2],   l ~ N(0, 1)

Spherical:  F = gamma^2 diag(I2, |kappa|^2 I0, |kappa|^2 sin^2(theta) I0)
Cartesian:  F = F_I * Id + F_k * k k^T / |k|^2,  F_I = gamma^2 I0,  F_k = gamma^2 (I2 - I0)
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import SphericalMomentum
from .model import beta, check_unit_interval
from .quadrature import (
    IntegralResult,
    QuadratureSpec,
    integrate_gaussian_1d,
    integrate_gaussian_3d,
)

__all__ = [
    "Basis",
    "FisherMatrix",
    "QuadratureSpec",
    "beta_moments",
    "fisher_cartesian",
    "fisher_cartesian_inverse_diag",
    "fisher_density",
    "fisher_known_nuisance",
    "fisher_single_param",
    "fisher_spherical",
    "qfi",
    "qfi_moment_check",
    "spherical_jacobian",
]

PSD_RTOL = 1e-10


class Basis(str, enum.Enum):
    SPHERICAL = "spherical"
    CARTESIAN = "cartesian"


class SingularFisherWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    entries: np.ndarray
    basis: Basis
    quad_error: float = 0.0

    def __post_init__(self):
        a = np.array(self.entries, dtype=float).reshape(3, 3)
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).copy()

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def is_psd(self, rtol: float = PSD_RTOL) -> bool:
        return self.min_eigenvalue() >= -rtol * max(abs(np.trace(self.entries)), 1e-300)

    def to_json(self) -> dict:
        return {
            "basis": self.basis.value,
            "entries": self.entries.tolist(),
            "quad_error": self.quad_error,
        }

    @classmethod
    def from_json(cls, d: dict) -> FisherMatrix:
        return cls(np.array(d["entries"]), Basis(d["basis"]), float(d["quad_error"]))


def _beat_period(kmag: float) -> float | None:
    return math.pi / kmag if kmag > 0 else None


def beta_moments(nu: float, kmag: float, quad: QuadratureSpec | None = None) -> IntegralResult:
    """(I0, I2) = Gaussian moments of beta_nu(kmag * l) of order 0 and 2."""
    check_unit_interval("nu", nu)

    def integrand(l):
        b = beta(nu, kmag * l)
        return np.stack([b, b * l * l], axis=-1)

    return integrate_gaussian_1d(integrand, _beat_period(kmag), spec=quad or QuadratureSpec())


def qfi(s: SphericalMomentum) -> FisherMatrix:
    """Quantum Fisher information for (|kappa|, theta, phi)."""
    m2 = s.magnitude**2
    return FisherMatrix(np.diag([1.0, m2, m2 * math.sin(s.theta) ** 2]), Basis.SPHERICAL)


def fisher_spherical(
    nu: float, gamma: float, s: SphericalMomentum, quad: QuadratureSpec | None = None
) -> FisherMatrix:
    check_unit_interval("gamma", gamma)
    res = beta_moments(nu, s.magnitude, quad)
    i0, i2 = res.value
    g2 = gamma * gamma
    m2 = s.magnitude**2
    diag = g2 * np.array([i2, m2 * i0, m2 * math.sin(s.theta) ** 2 * i0])
    err = g2 * res.error_estimate * max(1.0, m2)
    return FisherMatrix(np.diag(diag), Basis.SPHERICAL, err)


def fisher_density(l: float, nu: float, s: SphericalMomentum) -> FisherMatrix:
    """Pointwise Fisher density along l = rho . kappa / |kappa| (without the gamma^2 factor)."""
    w = math.exp(-0.5 * l * l) / math.sqrt(2.0 * math.pi) * beta(nu, s.magnitude * l)
    m2 = s.magnitude**2
    return FisherMatrix(np.diag(w * np.array([l * l, m2, m2 * math.sin(s.theta) ** 2])), Basis.SPHERICAL)


def fisher_density_curves(l: np.ndarray, nu: float, s: SphericalMomentum, normalized: bool = True) -> np.ndarray:
    """Diagonal Fisher density on a grid of l, shape (len(l), 3); divided by the QFI diagonal if ``normalized``."""
    l = np.asarray(l, dtype=float)
    w = np.exp(-0.5 * l * l) / math.sqrt(2.0 * math.pi) * beta(nu, s.magnitude * l)
    m2 = s.magnitude**2
    cols = np.stack([l * l, np.full_like(l, m2), np.full_like(l, m2 * math.sin(s.theta) ** 2)], axis=-1)
    out = w[:, None] * cols
    if normalized:
        q = np.diag(qfi(s).entries)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(q > 0, out / np.where(q > 0, q, 1.0), 0.0)
    return out


def _cartesian_coefficients(nu, gamma, kmag, quad) -> tuple[float, float, float]:
    res = beta_moments(nu, kmag, quad)
    i0, i2 = res.value
    g2 = gamma * gamma
    return g2 * i0, g2 * (i2 - i0), g2 * res.error_estimate


def fisher_cartesian(
    nu: float, gamma: float, kappa, quad: QuadratureSpec | None = None
) -> FisherMatrix:
    """Fisher information for the Cartesian components of kappa.

    At kappa = 0 the projector term is dropped and the isotropic part uses
    beta_nu(0), i.e. zero for nu < 1 and gamma^2 * Id at nu = 1 by continuity.
    """
    check_unit_interval("gamma", gamma)
    k = np.asarray(kappa, dtype=float).reshape(3)
    kmag = float(np.linalg.norm(k))
    f_i, f_k, err = _cartesian_coefficients(nu, gamma, kmag, quad)
    if kmag == 0.0:
        return FisherMatrix(f_i * np.eye(3), Basis.CARTESIAN, err)
    u = k / kmag
    return FisherMatrix(f_i * np.eye(3) + f_k * np.outer(u, u), Basis.CARTESIAN, err)


def _axis_index(axis: int) -> int:
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis}")
    return axis - 1


def fisher_cartesian_inverse_diag(
    nu: float, gamma: float, kappa, axis: int, quad: QuadratureSpec | None = None
) -> float:
    """Diagonal element of the inverse Cartesian Fisher matrix, in closed form.

    Returns ``inf`` (with a :class:`SingularFisherWarning`) when the matrix is singular.
    """
    a = _axis_index(axis)
    k = np.asarray(kappa, dtype=float).reshape(3)
    kmag = float(np.linalg.norm(k))
    f_i, f_k, _ = _cartesian_coefficients(nu, gamma, kmag, quad)
    if f_i <= 0.0 or kmag == 0.0 or f_i + f_k <= 0.0:
        warnings.warn(
            SingularFisherWarning(
                f"Cartesian Fisher matrix is singular (nu={nu}, gamma={gamma}, |kappa|={kmag:g}); "
                "no unbiased estimator has finite variance"
            ),
            stacklevel=2,
        )
        return math.inf
    return (1.0 - f_k / (f_i + f_k) * k[a] ** 2 / kmag**2) / f_i


def fisher_single_param(
    nu_eff: float, gamma: float, param: float, quad: QuadratureSpec | None = None
) -> float:
    """Fisher information for one kappa component when only its conjugate coordinate is resolved."""
    check_unit_interval("gamma", gamma)
    res = beta_moments(nu_eff, abs(param), quad)
    return gamma * gamma * float(res.value[1])


def fisher_known_nuisance(
    nu: float, gamma: float, kappa, axis: int, quad: QuadratureSpec | None = None
) -> float:
    """Fisher information for one component when the other two are known exactly."""
    a = _axis_index(axis)
    k = np.asarray(kappa, dtype=float).reshape(3)
    kmag = float(np.linalg.norm(k))
    f_i, f_k, _ = _cartesian_coefficients(nu, gamma, kmag, quad)
    if kmag == 0.0:
        return f_i
    return f_i + f_k * k[a] ** 2 / kmag**2


def spherical_jacobian(s: SphericalMomentum) -> np.ndarray:
    """J[:, j] = d kappa / d(|kappa|, theta, phi)_j, so F_spherical = J^T F_cartesian J."""
    return s.basis().T


class MomentCheck(NamedTuple):
    """Inner products of the probe state and its parameter derivatives.

    diag:    <d_j Phi | d_j Phi>                    for j = |kappa|, theta, phi
    offdiag: <d_i Phi | d_j Phi>                    for (|kappa|,theta), (theta,phi), (phi,|kappa|)
    braket:  Im <Phi | d_j Phi>                     (the overlaps are purely imaginary)
    error:   largest cubature error estimate
    """

    diag: np.ndarray
    offdiag: np.ndarray
    braket: np.ndarray
    error: float

    def qfi_matrix(self) -> np.ndarray:
        """Q_ij = 4 Re[<d_i|d_j> - <d_i|Phi><Phi|d_j>]."""
        g = np.diag(self.diag)
        (g[0, 1], g[1, 2], g[2, 0]) = self.offdiag
        g[1, 0], g[2, 1], g[0, 2] = g[0, 1], g[1, 2], g[2, 0]
        return 4.0 * (g - np.outer(self.braket, self.braket))

    def commutators(self) -> np.ndarray:
        """Tr[rho [L_i, L_j]] = 8 Im[<d_i|Phi><Phi|d_j> - <d_i|d_j>] for the three pairs."""
        b = 1j * self.braket  # <Phi | d_j Phi>
        pairs = ((0, 1), (1, 2), (2, 0))
        g = {(0, 1): self.offdiag[0], (1, 2): self.offdiag[1], (2, 0): self.offdiag[2]}
        return np.array([8.0 * (np.conj(b[i]) * b[j] - g[(i, j)]).imag for i, j in pairs])


def qfi_moment_check(s: SphericalMomentum, tol: float = 1e-10) -> MomentCheck:
    """Evaluate the Gaussian-moment inner products behind the QFI by 3D cubature.

    Writing the phase of the probe as rho . kappa / 2, each derivative
    d_j |Phi> multiplies the amplitude by -i (rho . v_j) / 2 with
    v_j = d kappa / d(param_j). The inner products are Gaussian moments in rho.
    """
    v = s.basis()  # rows v_j

    def integrand(rho):
        p = rho @ v.T  # (n, 3): rho . v_j
        quad_terms = 0.25 * np.stack(
            [p[:, 0] ** 2, p[:, 1] ** 2, p[:, 2] ** 2, p[:, 0] * p[:, 1], p[:, 1] * p[:, 2], p[:, 2] * p[:, 0]],
            axis=-1,
        )
        lin_terms = -0.5 * p
        return np.concatenate([quad_terms, lin_terms], axis=-1)

    res = integrate_gaussian_3d(integrand, tol=tol)
    vals = np.asarray(res.value)
    return MomentCheck(vals[0:3], vals[3:6], vals[6:9], res.error_estimate)
