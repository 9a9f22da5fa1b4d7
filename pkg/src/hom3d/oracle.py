"""Brute-force reference model built from the full two-photon wavefunction.

Nothing here is used on estimation paths. The module rebuilds the detection
probabilities from Gaussian wave-packet amplitudes and beam-splitter mixing,
integrates out the mean detection position numerically, and compares the
result with the closed forms used by :mod:`hom3d.model`. It is deliberately
direct and unoptimized.

Conventions: photon j enters input port j with spatial amplitude psi_j and an
internal (non-spatial) state; photon 1 is in internal mode ``a`` and photon 2
in ``sqrt(nu) a + sqrt(1 - nu) b``. For outcome A the photon at ``r1`` leaves
output port 1 and the one at ``r2`` leaves port 2. For outcome B both leave
the same port (summed over the two ports).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureError
from .geometry import CovarianceMatrix
from .model import Outcome, SensingConfig, check_unit_interval, prob_density

__all__ = [
    "GaussianWavePacket",
    "PairState",
    "beam_splitter_matrix",
    "joint_probability",
    "joint_probability_closed",
    "outcome_probabilities",
    "reduced_probability_closed",
    "reduced_probability_model",
    "reduced_probability_numeric",
]

HALF_WIDTH_SIGMAS = 6.0
ORDERS = (16, 24, 32, 48, 64, 96)
RTOL = 1e-9


def beam_splitter_matrix() -> np.ndarray:
    """Balanced beam splitter U[out, in]: a_in_j -> sum_p U[p, j] a_out_p."""
    return np.array([[1.0, -1.0], [1.0, 1.0]]) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class GaussianWavePacket:
    """psi(r) = ((2 pi)^3 det S)^{-1/4} exp(-(r-mu)^T S^{-1} (r-mu) / 4) exp(-i r . k)."""

    covariance: CovarianceMatrix
    wavevector: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not isinstance(self.covariance, CovarianceMatrix):
            object.__setattr__(self, "covariance", CovarianceMatrix(self.covariance))
        object.__setattr__(self, "wavevector", np.asarray(self.wavevector, dtype=float).reshape(3))
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(3))

    def amplitude(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        d = r - self.mean
        q = np.einsum("...i,ij,...j->...", d, self.covariance.inverse, d)
        norm = ((2.0 * math.pi) ** 3 * self.covariance.det) ** -0.25
        return norm * np.exp(-0.25 * q) * np.exp(-1j * (r @ self.wavevector))


@dataclass(frozen=True, eq=False)
class PairState:
    packet1: GaussianWavePacket
    packet2: GaussianWavePacket
    nu: float

    def __post_init__(self):
        check_unit_interval("nu", self.nu)

    @property
    def delta_k(self) -> np.ndarray:
        return self.packet1.wavevector - self.packet2.wavevector

    def internal_modes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([1.0, 0.0]), np.array([math.sqrt(self.nu), math.sqrt(1.0 - self.nu)])


_PORTS = {
    Outcome.COINCIDENCE: ((0, 1), (1, 0)),
    Outcome.BUNCH: ((0, 0), (1, 1)),
}


def joint_probability(state: PairState, outcome: Outcome, r1, r2) -> np.ndarray:
    """Density of detecting ``outcome`` with photons at r1 and r2, from the amplitudes.

    Each ordered port assignment (p at r1, q at r2) contributes
    |U[p,1] U[q,2] psi1(r1) psi2(r2) c1 c2' + U[q,1] U[p,2] psi1(r2) psi2(r1) c1' c2|^2
    summed over internal modes; the two assignments of an outcome are averaged
    so that the result is a density over ordered (r1, r2) pairs.
    """
    outcome = Outcome(outcome)
    U = beam_splitter_matrix()
    c1, c2 = state.internal_modes()
    p1r1 = state.packet1.amplitude(r1)
    p2r2 = state.packet2.amplitude(r2)
    p1r2 = state.packet1.amplitude(r2)
    p2r1 = state.packet2.amplitude(r1)
    total = 0.0
    for p, q in _PORTS[outcome]:
        for m, mp in product(range(2), repeat=2):
            amp = (
                U[p, 0] * U[q, 1] * p1r1 * p2r2 * c1[m] * c2[mp]
                + U[q, 0] * U[p, 1] * p1r2 * p2r1 * c1[mp] * c2[m]
            )
            total = total + np.abs(amp) ** 2
    return 0.5 * total


def joint_probability_closed(state: PairState, outcome: Outcome, r1, r2) -> np.ndarray:
    """Expanded form 1/4 [|psi1(r1) psi2(r2)|^2 + |psi2(r1) psi1(r2)|^2 + 2 alpha nu Re(...)]."""
    a = Outcome(outcome).alpha
    p1r1 = state.packet1.amplitude(r1)
    p2r2 = state.packet2.amplitude(r2)
    p1r2 = state.packet1.amplitude(r2)
    p2r1 = state.packet2.amplitude(r1)
    cross = np.real(p2r2 * p1r1 * np.conj(p2r1) * np.conj(p1r2))
    return 0.25 * (np.abs(p1r1 * p2r2) ** 2 + np.abs(p2r1 * p1r2) ** 2 + 2.0 * a * state.nu * cross)


@lru_cache(maxsize=None)
def _legendre(n: int):
    return leggauss(n)


def _box_rule(center: np.ndarray, half: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _legendre(order)
    axes = [center[i] + half[i] * x for i in range(3)]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    wt = np.einsum("i,j,k->ijk", w, w, w).ravel() * float(np.prod(half))
    return g, wt


@dataclass(frozen=True)
class CubatureSpec:
    half_width_sigmas: float = HALF_WIDTH_SIGMAS
    orders: tuple[int, ...] = ORDERS
    rtol: float = RTOL


def reduced_probability_numeric(
    state: PairState, outcome: Outcome, delta_r, spec: CubatureSpec | None = None
) -> float:
    """Integrate :func:`joint_probability` over the mean position at fixed r1 - r2 = delta_r.

    Uses tensor Gauss-Legendre rules on a box of ``half_width_sigmas`` pooled
    standard deviations around the packet mean, raising the order until two
    successive results agree to ``rtol``.
    """
    spec = spec or CubatureSpec()
    dr = np.asarray(delta_r, dtype=float).reshape(3)
    pooled = 0.5 * (state.packet1.covariance.entries + state.packet2.covariance.entries)
    half = spec.half_width_sigmas * np.sqrt(np.diag(pooled))
    center = 0.5 * (state.packet1.mean + state.packet2.mean)
    prev = None
    err = math.inf
    for order in spec.orders:
        rm, wt = _box_rule(center, half, order)
        val = float(wt @ joint_probability(state, outcome, rm + 0.5 * dr, rm - 0.5 * dr))
        if prev is not None:
            err = abs(val - prev)
            if err <= spec.rtol * max(abs(val), 1e-300):
                return val
        prev = val
    raise QuadratureError("reduced probability cubature did not converge", err)


def reduced_probability_closed(state: PairState, outcome: Outcome, delta_r) -> float:
    """Exact reduced density for packets sharing a mean, carrying the beat-visibility envelope.

    With S = Sigma1 + Sigma2 and M = Sigma1^{-1} + Sigma2^{-1}:
    [exp(-dr^T S^{-1} dr / 2) + alpha nu exp(-dr^T M dr / 8) cos(dr . dk)] / (2 sqrt((2 pi)^3 det S))
    """
    a = Outcome(outcome).alpha
    dr = np.asarray(delta_r, dtype=float)
    S = state.packet1.covariance + state.packet2.covariance
    M = state.packet1.covariance.inverse + state.packet2.covariance.inverse
    env = np.exp(-0.5 * np.einsum("...i,ij,...j->...", dr, S.inverse, dr))
    vis = np.exp(-0.125 * np.einsum("...i,ij,...j->...", dr, M, dr))
    beat = np.cos(dr @ state.delta_k)
    return (env + a * state.nu * vis * beat) / (2.0 * math.sqrt((2.0 * math.pi) ** 3 * S.det))


def reduced_probability_model(state: PairState, outcome: Outcome, delta_r) -> float:
    """The dimensionless model density mapped back to delta_r, with Sigma = Sigma1 + Sigma2 and gamma = 1."""
    S = state.packet1.covariance + state.packet2.covariance
    kappa = S.sqrt @ state.delta_k
    rho = np.asarray(delta_r, dtype=float) @ S.inv_sqrt
    cfg = SensingConfig(nu=state.nu, gamma=1.0, kappa=kappa)
    return prob_density(outcome, rho, cfg) / math.sqrt(S.det)


def outcome_probabilities(state: PairState, order: int = 12) -> dict[Outcome, float]:
    """Integrate the joint density of each outcome over (r1, r2) with a 6D Gauss-Hermite rule.

    The rule is taken in coordinates whitened by each packet's covariance;
    the remaining integrand is smooth when the packets are similar.
    """
    x, w = hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    g = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    wg = np.einsum("i,j,k->ijk", w, w, w).ravel()
    s1 = state.packet1.covariance
    s2 = state.packet2.covariance

    def normal_pdf(r, cov, mu):
        d = r - mu
        q = np.einsum("...i,ij,...j->...", d, cov.inverse, d)
        return np.exp(-0.5 * q) / math.sqrt((2.0 * math.pi) ** 3 * cov.det)

    r1 = state.packet1.mean + g @ s1.sqrt
    out = {}
    for outcome in (Outcome.COINCIDENCE, Outcome.BUNCH):
        total = 0.0
        for i in range(g.shape[0]):
            r2 = state.packet2.mean + g @ s2.sqrt
            base = normal_pdf(r1[i], s1, state.packet1.mean) * normal_pdf(r2, s2, state.packet2.mean)
            vals = joint_probability(state, outcome, np.broadcast_to(r1[i], r2.shape), r2)
            total += wg[i] * float(wg @ (vals / base))
        out[outcome] = total
    return out


def perturbed_pair(
    sigma_mean: CovarianceMatrix, direction: np.ndarray, eps: float, delta_k, nu: float
) -> PairState:
    """Packets with Sigma_{1,2} = Sigma_mean +/- eps D / 2 (so Sigma1 - Sigma2 = eps D)."""
    d = 0.5 * eps * np.asarray(direction, dtype=float)
    dk = np.asarray(delta_k, dtype=float)
    return PairState(
        GaussianWavePacket(CovarianceMatrix(sigma_mean.entries + d), 0.5 * dk),
        GaussianWavePacket(CovarianceMatrix(sigma_mean.entries - d), -0.5 * dk),
        nu,
    )


def perturbation_deviation(
    sigma_mean: CovarianceMatrix, direction, eps: float, delta_k, nu: float, points: np.ndarray, numeric: bool = True
) -> float:
    """Largest |P_exact - P_model| over ``points`` (rows of delta_r, both outcomes), relative to the peak density."""
    state = perturbed_pair(sigma_mean, direction, eps, delta_k, nu)
    peak = 1.0 / math.sqrt((2.0 * math.pi) ** 3 * (state.packet1.covariance + state.packet2.covariance).det)
    worst = 0.0
    for outcome in (Outcome.COINCIDENCE, Outcome.BUNCH):
        for dr in points:
            exact = (
                reduced_probability_numeric(state, outcome, dr)
                if numeric
                else float(reduced_probability_closed(state, outcome, dr))
            )
            model = float(reduced_probability_model(state, outcome, dr))
            worst = max(worst, abs(exact - model) / peak)
    return worst
