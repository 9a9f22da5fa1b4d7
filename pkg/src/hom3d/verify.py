"""Equivalence checks run by ``hom3d verify``.

Each check returns a record ``{name, passed, value, threshold}``. The set is
small enough to finish in well under a minute.
"""

from __future__ import annotations

import math

import numpy as np

from .fisher import fisher_spherical, qfi, qfi_moment_check
from .geometry import CovarianceMatrix, SphericalMomentum
from .model import Outcome
from .oracle import (
    GaussianWavePacket,
    PairState,
    joint_probability,
    joint_probability_closed,
    perturbation_deviation,
    reduced_probability_model,
    reduced_probability_numeric,
)

REFERENCE_TRIPLES = (
    (3.0, math.pi / 5, math.pi / 4),
    (4.0, math.pi / 4, math.pi / 3),
    (5.0, math.pi / 3, math.pi / 5),
)


def _record(name: str, value: float, threshold: float, passed: bool | None = None) -> dict:
    ok = bool(value <= threshold) if passed is None else bool(passed)
    return {"name": name, "passed": ok, "value": float(value), "threshold": float(threshold)}


def _reference_sigma() -> CovarianceMatrix:
    a = np.array([[1.0, 0.2, -0.1], [0.2, 0.8, 0.15], [-0.1, 0.15, 1.3]])
    return CovarianceMatrix(a @ a.T)


def run_checks(tol: float = 1e-6, seed: int = 2024) -> list[dict]:
    rng = np.random.default_rng(seed)
    out = []

    worst = 0.0
    for gamma in (0.3, 1.0):
        for t in REFERENCE_TRIPLES:
            s = SphericalMomentum(*t)
            f = fisher_spherical(1.0, gamma, s).entries
            worst = max(worst, float(np.max(np.abs(f - gamma**2 * qfi(s).entries))))
    out.append(_record("fisher_nu1_equals_gamma2_qfi", worst, max(tol, 1e-8)))

    worst = 0.0
    for t in REFERENCE_TRIPLES:
        s = SphericalMomentum(*t)
        mc = qfi_moment_check(s)
        worst = max(worst, float(np.max(np.abs(mc.qfi_matrix() - qfi(s).entries))))
        worst = max(worst, float(np.max(np.abs(mc.commutators()))))
    out.append(_record("qfi_moment_certificate", worst, tol))

    worst = 0.0
    for t in REFERENCE_TRIPLES:
        s = SphericalMomentum(*t)
        for nu in (0.0, 0.5, 0.9, 1.0):
            ev = np.linalg.eigvalsh(qfi(s).entries - fisher_spherical(nu, 1.0, s).entries)[0]
            worst = max(worst, -ev / np.trace(qfi(s).entries))
    out.append(_record("qfi_dominates_fisher", worst, 1e-10))

    sigma0 = _reference_sigma()
    dk = np.array([0.9, -0.6, 1.1])
    state = PairState(GaussianWavePacket(sigma0, 0.5 * dk), GaussianWavePacket(sigma0, -0.5 * dk), 0.75)
    r1 = rng.normal(size=(50, 3))
    r2 = rng.normal(size=(50, 3))
    worst = 0.0
    for outcome in (Outcome.COINCIDENCE, Outcome.BUNCH):
        a = joint_probability(state, outcome, r1, r2)
        b = joint_probability_closed(state, outcome, r1, r2)
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    out.append(_record("joint_amplitudes_vs_expanded_form", worst, 1e-10))

    worst = 0.0
    for i in range(8):
        outcome = (Outcome.COINCIDENCE, Outcome.BUNCH)[i % 2]
        dr = rng.normal(size=3) @ (sigma0 + sigma0).sqrt
        num = reduced_probability_numeric(state, outcome, dr)
        mod = float(reduced_probability_model(state, outcome, dr))
        worst = max(worst, abs(num - mod) / mod)
    out.append(_record("reduced_density_equal_packets", worst, max(tol, 1e-9)))

    direction = np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.1]])
    points = rng.normal(size=(4, 3))
    d1 = perturbation_deviation(sigma0, direction, 0.2, dk, 0.8, points)
    d2 = perturbation_deviation(sigma0, direction, 0.1, dk, 0.8, points)
    ratio = d1 / d2
    out.append(_record("covariance_mismatch_is_second_order", ratio, 5.0, passed=3.0 <= ratio <= 5.0))
    return out
