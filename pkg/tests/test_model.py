from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from hom3d.errors import DomainError
from hom3d.model import (
    LEGACY_MARGINAL_PREFACTOR,
    Outcome,
    SensingConfig,
    beta,
    detection_outcome_probs,
    effective_distinguishability,
    log_prob_density,
    prob_density,
    prob_marginal_1d,
    zeta,
)
from hom3d.quadrature import integrate_gaussian_3d

unit = st.floats(0.0, 1.0)


def test_outcome_signs():
    assert Outcome.COINCIDENCE.alpha == -1
    assert Outcome.BUNCH.alpha == 1
    with pytest.raises(DomainError):
        _ = Outcome.ONE_PHOTON.alpha


def test_hom_dip_at_origin():
    cfg = SensingConfig(1.0, 1.0, [0.0, 0.0, 0.0])
    assert prob_density(Outcome.COINCIDENCE, np.zeros(3), cfg) == 0.0
    assert prob_density(Outcome.BUNCH, np.zeros(3), cfg) == pytest.approx((2 * math.pi) ** -1.5)


@given(unit, st.floats(-50, 50))
def test_zeta_partition(nu, x):
    assert zeta(Outcome.COINCIDENCE, nu, x) + zeta(Outcome.BUNCH, nu, x) == pytest.approx(1.0)


def test_total_probability_is_gamma_squared():
    cfg = SensingConfig(0.7, 0.8, [0.0, 0.0, 4.0])
    gauss = (2 * math.pi) ** -1.5

    def f(rho):
        w = gauss * np.exp(-0.5 * np.sum(rho * rho, axis=-1))
        return np.stack([prob_density(o, rho, cfg) / w for o in (Outcome.COINCIDENCE, Outcome.BUNCH)], axis=-1)

    res = integrate_gaussian_3d(f, tol=1e-10)
    assert_allclose(res.value, [0.64 * (1 - 0.7 * math.exp(-8)) / 2, 0.64 * (1 + 0.7 * math.exp(-8)) / 2], rtol=1e-9)


def test_log_density_consistent():
    cfg = SensingConfig(0.6, 0.9, [1.0, -2.0, 0.5])
    rho = np.random.default_rng(0).normal(size=(10, 3))
    for o in (Outcome.COINCIDENCE, Outcome.BUNCH):
        assert_allclose(np.exp(log_prob_density(o, rho, cfg)), prob_density(o, rho, cfg), rtol=1e-12)
    dip = SensingConfig(1.0, 1.0, [0, 0, 0])
    assert np.isfinite(log_prob_density(Outcome.COINCIDENCE, np.zeros(3), dip))


def test_beta_values():
    assert beta(0.0, 1.3) == 0.0
    assert beta(1.0, 0.0) == 1.0
    assert beta(1.0, 2.0 * math.pi) == 1.0
    assert beta(0.5, 0.0) == 0.0
    x = np.linspace(-10, 10, 101)
    assert_allclose(beta(1.0, x), 1.0)
    nu = 0.8
    direct = nu**2 * np.sin(x) ** 2 / (1 - nu**2 * np.cos(x) ** 2)
    assert_allclose(beta(nu, x), direct, rtol=1e-12)


@given(unit, st.floats(-100, 100))
def test_beta_bounded(nu, x):
    b = beta(nu, x)
    assert -1e-15 <= b <= nu * nu + 1e-12 or nu == 1.0


def test_effective_distinguishability():
    assert effective_distinguishability(0.8, [0, 0, 4], 3) == pytest.approx(0.8)
    assert effective_distinguishability(0.8, [1, 0, 4], 3) == pytest.approx(0.8 * math.exp(-0.5))
    assert effective_distinguishability(1.0, [0, 0, 0], 1) == 1.0
    with pytest.raises(DomainError):
        effective_distinguishability(0.8, [0, 0, 1], 4)


def test_marginal_is_exact_projection():
    kappa = np.array([0.6, -0.4, 1.5])
    cfg = SensingConfig(0.75, 1.0, kappa)
    nu_eff = effective_distinguishability(0.75, kappa, 3)
    c = 0.37
    for o in (Outcome.COINCIDENCE, Outcome.BUNCH):
        direct = integrate.dblquad(
            lambda y, x: prob_density(o, np.array([x, y, c]), cfg), -10, 10, -10, 10, epsabs=1e-13
        )[0]
        assert prob_marginal_1d(o, c, kappa[2], nu_eff, 1.0) == pytest.approx(direct, rel=1e-8)


def test_marginal_normalization_and_legacy_constant():
    total = sum(
        integrate.quad(lambda c: prob_marginal_1d(o, c, 4.0, 0.8, 0.9), -12, 12, limit=200)[0]
        for o in (Outcome.COINCIDENCE, Outcome.BUNCH)
    )
    assert total == pytest.approx(0.81, rel=1e-10)
    a = prob_marginal_1d(Outcome.BUNCH, 0.3, 4.0, 0.8, 1.0, legacy_prefactor=True)
    b = prob_marginal_1d(Outcome.BUNCH, 0.3, 4.0, 0.8, 1.0)
    assert a / b == pytest.approx(LEGACY_MARGINAL_PREFACTOR * 2 * math.sqrt(2 * math.pi))


@given(unit)
def test_loss_channel_sums_to_one(g):
    p0, p1, p2 = detection_outcome_probs(g)
    assert p0 + p1 + p2 == pytest.approx(1.0)
    assert p2 == pytest.approx(g * g)


def test_config_validation_and_round_trip():
    with pytest.raises(DomainError):
        SensingConfig(1.1, 1.0, [0, 0, 0])
    with pytest.raises(DomainError):
        SensingConfig(0.5, -0.1, [0, 0, 0])
    with pytest.raises(DomainError):
        SensingConfig(0.5, 1.0, [0, np.inf, 0])
    cfg = SensingConfig(0.5, 0.9, [1.0, 2.0, 3.0])
    back = SensingConfig.from_dict(cfg.to_dict())
    assert back.nu == cfg.nu and back.gamma == cfg.gamma
    assert_allclose(back.kappa, cfg.kappa)
