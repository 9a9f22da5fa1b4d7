from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hom3d.errors import QuadratureError
from hom3d.quadrature import (
    QuadratureRule,
    QuadratureSpec,
    gauss_hermite_3d_fixed,
    integrate_gaussian_1d,
    integrate_gaussian_3d,
)


def test_1d_trivial_moments():
    assert integrate_gaussian_1d(lambda l: np.ones_like(l)).value == pytest.approx(1.0, abs=1e-12)
    assert integrate_gaussian_1d(lambda l: l * l).value == pytest.approx(1.0, abs=1e-12)
    assert integrate_gaussian_1d(lambda l: l**4).value == pytest.approx(3.0, abs=1e-10)


@pytest.mark.parametrize("k", [0.5, 4.0, 12.0])
def test_1d_characteristic_function(k):
    res = integrate_gaussian_1d(lambda l: np.cos(k * l), oscillation_scale=2 * math.pi / k)
    assert res.value == pytest.approx(math.exp(-k * k / 2), abs=1e-12)
    assert 0.0 <= res.error_estimate <= 1e-9


def test_1d_vector_valued():
    res = integrate_gaussian_1d(lambda l: np.stack([l * l, np.cos(4 * l)], axis=-1), oscillation_scale=math.pi / 2)
    assert_allclose(res.value, [1.0, math.exp(-8)], atol=1e-12)


def test_1d_hermite_rule():
    spec = QuadratureSpec(rule=QuadratureRule.GAUSS_HERMITE, tol=1e-12)
    res = integrate_gaussian_1d(lambda l: np.cos(2 * l), spec=spec)
    assert res.value == pytest.approx(math.exp(-2), abs=1e-12)


def test_1d_node_cap():
    spec = QuadratureSpec(tol=1e-300, max_nodes=500)
    with pytest.raises(QuadratureError) as info:
        integrate_gaussian_1d(lambda l: np.sign(l - 0.1234), spec=spec)
    assert info.value.achieved > 0


def test_3d_moments():
    assert integrate_gaussian_3d(lambda r: np.ones(len(r))).value == pytest.approx(1.0, abs=1e-12)
    k = np.array([1.0, -2.0, 0.5])
    res = integrate_gaussian_3d(lambda r: (r @ k) ** 2 / (k @ k))
    assert res.value == pytest.approx(1.0, abs=1e-12)
    a = np.array([1.0, 1.0, 0.0])
    b = np.array([1.0, -1.0, 2.0])
    assert integrate_gaussian_3d(lambda r: (r @ a) * (r @ b)).value == pytest.approx(0.0, abs=1e-12)


def test_3d_oscillatory():
    k = np.array([0.0, 0.0, 4.0])
    res = integrate_gaussian_3d(lambda r: np.cos(r @ k), tol=1e-10)
    assert res.value == pytest.approx(math.exp(-8), abs=1e-10)


def test_product_and_native_paths_agree():
    f1 = lambda x: np.cos(1.3 * x) * (1 + x * x)  # noqa: E731
    one_d = integrate_gaussian_1d(f1, oscillation_scale=2 * math.pi / 1.3).value
    g = lambda x: np.exp(0.2 * x)  # noqa: E731
    two = integrate_gaussian_1d(g).value
    native = gauss_hermite_3d_fixed(lambda r: f1(r[:, 0]) * g(r[:, 1]) * g(r[:, 2]), 40)
    assert native == pytest.approx(one_d * two * two, abs=1e-10)


def test_3d_node_cap():
    with pytest.raises(QuadratureError):
        integrate_gaussian_3d(lambda r: np.cos(30 * r[:, 0]), tol=1e-14, max_nodes=40**3)
