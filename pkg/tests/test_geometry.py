import math

import numpy as np
import pytest

from oracles import christoffel_from_metric, mercator_by_quadrature
from volfield.fields import latitude, meridian
from volfield.first_order import a_components
from volfield.geometry import (
    ConformalCoordinate,
    ConvergenceError,
    DomainError,
    SphereChart,
    christoffel,
    conformal_factor,
    covariant_derivative,
    gauss_curvature,
    mercator_x,
    theta_of_x,
)


@pytest.mark.parametrize("theta,r,expected", [
    (math.pi / 2, 1.0, 1.0),
    (math.pi / 6, 2.0, 1.0),
    (math.pi / 4, 1.0, 0.5),
])
def test_conformal_factor_examples(theta, r, expected):
    assert conformal_factor(theta, r) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("theta", [0.0, math.pi, -0.1, 4.0])
def test_pointwise_geometry_rejects_poles(theta):
    with pytest.raises(DomainError):
        conformal_factor(theta)
    with pytest.raises(DomainError):
        mercator_x(theta)
    with pytest.raises(DomainError):
        christoffel(theta)


def test_chart_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        SphereChart(0.0)
    with pytest.raises(ValueError):
        conformal_factor(1.0, -1.0)


def test_conformal_factor_positive():
    theta = np.linspace(1e-6, math.pi - 1e-6, 1001)
    assert np.all(conformal_factor(theta, 0.3) > 0)


def test_mercator_examples():
    assert mercator_x(math.pi / 2) == pytest.approx(0.0, abs=1e-15)
    assert theta_of_x(0.0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert mercator_x(math.pi / 3) == pytest.approx(math.log(math.tan(math.pi / 6)), rel=1e-14)


@pytest.mark.parametrize("theta", [0.05, 0.4, math.pi / 3, 2.0, 3.0])
def test_mercator_matches_quadrature(theta):
    assert mercator_x(theta) == pytest.approx(mercator_by_quadrature(theta), abs=1e-11)


def test_mercator_round_trip():
    theta = np.linspace(0.01, math.pi - 0.01, 2001)
    assert np.max(np.abs(theta_of_x(mercator_x(theta)) - theta)) < 1e-12


def test_chart_relation_dtheta_equals_sin_dx():
    x = np.linspace(-3, 3, 61)
    h = 1e-6
    dtheta_dx = (theta_of_x(x + h) - theta_of_x(x - h)) / (2 * h)
    assert np.allclose(dtheta_dx, np.sin(theta_of_x(x)), atol=1e-9)


def test_conformal_coordinate():
    c = ConformalCoordinate.from_polar(math.pi / 3, 1.25)
    assert c.theta == pytest.approx(math.pi / 3, abs=1e-14)
    assert c.z == complex(c.x, 1.25)
    assert c.conformal_factor(2.0) == pytest.approx(4 * 0.75)


def test_christoffel_examples():
    eq = christoffel(math.pi / 2)
    assert eq.mixed == pytest.approx(0.0, abs=1e-16)
    assert eq.phiphi == pytest.approx(0.0, abs=1e-16)
    q = christoffel(math.pi / 4)
    assert q.mixed == pytest.approx(1.0, rel=1e-14)
    assert q.phiphi == pytest.approx(-0.5, rel=1e-14)
    assert q.thetatheta == 0.0


@pytest.mark.parametrize("theta", [0.2, 0.7, 1.3, 2.1, 2.9])
def test_christoffel_matches_metric_differences(theta):
    oracle = christoffel_from_metric(theta)
    table = christoffel(theta)
    # Gamma^phi_{theta phi} = Gamma^phi_{phi theta} = cot, Gamma^theta_{phi phi} = -cos sin
    assert table.mixed == pytest.approx(oracle[1, 0, 1], abs=1e-6)
    assert table.mixed == pytest.approx(oracle[1, 1, 0], abs=1e-6)
    assert table.phiphi == pytest.approx(oracle[0, 1, 1], abs=1e-6)
    assert abs(oracle[0, 0, 0]) < 1e-6 and abs(oracle[1, 1, 1]) < 1e-6


def test_christoffel_symmetry_exact():
    arr = christoffel(0.9).as_array()
    assert np.array_equal(arr[1, 0, 1], arr[1, 1, 0])


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_gauss_curvature_constant(r):
    rng = np.random.default_rng(7)
    theta = rng.uniform(0.2, math.pi - 0.2, 20)
    phi = rng.uniform(0, 2 * math.pi, 20)
    k = gauss_curvature(theta, r, phi=phi)
    assert np.max(np.abs(k - 1.0 / r**2)) < 1e-6


def test_gauss_curvature_richardson_improves():
    plain_err, rich_err = [], []
    from volfield import geometry

    for h in (0.04, 0.02):
        x0 = mercator_x(math.pi / 2)
        f = lambda x: np.log(conformal_factor(theta_of_x(x)))
        plain_err.append(abs(-2 * 0.25 * geometry.second_difference(f, x0, h, richardson=False) - 1.0))
        rich_err.append(abs(gauss_curvature(math.pi / 2, 1.0, h) - 1.0))
    assert all(r < p for r, p in zip(rich_err, plain_err))
    assert plain_err[1] < plain_err[0] / 3


def test_gauss_curvature_step_underflow():
    with pytest.raises(ConvergenceError):
        gauss_curvature(1.0, 1.0, h=1e-9)


def test_gauss_curvature_pole():
    with pytest.raises(DomainError):
        gauss_curvature(0.0)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_meridian_parallel_along_meridians(k):
    f = meridian(k, 0.4)
    t, p = np.meshgrid(np.linspace(0.1, 3.0, 15), np.linspace(0.0, 6.2, 15), indexing="ij")
    out = covariant_derivative(f, (1.0, 0.0), t, p)
    assert max(np.max(np.abs(out[0])), np.max(np.abs(out[1]))) < 1e-6


def test_latitude_parallel_along_parallels():
    f = latitude(0.3)
    t, p = np.meshgrid(np.linspace(0.1, 3.0, 15), np.linspace(0.2, 6.0, 15), indexing="ij")
    out = covariant_derivative(f, (0.0, 1.0), t, p)
    assert max(np.max(np.abs(out[0])), np.max(np.abs(out[1]))) < 1e-6


@pytest.mark.parametrize("theta,phi", [(0.5, 1.0), (1.2, 3.0), (2.5, 5.5)])
def test_latitude_theta_derivative_is_y_multiple(theta, phi):
    f = latitude()
    a, b = f.coefficients(theta, phi)
    rate = phi * math.sin(theta)
    out = covariant_derivative(f, (1.0, 0.0), theta, phi)
    # Y = (-b/r) d_theta + (a/(r sin)) d_phi, r = 1
    assert out[0] == pytest.approx(rate * -b, abs=1e-6)
    assert out[1] == pytest.approx(rate * a / math.sin(theta), abs=1e-6)


def test_covariant_derivative_latitude_slit():
    with pytest.raises(DomainError):
        covariant_derivative(latitude(), (0.0, 1.0), 1.0, 0.0)


def test_covariant_derivative_additive_in_direction():
    rng = np.random.default_rng(11)
    f = meridian(2, 0.1, ((0.2, -0.1),))
    for _ in range(20):
        t, p = rng.uniform(0.3, 2.8), rng.uniform(0, 2 * math.pi)
        u, v = rng.normal(size=2), rng.normal(size=2)
        lhs = covariant_derivative(f, tuple(u + v), t, p)
        ru, rv = covariant_derivative(f, tuple(u), t, p), covariant_derivative(f, tuple(v), t, p)
        assert abs(lhs[0] - ru[0] - rv[0]) < 1e-8
        assert abs(lhs[1] - ru[1] - rv[1]) < 1e-8


def test_covariant_derivative_agrees_with_a_components():
    f = meridian(1, 0.0, ((0.1, 0.2),))
    t, p = 1.1, 2.3
    a, b = f.coefficients(t, p)
    x_vec = (a, b / math.sin(t))
    nxx = covariant_derivative(f, x_vec, t, p)
    y_t, y_p = -b, a / math.sin(t)
    a0 = nxx[0] * y_t + math.sin(t) ** 2 * nxx[1] * y_p
    assert a0 == pytest.approx(float(a_components(f, t, p).A0), abs=1e-6)
