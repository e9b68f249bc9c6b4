import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmelab.errors import DomainError, FoldError, NonInvertibleError
from pmelab.measures import ModelParams
from pmelab.spectrum import build_mode_set
from pmelab.transform import (
    PressureProfile,
    barenblatt_pressure,
    barenblatt_profile,
    first_moment,
    forward_map,
    inverse_map,
    jacobian_forward,
    lipschitz_bounds,
    mass,
    perturbation_from_field,
    perturbation_from_function,
    pressure_smallness,
    second_moment,
    support_bounds,
)

P1 = ModelParams(1, 1.0)
P2 = ModelParams(2, 1.5)
X1 = np.linspace(-0.95, 0.95, 41)[:, None]


def test_barenblatt_values():
    assert barenblatt_pressure(1.0, np.zeros(2)) == 0.5
    assert barenblatt_pressure(1.0, np.array([1.2, 0.0])) == 0.0
    assert barenblatt_pressure(4.0, np.array([1.0, 0.0])) == pytest.approx(1.5)


@pytest.mark.parametrize("R", [1.0, 1.21, 0.81])
def test_forward_barenblatt_is_constant(R):
    w = forward_map(barenblatt_profile(P1, "full_1d", R))
    z = np.linspace(-1, 1, 21)[:, None]
    assert w(z) == pytest.approx(np.full(21, math.sqrt(R) - 1), abs=1e-10)


def test_jacobian_forward_frozen():
    x = np.array([[0.3, 0.2]])
    rho = 0.5 * (1 - 0.13)
    assert jacobian_forward(rho, -x, x) == pytest.approx(1.0)
    R = 2.0
    assert jacobian_forward(0.5 * (R - 0.13), -x, x) == pytest.approx(R ** -1.0)
    assert jacobian_forward(0.7, np.array([[0.1, 0.4]]), np.zeros((1, 2))) == pytest.approx(1.4 ** -1.0)
    with pytest.raises(DomainError):
        jacobian_forward(0.0, np.zeros((1, 2)), np.zeros((1, 2)))


def test_inverse_identity_and_constant():
    zero = perturbation_from_function(P1, "full_1d", lambda z: np.zeros(len(z)), lambda z: np.zeros_like(z))
    v = inverse_map(zero)
    x = np.linspace(-1.2, 1.2, 25)[:, None]
    assert v(x) == pytest.approx(np.maximum(0.5 * (1 - x[:, 0] ** 2), 0.0), abs=1e-12)
    a = 0.1
    const = perturbation_from_function(P1, "full_1d", lambda z: np.full(len(z), a), lambda z: np.zeros_like(z))
    v = inverse_map(const)
    assert v(x) == pytest.approx(np.maximum(0.5 * ((1 + a) ** 2 - x[:, 0] ** 2), 0.0), abs=1e-12)
    assert support_bounds(v) == pytest.approx((1 + a, 1 + a))
    assert support_bounds(inverse_map(zero)) == pytest.approx((1.0, 1.0))


def test_support_of_tilted_line():
    eps = 0.05
    w = perturbation_from_function(P1, "full_1d", lambda z: eps * z[:, 0], lambda z: np.full_like(z, eps))
    v = inverse_map(w)
    assert support_bounds(v) == pytest.approx((1 - eps, 1 + eps), abs=1e-12)
    # root-finding oracle: right endpoint solves x = (1 + eps z) z at z = 1
    assert v(np.array([[1 + eps - 1e-6]]))[0] > 0
    assert v(np.array([[1 + eps + 1e-6]]))[0] == 0


def _bump_profile(c):
    def func(x):
        r2 = np.sum(x * x, axis=1)
        inner = r2 < 0.25
        bump = np.where(inner, np.exp(-1.0 / np.where(inner, 1 - 4 * r2, 1.0)), 0.0)
        return np.maximum(0.5 * (1 - r2), 0.0) + c * bump

    return PressureProfile(P1, "full_1d", func, 1.0)


def test_round_trip_bump():
    v = _bump_profile(0.01)
    back = inverse_map(forward_map(v))
    assert np.max(np.abs(back(X1) - v(X1))) < 1e-8


def test_pointwise_identity():
    ms = build_mode_set(P1, "full_1d", 4)
    g = ms.field(np.array([0.0, 0.03, -0.02, 0.01, 0.005]))
    w = perturbation_from_field(g)
    v = inverse_map(w)
    z = np.linspace(-0.99, 0.99, 31)[:, None]
    wz = w(z)
    x = (1 + wz)[:, None] * z
    lhs = v(x) - 0.5 * (1 - x[:, 0] ** 2)
    assert np.max(np.abs(lhs - (wz + 0.5 * wz**2))) < 1e-10


def test_fold_detected():
    w = perturbation_from_function(P1, "full_1d", lambda z: -1.5 * z[:, 0] ** 2, lambda z: -3.0 * z)
    with pytest.raises(FoldError):
        inverse_map(w)


def test_noninvertible_pressure():
    def func(x):
        s = x[:, 0]
        return np.maximum(0.5 * (1 - s**2) + 0.2 * np.exp(-(((s - 0.5) / 0.05) ** 2)), 0.0)

    with pytest.raises(NonInvertibleError):
        forward_map(PressureProfile(P1, "full_1d", func, 1.0))


def test_moments_barenblatt():
    v1 = barenblatt_profile(P2, "full_2d", 1.0)
    assert first_moment(v1) == pytest.approx(np.zeros(2), abs=1e-14)
    M = np.array([[1.0, 0.3], [0.3, -1.0]])
    assert second_moment(v1, M) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        second_moment(v1, np.eye(2))


@pytest.mark.parametrize("params,sector", [(P1, "full_1d"), (ModelParams(3, 0.5), "radial")])
def test_mass_scaling(params, sector):
    R = 1.44
    ratio = mass(barenblatt_profile(params, sector, R)) / mass(barenblatt_profile(params, sector, 1.0))
    assert ratio == pytest.approx(R ** (params.sigma + 1 + params.N / 2), rel=1e-10)


def test_mass_exact_1d():
    # int (1/2 (1 - x^2))^2 dx = 4/15
    assert mass(barenblatt_profile(P1, "full_1d")) == pytest.approx(0.25 * 16 / 15, rel=1e-12)


def test_lipschitz_bounds_domain():
    assert lipschitz_bounds(0.1, 0.1) == pytest.approx((0.2, 1.2 * 0.1 / 0.7))
    with pytest.raises(DomainError):
        lipschitz_bounds(0.3, 0.5)


@settings(max_examples=12, deadline=None)
@given(a=st.floats(-0.04, 0.04), b=st.floats(-0.04, 0.04))
def test_forward_bounds_family(a, b):
    def func(x):
        return np.maximum(0.5 * (1 - x[:, 0] ** 2) + a * np.sin(3 * x[:, 0]) + b, 0.0)

    v = PressureProfile(P1, "full_1d", func, 1.2)
    d0, e0 = pressure_smallness(v)
    sup_bound, lip_bound = lipschitz_bounds(d0, e0)
    w = forward_map(v)
    z = np.linspace(-1, 1, 201)[:, None]
    assert np.max(np.abs(w(z))) <= sup_bound * (1 + 1e-6) + 1e-9
    assert w.lip_norm(z) <= lip_bound * (1 + 1e-3) + 1e-6
