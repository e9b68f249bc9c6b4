import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmelab.errors import DomainError, ShapeError
from pmelab.measures import (
    ModelParams,
    ball_measure,
    build_ball_grid,
    build_radial_quadrature,
    gauss_jacobi,
    inner_grad_sigma1,
    inner_sigma,
    rho,
)
from pmelab.spectrum import build_mode_set


def test_rho_values():
    assert rho(np.array([0.6, 0.0])) == pytest.approx(0.32)
    assert rho(np.array([0.0])) == pytest.approx(0.5)


def test_rho_outside_ball():
    with pytest.raises(DomainError):
        rho(np.array([1.2, 0.0]))


def test_params_checks():
    with pytest.raises(DomainError):
        ModelParams(1, -1.0)
    with pytest.raises(DomainError):
        ModelParams(0, 1.0)
    p = ModelParams(2, 1.5)
    assert p.beta == pytest.approx(6.0)
    assert p.gamma == pytest.approx(3.5)


def test_ball_measure_closed_form():
    assert ball_measure(ModelParams(1, 1.0)) == pytest.approx(2.0 / 3.0, rel=1e-14)
    # N=2, sigma=0: int rho dz = pi/4
    assert ball_measure(ModelParams(2, 0.0), shift=1) == pytest.approx(math.pi / 4, rel=1e-14)


@pytest.mark.parametrize("N,sigma,sector", [(1, 1.0, "full_1d"), (2, 1.5, "full_2d"), (3, 0.5, "radial"), (2, -0.5, "radial")])
def test_grid_total_weight(N, sigma, sector):
    p = ModelParams(N, sigma)
    g = build_ball_grid(p, sector, 16)
    assert g.ball_measure == pytest.approx(ball_measure(p), rel=1e-12)


def test_inner_constant(grid11):
    assert inner_sigma(1.0, 1.0, grid11) == pytest.approx(2.0 / 3.0, rel=1e-13)


def test_inner_normalized_mode(p11, grid11):
    ms = build_mode_set(p11, "full_1d", 6)
    psi = ms.unit(0, 1, 1)
    assert inner_sigma(psi, psi, grid11) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("N,sigma,sector", [(1, 1.0, "full_1d"), (2, 1.5, "full_2d")])
def test_dirichlet_form_equals_eigenvalue(N, sigma, sector):
    p = ModelParams(N, sigma)
    ms = build_mode_set(p, sector, 6)
    for i, mode in enumerate(ms.modes):
        f = ms.field(np.eye(ms.size)[i])
        assert inner_grad_sigma1(f, f, ms.grid) == pytest.approx(ms.lambdas[i], abs=1e-8)


def test_shape_mismatch(grid11):
    with pytest.raises(ShapeError):
        inner_sigma(np.ones(3), 1.0, grid11)


def test_gauss_jacobi_moments():
    # exact for polynomials of degree 2n-1 against (1-x)^a (1+x)^b
    x, w = gauss_jacobi(1.5, 0.0, 8)
    assert w.sum() == pytest.approx(2 ** 2.5 / 2.5, rel=1e-13)
    assert np.dot(w, x) == pytest.approx(2 ** 2.5 / 2.5 - 2 ** 3.5 / 3.5, rel=1e-12)



def test_radial_quadrature_positive():
    q = build_radial_quadrature(ModelParams(3, 1.0), 12)
    assert np.all(q.weights > 0)
    assert q.ball_measure == pytest.approx(ball_measure(ModelParams(3, 1.0)), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(sigma=st.floats(-0.9, 4.0), N=st.integers(1, 4))
def test_grid_matches_closed_form(sigma, N):
    p = ModelParams(N, sigma)
    q = build_radial_quadrature(p, 10)
    assert q.ball_measure == pytest.approx(ball_measure(p), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(a=st.lists(st.floats(-2, 2), min_size=1, max_size=8))
def test_inner_symmetric_positive(a):
    p = ModelParams(1, 1.0)
    ms = build_mode_set(p, "full_1d", 7)
    c = np.zeros(ms.size)
    c[: len(a)] = a
    f = ms.field(c)
    g = ms.field(np.roll(c, 1))
    assert inner_sigma(f, g, ms.grid) == pytest.approx(inner_sigma(g, f, ms.grid), abs=1e-12)
    assert inner_sigma(f, f, ms.grid) >= -1e-14
