import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as P

from pmelab.errors import DomainError, InvalidIndexError
from pmelab.measures import ModelParams, ball_measure, build_ball_grid
from pmelab.spectrum import (
    CartesianPoly,
    RadialPoly,
    build_mode_set,
    eigenvalue,
    eigenfunction_eval,
    heat_kernel,
    heat_semigroup,
    multiplicity,
    operator_apply,
    project,
    radial_eigenpoly,
    spectrum_table,
)


def _radial_oracle(N, sigma, k):
    """Solve L f = lambda f for monic-constant radial f in x = |z|^2 by linear algebra."""
    lam = eigenvalue(ModelParams(N, sigma), 0, k)
    A = np.zeros((k + 1, k + 1))
    for j in range(k + 1):
        e = np.zeros(k + 1)
        e[j] = 1.0
        A[:, j] = RadialPoly(e, N).apply_L(sigma).coeffs[: k + 1] - lam * e
    # the top-degree row vanishes identically; use it for the normalization
    A[k] = 0.0
    A[k, 0] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return np.linalg.solve(A, rhs)


@pytest.mark.parametrize("sigma", [0.0, 1.0, 2.5])
def test_first_nonzero_eigenvalue(sigma):
    p = ModelParams(2, sigma)
    assert eigenvalue(p, 1, 0) == sigma + 1
    assert eigenvalue(p, 0, 1) == 2 * (sigma + 1) + 2


def test_eigenvalue_frozen():
    assert eigenvalue(ModelParams(3, 1.0), 2, 1) == 15.0


def test_eigenvalue_bad_index():
    with pytest.raises(InvalidIndexError):
        eigenvalue(ModelParams(1, 1.0), -1, 0)


def test_multiplicities():
    assert multiplicity(ModelParams(2, 1.0), 0) == 1
    assert multiplicity(ModelParams(3, 1.0), 2) == 5
    assert multiplicity(ModelParams(2, 1.0), 3) == 2
    assert multiplicity(ModelParams(1, 1.0), 1) == 1


@pytest.mark.parametrize("N,sigma", [(1, 1.0), (2, 0.5), (3, 1.5)])
def test_dilation_polynomial(N, sigma):
    p = ModelParams(N, sigma)
    assert radial_eigenpoly(p, 0, 1) == pytest.approx([1.0, -p.gamma])


def test_second_radial_polynomial_frozen():
    # oracle: direct solve of the eigen-relation on quadratics in |z|^2
    oracle = _radial_oracle(2, 0.0, 2)
    assert oracle == pytest.approx([1.0, -6.0, 6.0], abs=1e-12)
    assert radial_eigenpoly(ModelParams(2, 0.0), 0, 2) == pytest.approx([1.0, -6.0, 6.0], abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(N=st.integers(1, 4), sigma=st.floats(-0.9, 3.0), k=st.integers(0, 4))
def test_radial_poly_matches_linear_solve(N, sigma, k):
    assert radial_eigenpoly(ModelParams(N, sigma), 0, k) == pytest.approx(_radial_oracle(N, sigma, k), rel=1e-9, abs=1e-9)


def test_mode_shapes():
    p = ModelParams(2, 1.0)
    ms = build_mode_set(p, "full_2d", 2)
    const = ms.modes[ms.position(0, 1, 0)]
    pts = np.array([[0.0, 0.0], [0.3, -0.2], [0.9, 0.1]])
    v = eigenfunction_eval(const, pts)
    assert np.ptp(v) == pytest.approx(0.0, abs=1e-14)
    for n in (1, 2):
        m = ms.modes[ms.position(1, n, 0)]
        v = eigenfunction_eval(m, pts)
        ratio = v[1:] / pts[1:, n - 1]
        assert v[0] == pytest.approx(0.0, abs=1e-14)
        assert ratio[0] == pytest.approx(ratio[1], rel=1e-12)
    dil = ms.modes[ms.position(0, 1, 1)]
    assert eigenfunction_eval(dil, np.array([0.0, 0.0])) == pytest.approx(dil.norm_const)
    assert eigenfunction_eval(dil, np.array([1.0, 0.0])) == pytest.approx(dil.norm_const * (1 - p.gamma))


def test_eval_outside_ball():
    ms = build_mode_set(ModelParams(1, 1.0), "full_1d", 2)
    with pytest.raises(DomainError):
        eigenfunction_eval(ms.modes[0], np.array([[1.5]]))


@pytest.mark.parametrize("N,sigma,sector", [(1, 1.0, "full_1d"), (2, 1.5, "full_2d"), (3, 0.5, "radial")])
def test_eigen_relation_at_nodes(N, sigma, sector):
    ms = build_mode_set(ModelParams(N, sigma), sector, 8)
    pts = ms.grid.points
    for mode in ms.modes:
        poly = mode.polynomial()
        Lp = operator_apply(poly, ms.params)
        assert np.max(np.abs(Lp(pts) - mode.lam * poly(pts))) <= 1e-10 * max(1.0, mode.lam)
        assert np.allclose(poly(pts), mode.evaluate(pts), atol=1e-10)


def test_operator_on_square():
    # L z^2 = 5 z^2 - 1 for N=1, sigma=1
    Lw = CartesianPoly([0.0, 0.0, 1.0]).apply_L(1.0)
    assert Lw.coeffs == pytest.approx([-1.0, 0.0, 5.0])


def test_full_1d_ladder():
    p = ModelParams(1, 1.0)
    ms = build_mode_set(p, "full_1d", 7)
    degrees = sorted(m.degree for m in ms.modes)
    assert degrees == list(range(8))
    for m in ms.modes:
        j = m.degree
        assert m.lam == pytest.approx((p.sigma + 1) * j + j * (j - 1) / 2)


def test_full_2d_small():
    p = ModelParams(2, 1.0)
    ms = build_mode_set(p, "full_2d", 2)
    assert ms.size == 6
    assert sorted(m.degree for m in ms.modes) == [0, 1, 1, 2, 2, 2]
    assert sorted(ms.lambdas) == pytest.approx([0, 2, 2, 4, 4, 6])


def test_spectrum_table_rows():
    rows = spectrum_table(ModelParams(2, 1.0), "full_2d", 4)
    assert len(rows) == 15
    for l, n, k, mult, lam in rows:
        assert lam == 2 * (l + 2 * k) + k * (2 * k + 2 * l)


def test_gram_identity():
    ms = build_mode_set(ModelParams(2, 1.5), "full_2d", 8)
    assert np.max(np.abs(ms.gram() - np.eye(ms.size))) < 1e-10


def test_project_dilation_combination():
    p = ModelParams(1, 1.0)
    ms = build_mode_set(p, "full_1d", 4)
    f = lambda z: 1 - p.gamma * z[:, 0] ** 2 + 0.5
    c = project(f, ms)
    dil = ms.modes[ms.position(0, 1, 1)]
    fine = build_ball_grid(p, "full_1d", 60)
    oracle = np.dot(fine.weights, f(fine.points) * dil.evaluate(fine.points))
    assert c.coeffs[ms.position(0, 1, 1)] == pytest.approx(oracle, rel=1e-12)
    others = [i for i in range(ms.size) if i not in (ms.position(0, 1, 1), ms.constant_position)]
    assert np.max(np.abs(c.coeffs[others])) < 1e-13


def test_heat_semigroup_negative_time():
    ms = build_mode_set(ModelParams(1, 1.0), "full_1d", 2)
    with pytest.raises(DomainError):
        heat_semigroup(ms.unit(1, 1, 0), -1.0)


class TestHeatKernel:
    ms = build_mode_set(ModelParams(2, 1.0), "full_2d", 8)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-0.6, 0.6, (20, 2))
        b = rng.uniform(-0.6, 0.6, (20, 2))
        assert np.array_equal(heat_kernel(0.3, a, b, self.ms), heat_kernel(0.3, b, a, self.ms))

    def test_semigroup_identity(self):
        g = self.ms.grid
        z, z2 = np.array([0.2, 0.1]), np.array([-0.4, 0.3])
        left = heat_kernel(0.2, np.repeat(z[None], g.size, 0), g.points, self.ms)
        right = heat_kernel(0.3, g.points, np.repeat(z2[None], g.size, 0), self.ms)
        assert np.dot(g.weights, left * right) == pytest.approx(heat_kernel(0.5, z, z2, self.ms), abs=1e-8)

    def test_long_time_limit(self):
        v = heat_kernel(40.0, np.array([0.3, 0.0]), np.array([0.0, -0.5]), self.ms)
        assert v == pytest.approx(1.0 / ball_measure(self.ms.params), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.0, 3.0), s=st.floats(0.0, 3.0))
def test_semigroup_property(t, s):
    ms = build_mode_set(ModelParams(1, 1.0), "full_1d", 6)
    f = ms.field(np.linspace(-1, 1, ms.size))
    a = heat_semigroup(heat_semigroup(f, t), s)
    b = heat_semigroup(f, t + s)
    assert np.allclose(a.coeffs, b.coeffs, atol=1e-14)
    assert b.norm() <= f.norm() + 1e-14
