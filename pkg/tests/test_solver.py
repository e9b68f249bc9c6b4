import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmelab.errors import ConfigurationError, RegimeExitError
from pmelab.measures import ModelParams, build_ball_grid
from pmelab.solver import (
    SolverConfig,
    TruncationConfig,
    check_comparison,
    energy_identity_residual,
    eta_hat,
    evolve,
    final_state,
    nonlinearity_F,
    nonlinearity_F_truncated,
    random_field,
    rhs_weak,
    step,
)
from pmelab.spectrum import build_mode_set, heat_semigroup

P11 = ModelParams(1, 1.0)
MS1 = build_mode_set(P11, "full_1d", 8)
TRUNC = TruncationConfig(0.3, 0.3)


def test_F_values():
    assert nonlinearity_F(0.0, np.zeros(2), np.zeros(2)) == 0.0
    assert nonlinearity_F(0.0, np.array([0.1, 0.0]), np.zeros(2)) == pytest.approx(0.01)
    assert nonlinearity_F(0.1, np.array([0.2, 0.0]), np.array([1.0, 0.0])) == pytest.approx(0.04 / 1.3)
    with pytest.raises(RegimeExitError):
        nonlinearity_F(-0.95, np.array([0.1]), np.array([0.0]))


def test_truncation_config_invariant():
    with pytest.raises(ConfigurationError):
        TruncationConfig(0.5, 0.3)
    with pytest.raises(ConfigurationError):
        TruncationConfig(0.0, 0.1)


def test_eta_hat_shape():
    s = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    v = eta_hat(s)
    assert v[:3] == pytest.approx(1.0)
    assert v[4:] == pytest.approx(0.0)
    assert 0 < v[3] < 1


@settings(max_examples=50, deadline=None)
@given(q=st.floats(-0.3, 0.3), p=st.floats(-0.3, 0.3), z=st.floats(-1, 1))
def test_truncated_equals_F_inside(q, p, z):
    a = nonlinearity_F_truncated(q, np.array([p]), np.array([z]), TRUNC)
    assert a == pytest.approx(nonlinearity_F(q, np.array([p]), np.array([z])), rel=1e-14, abs=1e-300)


@settings(max_examples=50, deadline=None)
@given(q=st.floats(-2, 2), p=st.floats(-2, 2), z=st.floats(-1, 1))
def test_truncated_support_and_bound(q, p, z):
    v = nonlinearity_F_truncated(q, np.array([p]), np.array([z]), TRUNC)
    if q * q >= 2 * TRUNC.delta**2 or p * p >= 2 * TRUNC.eps**2:
        assert v == 0.0
    # |F| <= |p|^2/(1 - sqrt2 delta - sqrt2 eps) on the support
    assert abs(v) <= abs(p) * math.sqrt(2) * TRUNC.eps / (1 - math.sqrt(2) * (TRUNC.eps + TRUNC.delta)) + 1e-15


def test_rhs_weak_constant_and_mean():
    cfg = SolverConfig(MS1)
    assert np.all(rhs_weak(MS1.constant(0.05), cfg).coeffs == 0.0)
    w = MS1.unit(1, 1, 0, 0.05)
    r = rhs_weak(w, cfg)
    i0 = MS1.constant_position
    assert r.coeffs[i0] > 0


def test_rhs_weak_constant_mode_against_fine_quadrature():
    w = MS1.unit(0, 1, 1, 0.05)
    r = rhs_weak(w, SolverConfig(MS1, dealias_grid_factor=6.0))
    coarse = rhs_weak(w, SolverConfig(MS1))
    fine = build_ball_grid(P11, "full_1d", 80)
    vals = w.values_at(fine.points)
    grad = w.gradient_at(fine.points)
    F = nonlinearity_F(vals, grad, fine.points)
    oracle = P11.beta * np.dot(fine.weights * fine.rho_values, F) * MS1.modes[MS1.constant_position].evaluate(np.zeros((1, 1)))[0]
    assert r.coeffs[MS1.constant_position] == pytest.approx(oracle, rel=1e-12)
    # F is rational, so the default dealiased rule is only close
    assert coarse.coeffs[MS1.constant_position] == pytest.approx(oracle, rel=1e-6)


def test_step_linear_exact():
    cfg = SolverConfig(MS1, dt=0.01, nonlinear=False)
    w = MS1.unit(0, 1, 1, 0.3)
    assert step(w, cfg).coeffs == pytest.approx(w.coeffs * np.exp(-MS1.lambdas * 0.01), rel=1e-15, abs=0)
    assert np.all(step(MS1.field(), cfg).coeffs == 0)


@pytest.mark.parametrize("scheme", ["if_euler", "etdrk2", "etdrk4"])
def test_evolve_linear_matches_semigroup(scheme):
    g = random_field(MS1, 0, 0.05, 0.05)
    cfg = SolverConfig(MS1, dt=0.01, t_end=1.0, scheme=scheme, nonlinear=False, sample_dt=0.5)
    rec = evolve(g, cfg)
    for t, c in zip(rec.times, rec.coeffs):
        assert np.allclose(c, heat_semigroup(g, float(t)).coeffs, atol=1e-14)
    assert energy_identity_residual(rec) < 1e-10


def _order(scheme, dts):
    g = random_field(MS1, 3, 0.1, 0.1)
    ref = final_state(g, SolverConfig(MS1, dt=dts[-1] / 4, t_end=0.5, scheme="etdrk4", sample_dt=1.0))
    errs = [(final_state(g, SolverConfig(MS1, dt=dt, t_end=0.5, scheme=scheme, sample_dt=1.0)) - ref).norm() for dt in dts]
    return np.polyfit(np.log(dts), np.log(errs), 1)[0]


def test_first_order_euler():
    assert _order("if_euler", [0.02, 0.01, 0.005]) == pytest.approx(1.0, abs=0.15)


def test_fourth_order_etdrk4():
    assert _order("etdrk4", [0.1, 0.05, 0.025]) > 3.5


def test_energy_residual_first_order():
    g = random_field(MS1, 3, 0.1, 0.1)
    res = [energy_identity_residual(evolve(g, SolverConfig(MS1, dt=dt, t_end=0.5, scheme="if_euler"))) for dt in (0.01, 0.005)]
    assert res[1] / res[0] == pytest.approx(0.5, abs=0.15)


def test_zero_and_constant_data():
    cfg = SolverConfig(MS1, dt=0.01, t_end=0.5, scheme="etdrk4")
    assert np.all(evolve(MS1.field(), cfg).coeffs == 0)
    rec = evolve(MS1.constant(0.07), cfg)
    assert np.allclose(rec.means(), 0.07, atol=1e-15)
    assert check_comparison(rec).max_violation == 0.0


def test_comparison_and_mean_monotone():
    g = random_field(MS1, 1, 0.05, 0.05)
    rec = evolve(g, SolverConfig(MS1, dt=1e-2, t_end=2.0, truncation=TRUNC, scheme="etdrk4"))
    assert check_comparison(rec).passed
    assert rec.min_mean_increment >= -1e-9


def test_comparison_sign():
    g = random_field(MS1, 4, 0.05, 0.05)
    g = g - g.mode_set.constant(float(np.max(g.values_at(np.linspace(-1, 1, 801)[:, None]))))
    rec = evolve(g, SolverConfig(MS1, dt=1e-2, t_end=1.0, truncation=TRUNC, scheme="etdrk4"))
    assert np.max(rec.sup) <= 1e-6


def test_radial_symmetry_preserved():
    ms = build_mode_set(ModelParams(2, 1.0), "full_2d", 6)
    g = ms.unit(0, 1, 1, 0.03) + ms.constant(0.01)
    rec = evolve(g, SolverConfig(ms, dt=1e-2, t_end=0.5, scheme="etdrk4"))
    radial = np.array([m.index.l == 0 for m in ms.modes])
    assert np.max(np.abs(rec.coeffs[:, ~radial])) <= 1e-13


def test_lipschitz_dependence():
    g1 = random_field(MS1, 5, 0.04, 0.04)
    g2 = g1 + MS1.unit(1, 1, 0, 1e-3) + MS1.unit(0, 1, 2, -1e-3)
    cfg = SolverConfig(MS1, dt=1e-2, t_end=1.0, scheme="etdrk4")
    a, b = final_state(g1, cfg), final_state(g2, cfg)
    assert (a - b).norm() <= 2 * (g1 - g2).norm()


def test_regime_exit_flagged():
    g = MS1.unit(1, 1, 0, 3.0)
    rec = evolve(g, SolverConfig(MS1, dt=1e-2, t_end=0.2))
    assert rec.failed and "denominator" in rec.message


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(MS1, dt=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(MS1, dealias_grid_factor=1.0)


def test_translation_decay_rate():
    g = MS1.unit(1, 1, 0, 0.01)
    rec = evolve(g, SolverConfig(MS1, dt=1e-2, t_end=3.0, scheme="etdrk4", sample_dt=0.1))
    i = MS1.position(1, 1, 0)
    rate = -np.polyfit(rec.times[10:], np.log(np.abs(rec.coeffs[10:, i])), 1)[0]
    assert rate == pytest.approx(P11.sigma + 1, rel=0.05)
