import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmelab.errors import InsufficientSignalError
from pmelab.asymptotics import (
    Report,
    first_moment_residual,
    fit_rate,
    pressure_series,
    rate_ordering,
    verify_affine_correction,
    verify_dilation_correction,
    verify_pressure_laws,
    verify_stability,
    verify_translation_correction,
)
from pmelab.measures import ModelParams
from pmelab.solver import SolverConfig, TruncationConfig, random_field
from pmelab.spectrum import build_mode_set, project

T = np.linspace(0, 6, 601)
P1 = ModelParams(1, 1.0)
MS1 = build_mode_set(P1, "full_1d", 10)
CFG1 = SolverConfig(MS1, dt=1e-2, t_end=6.0, truncation=TruncationConfig(0.3, 0.3), scheme="etdrk4")


def test_fit_exact_and_perturbed():
    assert fit_rate(T, np.exp(-3 * T)).rate == pytest.approx(3.0, abs=1e-10)
    assert fit_rate(T, np.exp(-3 * T) * (1 + 0.01 * np.sin(T))).rate == pytest.approx(3.0, abs=0.02)
    assert fit_rate(T, np.full_like(T, 0.4)).rate == pytest.approx(0.0, abs=1e-12)


def test_fit_floor():
    f = fit_rate(T, np.exp(-10 * T), window=(0, 6))
    assert f.floor and f.rate == pytest.approx(10.0)
    with pytest.raises(InsufficientSignalError):
        fit_rate(T, np.zeros_like(T))


@settings(max_examples=30, deadline=None)
@given(rate=st.floats(0.1, 5.0), amp=st.floats(1e-3, 10.0))
def test_fit_recovers_rate(rate, amp):
    assert fit_rate(T, amp * np.exp(-rate * T), window=(0.0, 2.0)).rate == pytest.approx(rate, rel=1e-9)


def test_report_csv():
    r = Report("x")
    r.add_rel("rate", 2.0, 2.01, 0.05)
    r.add_max("res", 1e-6, 1e-3)
    assert r.to_csv().splitlines()[1] == "rate,2.0,2.01,5%,pass"
    assert not r.passed


@pytest.fixture(scope="module")
def translation_report():
    return verify_stability(MS1.unit(1, 1, 0, 0.01), CFG1)


def test_stability_translation_mode(translation_report):
    rep = translation_report
    assert rep.row("rate").passed and rep.row("rate").measured == pytest.approx(2.0, rel=0.05)
    assert rep.row("mean ODE residual").passed


def test_first_moment_identity(translation_report):
    # coefficient beta+1 comes from integrating z_i against the weak form
    assert first_moment_residual(translation_report.data["record"]) <= 1e-8


def test_stability_constant():
    rep = verify_stability(MS1.constant(0.05), CFG1)
    assert rep.data["a"] == pytest.approx(0.05, abs=1e-15)
    assert rep.passed


def test_stability_radial_dilation():
    p = ModelParams(2, 1.0)
    ms = build_mode_set(p, "radial", 8)
    cfg = SolverConfig(ms, dt=1e-2, t_end=2.0, truncation=TruncationConfig(0.3, 0.3), scheme="etdrk4")
    rep = verify_stability(ms.unit(0, 1, 1, 0.01), cfg, window=(0.5, 1.5))
    assert rep.row("rate").measured == pytest.approx(2 * (p.sigma + 1) + p.N, rel=0.05)


def test_translation_pure_mode():
    rep = verify_translation_correction(MS1.unit(1, 1, 0, 0.01), CFG1)
    assert rep.row("residual rate").measured >= 2 * (P1.sigma + 1) * 0.95


def test_translation_zero():
    rep = verify_translation_correction(MS1.field(), CFG1, adjust=False)
    assert rep.row("b").measured == 0.0


def test_translation_b_matches_projection():
    # linear oracle: b is the initial translation coefficient up to O(amplitude)
    a = 0.003
    g = MS1.unit(1, 1, 0, a) + MS1.unit(0, 1, 1, a)
    rep = verify_translation_correction(g, CFG1)
    assert rep.data["b"][0] == pytest.approx(a, rel=0.05)


def test_affine_pure_l2():
    p = ModelParams(2, 1.5)
    ms = build_mode_set(p, "full_2d", 8, l_max=4, radial_degree=4)
    cfg = SolverConfig(ms, dt=1e-2, t_end=3.0, truncation=TruncationConfig(0.3, 0.3), scheme="etdrk4")
    rep = verify_affine_correction(ms.unit(2, 1, 0, 0.005), cfg)
    assert rep.row("l=2 amplitude rate").measured == pytest.approx(2 * (p.sigma + 1), rel=0.02)
    assert rep.row("second moment ODE residual").passed
    A = rep.data["A"]
    assert np.allclose(A, A.T) and abs(np.trace(A)) < 1e-12


def test_affine_zero():
    p = ModelParams(2, 1.5)
    ms = build_mode_set(p, "full_2d", 4)
    cfg = SolverConfig(ms, dt=1e-2, t_end=1.0, scheme="etdrk4")
    rep = verify_affine_correction(ms.field(), cfg)
    assert np.all(rep.data["A"] == 0)


@pytest.fixture(scope="module")
def dilation_setup():
    p = ModelParams(1, 1.5)
    ms = build_mode_set(p, "radial", 12)
    cfg = SolverConfig(ms, dt=1e-3, t_end=3.0, truncation=TruncationConfig(0.3, 0.3), scheme="etdrk4")
    return p, ms, cfg


def test_dilation_leading_rate(dilation_setup):
    p, ms, cfg = dilation_setup
    rep = verify_dilation_correction(ms.unit(0, 1, 1, 0.01) + ms.unit(0, 1, 2, 0.004), cfg)
    assert rep.row("leading rate").measured == pytest.approx(6.0, rel=0.05)
    assert rep.row("gamma").passed


def test_dilation_zero_and_sign(dilation_setup):
    p, ms, cfg = dilation_setup
    assert verify_dilation_correction(ms.field(), cfg, adjust=False).row("c").measured == 0.0
    bump = project(lambda z: -0.02 * np.exp(-8 * z[:, 0] ** 2), ms)
    init = bump.coeffs[ms.position(0, 1, 1)]
    rep = verify_dilation_correction(bump, cfg)
    assert np.sign(rep.data["c"]) == np.sign(init)


def test_pressure_zero_data():
    cfg = SolverConfig(MS1, dt=1e-2, t_end=1.0, scheme="etdrk4")
    rep = verify_pressure_laws(MS1.field(), cfg, window=(0.2, 1.0))
    assert rep.row("sup |v - v*|").measured <= 1e-12
    assert rep.passed


def test_pressure_translation_shift(translation_report):
    rec = translation_report.data["record"]
    ser = pressure_series(rec, every=50, with_sup=False)
    lam1 = P1.sigma + 1
    shift = ser.first[:, 0] / ser.mass * np.exp(lam1 * ser.times)
    i = MS1.position(1, 1, 0)
    b_w = rec.coeffs[-1, i] * MS1.modes[i].norm_const * math.exp(lam1 * rec.times[-1])
    assert shift[-1] == pytest.approx(b_w, rel=0.05)


def test_rate_ordering():
    p = ModelParams(2, 1.5)
    assert rate_ordering({"a": 2.5, "b": 5.0, "c": 7.0}, p).passed
    assert not rate_ordering({"a": 5.0, "b": 2.5}, p).passed
