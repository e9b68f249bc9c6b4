"""Decay-rate extraction and verification of the long-time expansions.

Each verifier runs one trajectory, subtracts the predicted correction
(constant, translation, affine or dilation term) and fits the exponential
rate of what is left.  Exact moment identities of the perturbation equation
are checked along the same trajectory.  Results are returned as
:class:`Report` rows ``(quantity, expected, measured, tolerance, passed)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InsufficientSignalError
from .measures import ModelParams
from .solver import SolverConfig, TrajectoryRecord, check_comparison, evolve
from .spectrum import ModeSet, SpectralField, eigenvalue
from .transform import (
    barenblatt_pressure,
    inverse_map,
    perturbation_from_field,
    physical_sample_points,
    pullback_moments,
    moment_grid,
    support_bounds,
)

SIGNAL_FLOOR = 1e-12
MIN_SAMPLES = 8
MOMENT_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# fitting and reports


@dataclass(frozen=True)
class RateFit:
    """Negated least-squares slope of ``log(value)`` against ``t``."""

    rate: float
    window: tuple[float, float]
    r2: float
    floor: bool
    n_samples: int

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ConfigurationError("fit window must satisfy t0 < t1")


def fit_rate(times, values, window: tuple[float, float] | None = None, floor: float = SIGNAL_FLOOR,
             min_samples: int = MIN_SAMPLES) -> RateFit:
    """Fit ``value ~ C exp(-rate t)`` on ``window``.

    Samples at or below ``floor`` end the usable window early; the fit is
    then made on the part above the floor and ``floor`` is flagged.
    ``InsufficientSignalError`` is raised when fewer than ``min_samples``
    usable samples remain.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ConfigurationError("times and values must have equal length")
    if window is None:
        window = (float(t[0]), float(t[-1]))
    t0, t1 = window
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    t, v = t[sel], v[sel]
    hit = False
    bad = ~(v > floor)
    if np.any(bad):
        hit = True
        first = int(np.argmax(bad))
        t, v = t[:first], v[:first]
    if len(t) < min_samples:
        raise InsufficientSignalError(
            f"only {len(t)} samples above {floor:g} in window [{t0}, {t1}], need {min_samples}")
    y = np.log(v)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * t + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return RateFit(float(-slope), (float(t[0]), float(t[-1])) if t[-1] > t[0] else window, r2, hit, len(t))


@dataclass
class ReportRow:
    quantity: str
    expected: float
    measured: float
    tolerance: str
    passed: bool


@dataclass
class Report:
    name: str
    rows: list[ReportRow] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, quantity: str, expected: float, measured: float, tolerance: str, passed: bool) -> None:
        self.rows.append(ReportRow(quantity, float(expected), float(measured), tolerance, bool(passed)))

    def add_rel(self, quantity: str, expected: float, measured: float, rel: float) -> None:
        ok = abs(measured - expected) <= rel * abs(expected)
        self.add(quantity, expected, measured, f"{100 * rel:g}%", ok)

    def add_min(self, quantity: str, bound: float, measured: float) -> None:
        self.add(quantity, bound, measured, ">=", measured >= bound)

    def add_max(self, quantity: str, bound: float, measured: float) -> None:
        self.add(quantity, bound, measured, "<=", measured <= bound)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, quantity: str) -> ReportRow:
        for r in self.rows:
            if r.quantity == quantity:
                return r
        raise KeyError(quantity)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "expected", "measured", "tolerance", "pass"])
        for r in self.rows:
            w.writerow([r.quantity, repr(r.expected), repr(r.measured), r.tolerance, "pass" if r.passed else "fail"])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# trajectory helpers


def sup_norms(record: TrajectoryRecord, coeffs: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Grid-max of ``|w|`` and ``|grad w|`` for each row of ``coeffs``."""
    d = record.config.disc
    c = record.coeffs if coeffs is None else coeffs
    w = c @ d.diag_phi
    g = np.einsum("ti,ijk->tjk", c, d.diag_dphi)
    return np.max(np.abs(w), axis=1), np.sqrt(np.max(np.sum(g * g, axis=2), axis=1))


def subtract_constant(mode_set: ModeSet, coeffs: np.ndarray, a: float) -> np.ndarray:
    """Coefficients of ``w - a``."""
    out = np.array(coeffs, dtype=float, copy=True)
    i0 = mode_set.constant_position
    out[..., i0] -= a / mode_set.modes[i0].norm_const
    return out


def centered_derivative(times: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order centered differences at interior samples (uniform spacing)."""
    h = float(times[1] - times[0])
    if not np.allclose(np.diff(times), h, rtol=1e-6, atol=1e-12):
        raise ConfigurationError("centered differences need uniform sampling")
    v = np.asarray(values)
    d = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    return times[2:-2], d


def mean_ode_residual(record: TrajectoryRecord) -> float:
    """Max over samples of ``|d/dt a - beta |B|^{-1} int F dmu_{sigma+1}|``."""
    _, da = centered_derivative(record.times, record.means())
    return float(np.max(np.abs(da - record.mean_rate[2:-2])))


def mass_adjust(g: SpectralField, config: SolverConfig, iterations: int = 2) -> SpectralField:
    """Shift the mean of ``g`` so that the limit constant is close to zero.

    Each pass runs the flow, reads the late-time mean and subtracts it from
    the initial constant coefficient.
    """
    ms = g.mode_set
    out = g.copy()
    for _ in range(iterations):
        rec = evolve(out, config)
        if rec.failed:
            raise ConfigurationError(f"mass adjustment run failed: {rec.message}")
        out = SpectralField(ms, subtract_constant(ms, out.coeffs, float(rec.means()[-1])))
    return out


def _mode_positions(ms: ModeSet, l: int, k: int = 0) -> list[int]:
    return [i for i, m in enumerate(ms.modes) if m.index.l == l and m.index.k == k]


def _fit_or_floor(report: Report, quantity: str, times, values, window, *, expected=None, rel=None,
                  minimum=None) -> RateFit | None:
    try:
        fit = fit_rate(times, values, window)
    except InsufficientSignalError as exc:
        report.add(quantity, minimum if minimum is not None else expected, float("nan"), str(exc)[:40], False)
        return None
    if minimum is not None:
        report.add_min(quantity, minimum, fit.rate)
    else:
        report.add_rel(quantity, expected, fit.rate, rel)
    return fit


# ---------------------------------------------------------------------------
# verifiers in the perturbation variable


def verify_stability(g: SpectralField, config: SolverConfig, window=(2.0, 6.0), tol: float = 0.05,
                     mean_tol: float = 1e-8) -> Report:
    """Decay of ``w - a`` at rate ``sigma+1`` and the mean ODE."""
    p = config.params
    rep = Report("stability")
    rec = evolve(g, config)
    rep.data["record"] = rec
    if rec.failed:
        rep.add("regime", 0, 1, "no exit", False)
        return rep
    a = float(rec.means()[-1])
    rep.data["a"] = a
    sup, lip = sup_norms(rec, subtract_constant(g.mode_set, rec.coeffs, a))
    rep.data["sup"] = sup
    if np.max(np.abs(sup)) <= SIGNAL_FLOOR:
        rep.add("limit constant", a, a, "exact", True)
    else:
        f = _fit_or_floor(rep, "rate", rec.times, sup, window, expected=p.sigma + 1, rel=tol)
        if f is not None:
            rep.data["fit"] = f
        _fit_or_floor(rep, "rate lip", rec.times, lip, window, expected=p.sigma + 1, rel=tol)
    rep.add_max("mean ODE residual", mean_tol, mean_ode_residual(rec))
    rep.add_max("comparison violation", 1e-6, check_comparison(rec).max_violation)
    rep.add_max("mean decrease", 1e-9, -rec.min_mean_increment)
    return rep


def verify_translation_correction(g: SpectralField, config: SolverConfig, window=(1.0, 4.5),
                                  factor: float = 1.9, adjust: bool = True) -> Report:
    """Residual decay after removing ``exp(-(sigma+1)t) b.z``."""
    p = config.params
    ms = g.mode_set
    rep = Report("translation")
    g0 = mass_adjust(g, config) if adjust else g
    rec = evolve(g0, config)
    rep.data["record"] = rec
    if rec.failed:
        rep.add("regime", 0, 1, "no exit", False)
        return rep
    lam1 = p.sigma + 1
    pos = _mode_positions(ms, 1)
    b = np.exp(lam1 * rec.times[-1]) * rec.coeffs[-1, pos]
    rep.data["b"] = b
    corr = np.zeros_like(rec.coeffs)
    corr[:, pos] = np.exp(-lam1 * rec.times)[:, None] * b[None, :]
    a = float(rec.means()[-1])
    res = subtract_constant(ms, rec.coeffs - corr, a)
    sup, lip = sup_norms(rec, res)
    if not np.any(b) and np.max(sup) <= SIGNAL_FLOOR:
        rep.add("b", 0.0, float(np.linalg.norm(b)), "exact", True)
    else:
        fit = _fit_or_floor(rep, "residual rate", rec.times, np.maximum(sup, lip), window, minimum=factor * lam1)
        rep.data["fit"] = fit
    rep.add_max("comparison violation", 1e-6, check_comparison(rec).max_violation)
    return rep


def second_moment_residual(record: TrajectoryRecord) -> tuple[float, np.ndarray]:
    """Max residual of the ``int z_i z_j w dmu_sigma`` ODE along the trajectory."""
    cfg = record.config
    p = cfg.params
    d = cfg.disc
    z = d.grid.points
    N = p.N
    w0 = d.grid.weights
    pairs = [(i, j) for i in range(N) for j in range(i, N)]
    worst = 0.0
    lhs_all = []
    for (i, j) in pairs:
        zz = z[:, i] * z[:, j]
        mom = np.array([float(w0 @ (zz * (c @ d.phi))) for c in record.coeffs])
        tt, dm = centered_derivative(record.times, mom)
        rhs = []
        for c in record.coeffs[2:-2]:
            w = c @ d.phi
            F = d.forcing(c, cfg)
            val = -2 * (p.sigma + 1) * float(w0 @ (zz * w)) + (p.beta + 2) * float(d.w1 @ (zz * F))
            if i == j:
                val += 2 * float(d.w1 @ w)
            rhs.append(val)
        r = np.abs(dm - np.array(rhs))
        lhs_all.append(r)
        worst = max(worst, float(r.max()))
    return worst, np.array(lhs_all)


def first_moment_residual(record: TrajectoryRecord) -> float:
    """Max residual of ``d/dt int z_i w = -(sigma+1) int z_i w + (beta+1) int z_i F dmu_{sigma+1}``."""
    cfg = record.config
    p = cfg.params
    d = cfg.disc
    z = d.grid.points
    worst = 0.0
    for i in range(p.N):
        mom = np.array([float(d.grid.weights @ (z[:, i] * (c @ d.phi))) for c in record.coeffs])
        _, dm = centered_derivative(record.times, mom)
        rhs = np.array([
            -(p.sigma + 1) * float(d.grid.weights @ (z[:, i] * (c @ d.phi)))
            + (p.beta + 1) * float(d.w1 @ (z[:, i] * d.forcing(c, cfg)))
            for c in record.coeffs[2:-2]
        ])
        worst = max(worst, float(np.max(np.abs(dm - rhs))))
    return worst


def dilation_moment_residual(record: TrajectoryRecord) -> float:
    """Max residual of the ``int |z|^2 w dmu_sigma`` ODE."""
    cfg = record.config
    p = cfg.params
    d = cfg.disc
    z = d.grid.points
    r2 = np.sum(z * z, axis=1)
    w0 = d.grid.weights
    mom = np.array([float(w0 @ (r2 * (c @ d.phi))) for c in record.coeffs])
    _, dm = centered_derivative(record.times, mom)
    rhs = np.array([
        -(2 * (p.sigma + 1) + p.N) * float(w0 @ (r2 * (c @ d.phi))) + p.N * float(w0 @ (c @ d.phi))
        + (p.beta + 2) * float(d.w1 @ (r2 * d.forcing(c, cfg)))
        for c in record.coeffs[2:-2]
    ])
    return float(np.max(np.abs(dm - rhs)))


def verify_affine_correction(g: SpectralField, config: SolverConfig, window=(0.5, 3.0),
                             residual_window=(0.5, 2.5), lead_tol: float = 0.02, factor: float = 0.95,
                             moment_tol: float = 1e-6, adjust: bool = True) -> Report:
    """Residual decay after removing ``exp(-2(sigma+1)t) z.Az`` (N = 2)."""
    p = config.params
    ms = g.mode_set
    if p.N != 2 or ms.sector != "full_2d":
        raise ConfigurationError("affine correction needs the N = 2 full sector")
    rep = Report("affine")
    g0 = mass_adjust(g, config) if adjust else g
    rec = evolve(g0, config)
    rep.data["record"] = rec
    if rec.failed:
        rep.add("regime", 0, 1, "no exit", False)
        return rep
    lam2 = eigenvalue(p, 2, 0)
    pos = _mode_positions(ms, 2)
    amp = np.linalg.norm(rec.coeffs[:, pos], axis=1)
    A = np.exp(lam2 * rec.times[-1]) * rec.coeffs[-1, pos]
    rep.data["A_coeffs"] = A
    rep.data["A"] = affine_matrix(ms, pos, A)
    if not np.any(A):
        rep.add("A", 0.0, 0.0, "exact", True)
    else:
        _fit_or_floor(rep, "l=2 amplitude rate", rec.times, amp, window, expected=lam2, rel=lead_tol)
        corr = np.zeros_like(rec.coeffs)
        corr[:, pos] = np.exp(-lam2 * rec.times)[:, None] * A[None, :]
        res = subtract_constant(ms, rec.coeffs - corr, float(rec.means()[-1]))
        sup, lip = sup_norms(rec, res)
        bound = factor * min(2 * (p.sigma + 1) + p.N, 3 * (p.sigma + 1))
        _fit_or_floor(rep, "residual rate", rec.times, np.maximum(sup, lip), residual_window, minimum=bound)
    rep.add_max("second moment ODE residual", moment_tol, second_moment_residual(rec)[0])
    rep.add_max("comparison violation", 1e-6, check_comparison(rec).max_violation)
    return rep


def affine_matrix(ms: ModeSet, pos: list[int], coeffs: np.ndarray) -> np.ndarray:
    """Symmetric trace-free ``A`` with ``z.Az = sum_n c_n psi_{2n0}(z)``."""
    e1, e2, d = np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[math.sqrt(0.5), math.sqrt(0.5)]])
    vals = lambda pt: sum(c * ms.modes[i].evaluate(pt)[0] for i, c in zip(pos, coeffs))  # noqa: E731
    a11 = vals(e1)
    a22 = vals(e2)
    a12 = vals(d) - 0.5 * (a11 + a22)
    return np.array([[a11, a12], [a12, a22]])


def verify_dilation_correction(g: SpectralField, config: SolverConfig, window=(0.5, 3.0),
                               residual_window=(0.5, 1.5), tol: float = 0.05, factor: float = 0.95,
                               adjust: bool = True) -> Report:
    """Leading rate ``2(sigma+1)+N`` and residual after ``c(1 - gamma|z|^2)`` (radial)."""
    p = config.params
    ms = g.mode_set
    if ms.sector != "radial":
        raise ConfigurationError("dilation correction runs in the radial sector")
    if not p.N < p.sigma + 1:
        raise ConfigurationError("dilation correction needs N < sigma + 1")
    rep = Report("dilation")
    g0 = mass_adjust(g, config) if adjust else g
    rec = evolve(g0, config)
    rep.data["record"] = rec
    if rec.failed:
        rep.add("regime", 0, 1, "no exit", False)
        return rep
    lam = eigenvalue(p, 0, 1)
    i = ms.position(0, 1, 1)
    c_amp = float(np.exp(lam * rec.times[-1]) * rec.coeffs[-1, i])
    rep.data["c"] = c_amp
    mode = ms.modes[i]
    poly = mode.radial_coeffs
    gamma_poly = -poly[1] / poly[0]
    rep.add("gamma", p.gamma, gamma_poly, "exact", abs(gamma_poly - p.gamma) <= 1e-12 * p.gamma)
    a = float(rec.means()[-1])
    sup, _ = sup_norms(rec, subtract_constant(ms, rec.coeffs, a))
    if c_amp == 0.0:
        rep.add("c", 0.0, 0.0, "exact", True)
        return rep
    _fit_or_floor(rep, "leading rate", rec.times, sup, window, expected=lam, rel=tol)
    corr = np.zeros_like(rec.coeffs)
    corr[:, i] = np.exp(-lam * rec.times) * c_amp
    res = subtract_constant(ms, rec.coeffs - corr, a)
    rsup, rlip = sup_norms(rec, res)
    bound = factor * min(eigenvalue(p, 0, 2), 2 * lam)
    _fit_or_floor(rep, "residual rate", rec.times, np.maximum(rsup, rlip), residual_window, minimum=bound)
    rep.add_max("dilation moment ODE residual", 1e-6, dilation_moment_residual(rec))
    rep.add_max("comparison violation", 1e-6, check_comparison(rec).max_violation)
    return rep


# ---------------------------------------------------------------------------
# pressure variable


@dataclass
class PressureSeries:
    times: np.ndarray
    mass: np.ndarray
    first: np.ndarray
    second: np.ndarray
    sup_dev: np.ndarray
    r_inner: np.ndarray
    r_outer: np.ndarray
    radius: float


def pressure_series(record: TrajectoryRecord, every: int = 10, sup_samples: int = 2048,
                    with_sup: bool = True) -> PressureSeries:
    """Moments, support radii and ``sup|v - v_*|`` along a trajectory."""
    ms = record.mode_set
    p = ms.params
    grid = moment_grid(p, ms.sector)
    a = float(record.means()[-1])
    R = (1.0 + a) ** 2
    idx = list(range(0, len(record.times), every))
    if idx[-1] != len(record.times) - 1:
        idx.append(len(record.times) - 1)
    masses, firsts, seconds, sups, rin, rout = [], [], [], [], [], []
    for k in idx:
        w = perturbation_from_field(record.field(k))
        mv = pullback_moments(w, grid)
        masses.append(mv.mass)
        firsts.append(mv.first)
        seconds.append(mv.second)
        if with_sup:
            v = inverse_map(w)
            lo, hi = support_bounds(v)
            rin.append(lo)
            rout.append(hi)
            radius = max(hi, math.sqrt(R)) * (1 + 1e-9)
            pts = physical_sample_points(p, ms.sector, radius, sup_samples)
            sups.append(float(np.max(np.abs(v.func(pts) - barenblatt_pressure(R, pts)))))
    return PressureSeries(record.times[idx], np.array(masses), np.array(firsts), np.array(seconds),
                          np.array(sups), np.array(rin), np.array(rout), math.sqrt(R))


def _trace_free_part(S: np.ndarray) -> np.ndarray:
    N = S.shape[-1]
    return S - np.trace(S, axis1=-2, axis2=-1)[..., None, None] * np.eye(N) / N


def moment_drifts(series: PressureSeries, params: ModelParams, t_max: float = 4.0) -> dict:
    """Relative drifts of the conserved and exponentially scaled moments."""
    sel = series.times <= t_max + 1e-9
    t = series.times[sel]
    m = series.mass[sel]
    span = max(float(t[-1] - t[0]), 1e-300)
    out = {"mass_drift_per_time": float(np.max(np.abs(m - m[0])) / abs(m[0]) / span)}
    lam1 = params.sigma + 1
    f = series.first[sel] * np.exp(lam1 * t)[:, None]
    fs = float(np.max(np.linalg.norm(f, axis=1)))
    out["first_scale"] = fs
    out["first_drift"] = float(np.max(np.linalg.norm(f - f[0], axis=1)) / fs) if fs > MOMENT_FLOOR else 0.0
    if params.N >= 2:
        S = _trace_free_part(series.second[sel]) * np.exp(2 * lam1 * t)[:, None, None]
        ss = float(np.max(np.linalg.norm(S, axis=(1, 2))))
        out["second_scale"] = ss
        out["second_drift"] = float(np.max(np.linalg.norm(S - S[0], axis=(1, 2))) / ss) if ss > MOMENT_FLOOR else 0.0
    return out


def verify_pressure_laws(g: SpectralField, config: SolverConfig, window=(2.0, 6.0), tol: float = 0.05,
                         record: TrajectoryRecord | None = None, every: int = 10,
                         moment_t_max: float = 4.0, expected_rate: float | None = None,
                         check_sup: bool = True) -> Report:
    """Barenblatt stability, support sandwich and moment laws for ``v``.

    ``expected_rate`` defaults to ``sigma+1``, which generic data saturate;
    data without translation content decay faster and need their own value.
    """
    p = config.params
    rep = Report("pressure")
    rec = record if record is not None else evolve(g, config)
    rep.data["record"] = rec
    if rec.failed:
        rep.add("regime", 0, 1, "no exit", False)
        return rep
    ser = pressure_series(rec, every=every, with_sup=check_sup)
    rep.data["series"] = ser
    lam1 = p.sigma + 1
    if check_sup:
        gap = np.maximum(np.abs(ser.r_outer - ser.radius), np.abs(ser.radius - ser.r_inner))
        if np.max(ser.sup_dev) <= SIGNAL_FLOOR:
            rep.add("sup |v - v*|", 0.0, float(np.max(ser.sup_dev)), "exact", True)
        else:
            rate = lam1 if expected_rate is None else expected_rate
            _fit_or_floor(rep, "pressure rate", ser.times, ser.sup_dev, window, expected=rate, rel=tol)
            C = float(np.max(gap * np.exp(lam1 * ser.times)))
            rep.data["support_C"] = C
            rep.add("support sandwich constant", 0.0, C, "finite", bool(np.isfinite(C)))
    dr = moment_drifts(ser, p, moment_t_max)
    rep.data["drifts"] = dr
    rep.add_max("mass drift per unit time", 1e-6, dr["mass_drift_per_time"])
    _moment_row(rep, "first", dr)
    if p.N >= 2:
        _moment_row(rep, "second", dr)
    return rep


def _moment_row(rep: Report, which: str, dr: dict) -> None:
    """Relative drift, or the absolute size when the scaled moment vanishes."""
    scale = dr[f"{which}_scale"]
    if scale > MOMENT_FLOOR:
        rep.add_max(f"scaled {which} moment drift", 0.01, dr[f"{which}_drift"])
    else:
        rep.add_max(f"scaled {which} moment (identically zero)", MOMENT_FLOOR, scale)


def rate_ordering(rates: dict[str, float], params: ModelParams) -> Report:
    """Leading rates ordered ``sigma+1 < 2(sigma+1) < min(2(sigma+1)+N, 3(sigma+1))``."""
    s1 = params.sigma + 1
    ladder = [s1, 2 * s1, min(2 * s1 + params.N, 3 * s1)]
    rep = Report("ordering")
    keys = list(rates)
    vals = [rates[k] for k in keys]
    rep.data["ladder"] = ladder
    ok = all(vals[i] < vals[i + 1] for i in range(len(vals) - 1))
    rep.add("strictly increasing", 1.0, float(ok), " < ".join(keys), ok)
    return rep
