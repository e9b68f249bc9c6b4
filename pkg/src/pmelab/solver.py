"""Galerkin integration of the nonlinear perturbation equation.

The state is a coefficient vector over an orthonormal eigenbasis, so the
linear part is diagonal.  The nonlinearity

    F(q, p) = |p|^2 / (1 + q + z.p)

is evaluated pseudospectrally on a dealiased Gauss-Jacobi grid and tested
against each mode through the weak pairing

    <f(w), phi> = beta int phi F dmu_{sigma+1} + int (z.grad phi) F dmu_{sigma+1}.

Time stepping is exponential: integrating-factor Euler by default, with
exponential Runge-Kutta schemes (orders 2 and 4) for rate measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, RegimeExitError
from .measures import BallGrid, build_ball_grid
from .spectrum import ModeSet, SpectralField

SCHEMES = ("if_euler", "etdrk2", "etdrk4")


@dataclass(frozen=True)
class TruncationConfig:
    """Cutoff radii for the truncated nonlinearity."""

    eps: float
    delta: float

    def __post_init__(self):
        if self.eps <= 0 or self.delta <= 0:
            raise ConfigurationError("eps and delta must be positive")
        if math.sqrt(2.0) * (self.eps + self.delta) >= 1.0:
            raise ConfigurationError(
                f"truncation requires sqrt(2)(eps+delta) < 1, got {math.sqrt(2.0) * (self.eps + self.delta):.4g}"
            )


def _bridge_f(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def eta_hat(s) -> np.ndarray:
    """Smooth cutoff equal to 1 on [0,1] and vanishing on [2, inf)."""
    s = np.asarray(s, dtype=float)
    a = _bridge_f(2.0 - s)
    b = _bridge_f(s - 1.0)
    return a / (a + b)


def _shape_qpz(q, p, z):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    z = np.asarray(z, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if z.ndim == 0:
        z = z.reshape(1)
    return q, p, z


def nonlinearity_F(q, p, z, floor: float = 0.1):
    """``|p|^2/(1+q+z.p)``; raises when the denominator drops to ``floor``."""
    q, p, z = _shape_qpz(q, p, z)
    p2 = np.sum(p * p, axis=-1)
    den = 1.0 + q + np.sum(z * p, axis=-1)
    if np.any(den <= floor):
        raise RegimeExitError(f"denominator 1+q+z.p fell to {np.min(den):.3g} (floor {floor})")
    out = p2 / den
    return float(out) if np.ndim(out) == 0 else out


def truncation_factor(q, p2, trunc: TruncationConfig) -> np.ndarray:
    return eta_hat(np.asarray(q) ** 2 / trunc.delta**2) * eta_hat(np.asarray(p2) / trunc.eps**2)


def nonlinearity_F_truncated(q, p, z, trunc: TruncationConfig):
    """``eta(q, p) F(q, p)``; globally defined."""
    q, p, z = _shape_qpz(q, p, z)
    p2 = np.sum(p * p, axis=-1)
    eta = truncation_factor(q, p2, trunc)
    den = 1.0 + q + np.sum(z * p, axis=-1)
    active = eta > 0
    out = np.zeros(np.broadcast(q, p2).shape)
    out[active] = (eta * p2)[active] / np.broadcast_to(den, out.shape)[active]
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# configuration and discretization


@dataclass(eq=False)
class SolverConfig:
    """Numerical setup for one trajectory."""

    mode_set: ModeSet
    dt: float = 1e-3
    t_end: float = 1.0
    truncation: TruncationConfig | None = None
    dealias_grid_factor: float = 1.5
    denominator_floor: float = 0.1
    scheme: str = "if_euler"
    sample_dt: float = 1e-2
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < 0:
            raise ConfigurationError("t_end must be nonnegative")
        if self.dealias_grid_factor < 1.5:
            raise ConfigurationError("dealias_grid_factor must be >= 1.5")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}")
        if self.sample_dt < self.dt * (1 - 1e-12):
            raise ConfigurationError("sample_dt must be at least dt")

    @property
    def sector(self) -> str:
        return self.mode_set.sector

    @property
    def params(self):
        return self.mode_set.params

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def sample_every(self) -> int:
        return max(1, int(round(self.sample_dt / self.dt)))

    @cached_property
    def disc(self) -> "Discretization":
        return Discretization(self.mode_set, self.dealias_grid_factor)

    def replace(self, **kw) -> "SolverConfig":
        base = dict(
            mode_set=self.mode_set, dt=self.dt, t_end=self.t_end, truncation=self.truncation,
            dealias_grid_factor=self.dealias_grid_factor, denominator_floor=self.denominator_floor,
            scheme=self.scheme, sample_dt=self.sample_dt, nonlinear=self.nonlinear,
        )
        base.update(kw)
        out = SolverConfig(**base)
        if out.mode_set is self.mode_set and out.dealias_grid_factor == self.dealias_grid_factor and "disc" in self.__dict__:
            out.__dict__["disc"] = self.disc
        return out


def diagnostic_points(mode_set: ModeSet, grid: BallGrid | None = None) -> np.ndarray:
    """Dealiased nodes plus uniform samples reaching the boundary."""
    N = mode_set.params.N
    sector = mode_set.sector
    parts = [grid.points] if grid is not None else []
    if sector == "full_1d":
        parts.append(np.linspace(-1.0, 1.0, 401)[:, None])
    elif sector == "radial":
        pts = np.zeros((201, N))
        pts[:, 0] = np.linspace(0.0, 1.0, 201)
        parts.append(pts)
    else:
        r = np.linspace(0.0, 1.0, 41)[1:]
        phi = 2 * np.pi * np.arange(64) / 64
        rr, pp = np.meshgrid(r, phi, indexing="ij")
        parts.append(np.zeros((1, 2)))
        parts.append(np.stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()], axis=1))
    return np.concatenate(parts, axis=0)


class Discretization:
    """Dealiased grid with mode tabulations and weak-form test matrices."""

    def __init__(self, mode_set: ModeSet, factor: float = 1.5):
        self.mode_set = mode_set
        p = mode_set.params
        D = mode_set.max_degree
        order = max(2, math.ceil(factor * (D + 2) / 2.0))
        n_angles = None
        if mode_set.sector == "full_2d":
            n_angles = 2 * math.ceil(factor * (D + 1))
        self.grid = build_ball_grid(p, mode_set.sector, order, n_angles)
        self.phi, self.dphi = mode_set.tabulate(self.grid.points)
        z = self.grid.points
        w1 = self.grid.weights * self.grid.rho_values
        z_dot_grad = np.einsum("ijk,jk->ij", self.dphi, z)
        # rows: beta phi_i + z.grad phi_i, weighted for mu_{sigma+1}
        self.test = (p.beta * self.phi + z_dot_grad) * w1
        self.w1 = w1
        self.diag_points = diagnostic_points(mode_set, self.grid)
        self.diag_phi, self.diag_dphi = mode_set.tabulate(self.diag_points)
        self.lambdas = np.asarray(mode_set.lambdas)
        self.ball = self.grid.ball_measure

    def fields(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = c @ self.phi
        grad = np.einsum("i,ijk->jk", c, self.dphi)
        return w, grad

    def forcing(self, c: np.ndarray, config: SolverConfig) -> np.ndarray:
        """Node values of the (possibly truncated) nonlinearity."""
        w, grad = self.fields(c)
        z = self.grid.points
        if config.truncation is not None:
            return nonlinearity_F_truncated(w, grad, z, config.truncation)
        return nonlinearity_F(w, grad, z, config.denominator_floor)

    def rhs(self, c: np.ndarray, config: SolverConfig) -> np.ndarray:
        if not config.nonlinear:
            return np.zeros_like(c)
        return self.test @ self.forcing(c, config)

    def diagnostics(self, c: np.ndarray) -> tuple[float, float, float]:
        w = c @ self.diag_phi
        grad = np.einsum("i,ijk->jk", c, self.diag_dphi)
        return float(w.max()), float(w.min()), float(np.sqrt(np.max(np.sum(grad * grad, axis=1))))


# ---------------------------------------------------------------------------
# time stepping


def _phi_coefficients(lam: np.ndarray, h: float, scheme: str, n_contour: int = 64) -> dict[str, np.ndarray]:
    """Exponential-integrator weights for ``c' = -lam c + N`` (contour means)."""
    z = -lam * h
    out = {"E": np.exp(z), "E2": np.exp(z / 2.0)}
    if scheme == "if_euler":
        return out
    r = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    if scheme == "etdrk2":
        Z = z[:, None] + r[None, :]
        out["phi1"] = h * np.real(np.mean((np.exp(Z) - 1.0) / Z, axis=1))
        out["phi2"] = h * np.real(np.mean((np.exp(Z) - 1.0 - Z) / Z**2, axis=1))
        return out
    Z = z[:, None] + r[None, :]
    Zh = Z / 2.0
    out["Q"] = h * np.real(np.mean((np.exp(Zh) - 1.0) / Z, axis=1))
    out["f1"] = h * np.real(np.mean((-4.0 - Z + np.exp(Z) * (4.0 - 3.0 * Z + Z**2)) / Z**3, axis=1))
    out["f2"] = h * np.real(np.mean((2.0 + Z + np.exp(Z) * (-2.0 + Z)) / Z**3, axis=1))
    out["f3"] = h * np.real(np.mean((-4.0 - 3.0 * Z - Z**2 + np.exp(Z) * (4.0 - Z)) / Z**3, axis=1))
    return out


class _Stepper:
    def __init__(self, config: SolverConfig, h: float | None = None):
        self.config = config
        self.disc = config.disc
        self.h = config.dt if h is None else h
        self.coef = _phi_coefficients(self.disc.lambdas, self.h, config.scheme)

    def advance(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One step; returns the new state and the forcing at the old state."""
        cfg, d, k, h = self.config, self.disc, self.coef, self.h
        n0 = d.rhs(c, cfg)
        if cfg.scheme == "if_euler":
            new = k["E"] * (c + h * n0)
        elif cfg.scheme == "etdrk2":
            a = k["E"] * c + k["phi1"] * n0
            new = a + k["phi2"] * (d.rhs(a, cfg) - n0)
        else:
            a = k["E2"] * c + k["Q"] * n0
            na = d.rhs(a, cfg)
            b = k["E2"] * c + k["Q"] * na
            nb = d.rhs(b, cfg)
            cc = k["E2"] * a + k["Q"] * (2.0 * nb - n0)
            nc = d.rhs(cc, cfg)
            new = k["E"] * c + k["f1"] * n0 + 2.0 * k["f2"] * (na + nb) + k["f3"] * nc
        if not np.all(np.isfinite(new)):
            raise RegimeExitError("non-finite state after time step")
        return new, n0


def rhs_weak(w: SpectralField, config: SolverConfig) -> SpectralField:
    """Galerkin coefficients of the weak right-hand side."""
    return SpectralField(w.mode_set, config.disc.rhs(w.coeffs, config))


def step(state: SpectralField, config: SolverConfig) -> SpectralField:
    """Advance ``state`` by one step of size ``config.dt``."""
    new, _ = _Stepper(config).advance(state.coeffs)
    return SpectralField(state.mode_set, new)


@dataclass(eq=False)
class TrajectoryRecord:
    """Samples of a trajectory together with per-sample diagnostics."""

    config: SolverConfig
    times: np.ndarray
    coeffs: np.ndarray
    sup: np.ndarray
    inf: np.ndarray
    lip: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    energy_residual: np.ndarray
    mean_rate: np.ndarray
    g_sup: float
    g_inf: float
    min_mean_increment: float = 0.0
    failed: bool = False
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def mode_set(self) -> ModeSet:
        return self.config.mode_set

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.mode_set, self.coeffs[i].copy())

    @property
    def final(self) -> SpectralField:
        return self.field(-1)

    def means(self) -> np.ndarray:
        """``|B|^{-1} int w dmu_sigma`` at every sample."""
        i = self.mode_set.constant_position
        return self.coeffs[:, i] * self.mode_set.modes[i].norm_const

    def index_at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def to_rows(self) -> tuple[list[str], list[list[float]]]:
        M = self.coeffs.shape[1]
        header = ["t"] + [f"c_{i}" for i in range(M)] + ["sup", "inf", "lip", "l2", "h1", "energy_residual"]
        rows = []
        for i, t in enumerate(self.times):
            rows.append(
                [float(t), *map(float, self.coeffs[i]), float(self.sup[i]), float(self.inf[i]),
                 float(self.lip[i]), float(self.l2[i]), float(self.h1[i]), float(self.energy_residual[i])]
            )
        return header, rows


def evolve(g: SpectralField, config: SolverConfig) -> TrajectoryRecord:
    """Integrate from ``g`` to ``config.t_end``, sampling every ``sample_dt``.

    A regime exit or non-finite state ends the run early; the record is then
    truncated and flagged as failed.
    """
    d = config.disc
    lam = d.lambdas
    i0 = config.mode_set.constant_position
    psi0 = config.mode_set.modes[i0].norm_const
    stepper = _Stepper(config)
    damp = 0.5 * (1.0 - np.exp(-2.0 * lam * config.dt))

    c = g.coeffs.astype(float).copy()
    n_steps = config.n_steps
    every = config.sample_every
    times, coeffs, sups, infs, lips, l2s, h1s, eres, mrates = [], [], [], [], [], [], [], [], []
    half_g2 = 0.5 * float(c @ c)
    dissipation = 0.0
    work = 0.0
    min_inc = 0.0
    failed, message = False, ""

    def sample(t: float, state: np.ndarray, n_state: np.ndarray | None) -> None:
        s, i, lp = d.diagnostics(state)
        times.append(t)
        coeffs.append(state.copy())
        sups.append(s)
        infs.append(i)
        lips.append(lp)
        l2s.append(float(np.linalg.norm(state)))
        h1s.append(float(np.sqrt(max(float(lam @ (state * state)), 0.0))))
        eres.append(0.5 * float(state @ state) + dissipation - half_g2 - work)
        # d/dt of the mean is the constant-mode forcing scaled by psi_0
        if n_state is None:
            n_state = d.rhs(state, config)
        mrates.append(float(n_state[i0] * psi0))

    g_sup, g_inf, _ = d.diagnostics(c)
    try:
        sample(0.0, c, None)
        for n in range(1, n_steps + 1):
            new, n0 = stepper.advance(c)
            dissipation += float(damp @ (c * c))
            work += config.dt * float(n0 @ c)
            inc = (new[i0] - c[i0]) * psi0
            if inc < min_inc:
                min_inc = inc
            c = new
            if n % every == 0 or n == n_steps:
                sample(n * config.dt, c, None)
    except RegimeExitError as exc:
        failed, message = True, str(exc)

    return TrajectoryRecord(
        config=config,
        times=np.array(times),
        coeffs=np.array(coeffs).reshape(-1, c.size),
        sup=np.array(sups),
        inf=np.array(infs),
        lip=np.array(lips),
        l2=np.array(l2s),
        h1=np.array(h1s),
        energy_residual=np.array(eres),
        mean_rate=np.array(mrates),
        g_sup=g_sup,
        g_inf=g_inf,
        min_mean_increment=min_inc,
        failed=failed,
        message=message,
    )


def final_state(g: SpectralField, config: SolverConfig) -> SpectralField:
    """Integrate without storing samples; raises on regime exit."""
    stepper = _Stepper(config)
    c = g.coeffs.astype(float).copy()
    for _ in range(config.n_steps):
        c, _ = stepper.advance(c)
    return SpectralField(g.mode_set, c)


@dataclass
class ComparisonReport:
    passed: bool
    max_violation: float
    tol: float
    sup_g: float
    inf_g: float


def check_comparison(record: TrajectoryRecord, tol: float = 1e-6) -> ComparisonReport:
    """``inf g - tol <= w(t) <= sup g + tol`` at every sample."""
    over = float(np.max(record.sup - record.g_sup)) if record.sup.size else 0.0
    under = float(np.max(record.g_inf - record.inf)) if record.inf.size else 0.0
    viol = max(over, under, 0.0)
    return ComparisonReport(viol <= tol, viol, tol, record.g_sup, record.g_inf)


def energy_identity_residual(record: TrajectoryRecord) -> float:
    """Absolute residual of the energy identity at the final sample."""
    if record.energy_residual.size == 0:
        return 0.0
    return float(abs(record.energy_residual[-1]))


# ---------------------------------------------------------------------------
# initial data


def field_sup_lip(field: SpectralField, points: np.ndarray | None = None) -> tuple[float, float]:
    pts = diagnostic_points(field.mode_set) if points is None else points
    w = field.values_at(pts)
    grad = field.gradient_at(pts)
    return float(np.max(np.abs(w))), float(np.sqrt(np.max(np.sum(grad * grad, axis=1))))


def random_field(
    mode_set: ModeSet,
    seed: int,
    sup_target: float,
    lip_target: float,
    subset=None,
) -> SpectralField:
    """Seeded generic data with ``c_i ~ N(0,1)/(1+lambda_i^2)``.

    The nonconstant part is scaled to the Lipschitz target (or to the sup
    target if that binds first); the constant is then set so that
    ``max |g|`` equals ``sup_target`` when feasible.
    """
    rng = np.random.default_rng(seed)
    lam = mode_set.lambdas
    c = rng.standard_normal(mode_set.size) / (1.0 + lam**2)
    if subset is not None:
        mask = np.array([bool(subset(m)) for m in mode_set.modes])
        c = np.where(mask, c, 0.0)
    i0 = mode_set.constant_position
    c[i0] = 0.0
    h = SpectralField(mode_set, c)
    pts = diagnostic_points(mode_set)
    vals = h.values_at(pts)
    _, lip = field_sup_lip(h, pts)
    if lip == 0.0:
        return mode_set.constant(sup_target)
    s = lip_target / lip
    osc = float(vals.max() - vals.min())
    if s * osc / 2.0 > sup_target:
        s = 2.0 * sup_target / osc
    vals = s * vals
    shift = sup_target - float(vals.max())
    return h * s + mode_set.constant(shift)
