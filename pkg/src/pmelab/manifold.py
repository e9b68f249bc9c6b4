"""Time-one maps, center-manifold graph transform and stable-fiber rates.

Everything runs in the truncated dynamics, where the semi-flow is global.
The center space ``E_c`` is spanned by modes with eigenvalue at most the
``K``-th distinct eigenvalue (counting from ``lambda = 0``); ``E_s`` is the
rest of the truncation.  The map ``theta: E_c -> E_s`` is the stable part at
time zero of the unique orbit that stays slow in backward time, found by
iterating the graph transform on a finite window of times ``{-M, ..., M}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DivergentIterationError, InsufficientSignalError
from .solver import SolverConfig, TruncationConfig, _Stepper, evolve
from .spectrum import ModeSet, SpectralField, heat_semigroup


@dataclass(eq=False)
class ManifoldConfig:
    """Center cut, gap constants, sequence window and time stepping.

    ``Lambda_minus`` defaults to the geometric mean of ``Lambda_s`` and
    ``Lambda_c``; ``eps_gap`` must leave room on both sides of it.
    """

    mode_set: ModeSet
    K: int = 1
    truncation: TruncationConfig = field(default_factory=lambda: TruncationConfig(0.3, 0.3))
    eps_gap: float = 1e-3
    Lambda_minus: float | None = None
    Lambda_plus: float = 1.5
    window: int = 6
    n_iter: int = 60
    tol: float = 1e-15
    dt: float = 1e-2
    scheme: str = "etdrk4"

    def __post_init__(self):
        lam = self.mode_set.distinct_eigenvalues()
        if not 0 <= self.K < len(lam) - 1:
            raise ConfigurationError(f"K must lie in [0, {len(lam) - 2}] for this truncation")
        if self.window < 1 or self.n_iter < 1:
            raise ConfigurationError("window and n_iter must be positive")
        self.lambda_c = float(lam[self.K])
        self.lambda_s = float(lam[self.K + 1])
        if self.Lambda_minus is None:
            self.Lambda_minus = math.exp(-0.5 * (self.lambda_c + self.lambda_s))
        e = self.eps_gap
        if e <= 0:
            raise ConfigurationError("eps_gap must be positive")
        if not self.Lambda_s + e < self.Lambda_minus < self.Lambda_c - e:
            raise ConfigurationError(
                f"need Lambda_s + eps_gap < Lambda_minus < Lambda_c - eps_gap, got "
                f"{self.Lambda_s:.4g} + {e:.3g} < {self.Lambda_minus:.4g} < {self.Lambda_c:.4g} - {e:.3g}"
            )
        if not self.Lambda_plus > 1 + e:
            raise ConfigurationError("need Lambda_plus > 1 + eps_gap")
        self.center_mask = np.asarray(self.mode_set.lambdas) <= self.lambda_c + 1e-9
        self.solver = SolverConfig(self.mode_set, dt=self.dt, t_end=1.0, truncation=self.truncation,
                                   scheme=self.scheme, sample_dt=self.dt)
        self._stepper = None

    @property
    def Lambda_s(self) -> float:
        return math.exp(-self.lambda_s)

    @property
    def Lambda_c(self) -> float:
        return math.exp(-self.lambda_c)

    @property
    def kappa(self) -> float:
        """Fibration contraction ``max((Ls+e)/L-, (L-+e)/Lc)``."""
        e = self.eps_gap
        return max((self.Lambda_s + e) / self.Lambda_minus, (self.Lambda_minus + e) / self.Lambda_c)

    def stepper(self) -> _Stepper:
        if self._stepper is None:
            self._stepper = _Stepper(self.solver)
        return self._stepper


@dataclass(eq=False)
class SplitField:
    """Orthogonal decomposition into center and stable parts."""

    center: SpectralField
    stable: SpectralField

    def recombine(self) -> SpectralField:
        return self.center + self.stable


def split(g: SpectralField, config: ManifoldConfig) -> SplitField:
    m = config.center_mask
    return SplitField(SpectralField(g.mode_set, np.where(m, g.coeffs, 0.0)),
                      SpectralField(g.mode_set, np.where(m, 0.0, g.coeffs)))


def _flow(c: np.ndarray, config: ManifoldConfig, t: float = 1.0) -> np.ndarray:
    st = config.stepper()
    n = int(round(t / config.dt))
    for _ in range(n):
        c, _ = st.advance(c)
    return c


def time_one_map(g: SpectralField, config: ManifoldConfig) -> SpectralField:
    """``S(g)``: the truncated flow at time one."""
    return SpectralField(g.mode_set, _flow(g.coeffs.astype(float), config))


def remainder_map(g: SpectralField, config: ManifoldConfig) -> SpectralField:
    """``R(g) = S(g) - e^{-L} g``."""
    return time_one_map(g, config) - heat_semigroup(g, 1.0)


@dataclass
class GraphTransformResult:
    theta: SpectralField
    sequence: np.ndarray  # coefficients, rows k = -M .. M
    iterations: int
    contraction_factor: float
    update_history: list
    converged: bool

    def at(self, k: int) -> np.ndarray:
        M = (self.sequence.shape[0] - 1) // 2
        return self.sequence[k + M]


def _seq_norm(seq: np.ndarray, mask: np.ndarray, Lm: float, M: int) -> float:
    """``sup_k Lambda_-^{|k|} max(|P_c w_k|, |P_s w_k|)`` over ``k <= 0``."""
    best = 0.0
    for i, row in enumerate(seq):
        k = i - M
        nc = float(np.linalg.norm(row[mask]))
        ns = float(np.linalg.norm(row[~mask]))
        best = max(best, Lm ** abs(k) * max(nc, ns))
    return best


def graph_transform_theta(g_c: SpectralField, config: ManifoldConfig, window: int | None = None) -> GraphTransformResult:
    """Fixed point of the graph transform for the center datum ``g_c``.

    The backward half ``k = -M..0`` is iterated (center parts run backward
    through ``L_c^{-1}``, stable parts forward through ``S``) with a
    center-only closure at ``k = -M``; the forward half is the orbit of
    ``w_0`` once converged.
    """
    M = config.window if window is None else window
    mask = config.center_mask
    lam = np.asarray(config.mode_set.lambdas)
    gc = np.where(mask, g_c.coeffs, 0.0)
    if not np.allclose(gc, g_c.coeffs, atol=0.0):
        raise ConfigurationError("g_c must lie in the center space")
    inv_lin = np.where(mask, np.exp(lam), 0.0)
    lin = np.exp(-lam)
    # linear orbit as initial guess, rows k = -M .. 0
    seq = np.array([gc * np.where(mask, np.exp(-lam * k), 0.0) for k in range(-M, 1)])
    history: list[float] = []
    factor = 0.0
    converged = not np.any(gc)
    it = 0
    if not converged:
        for it in range(1, config.n_iter + 1):
            images = np.array([_flow(seq[i], config) for i in range(M)])  # S(w_k), k = -M..-1
            rem = images - lin * seq[:M]
            new = np.empty_like(seq)
            new[M] = np.where(mask, gc, images[M - 1])
            for i in range(M):
                # center: L_c^{-1} P_c (w_{k+1} - R(w_k))
                centre = inv_lin * (seq[i + 1] - rem[i])
                stable = np.where(mask, 0.0, images[i - 1]) if i > 0 else 0.0
                new[i] = np.where(mask, centre, stable)
            upd = _seq_norm(new - seq, mask, config.Lambda_minus, M)
            seq = new
            history.append(upd)
            if len(history) >= 3 and history[-2] > 0:
                ratios = [history[j] / history[j - 1] for j in range(len(history) - 2, len(history)) if history[j - 1] > 0]
                factor = max(ratios)
            scale = max(_seq_norm(seq, mask, config.Lambda_minus, M), 1e-300)
            if upd <= config.tol * scale or upd == 0.0:
                converged = True
                break
            if len(history) >= 6 and min(history[-3:]) > history[-6] * 0.999:
                raise DivergentIterationError(
                    f"graph transform stalled or diverged, measured contraction factor {factor:.3g}")
    forward = [seq[M]]
    for _ in range(M):
        forward.append(_flow(forward[-1], config))
    full = np.concatenate([seq, np.array(forward[1:])])
    theta = SpectralField(config.mode_set, np.where(mask, 0.0, seq[M]))
    return GraphTransformResult(theta, full, it, factor, history, converged)


def theta_map(g_c: SpectralField, config: ManifoldConfig) -> SpectralField:
    return graph_transform_theta(g_c, config).theta


def window_convergence(g_c: SpectralField, config: ManifoldConfig, extra: int = 2) -> float:
    """``|theta_M - theta_{M+extra}| / |theta_{M+extra}|``."""
    a = graph_transform_theta(g_c, config).theta
    b = graph_transform_theta(g_c, config, window=config.window + extra).theta
    nb = b.norm()
    return float((a - b).norm() / nb) if nb > 0 else float((a - b).norm())


@dataclass
class FiberRate:
    rate: float
    companion: SpectralField
    times: np.ndarray
    distances: np.ndarray
    window: tuple[float, float]


def fiber_rate(g: SpectralField, config: ManifoldConfig, offset: int = 1, span: float = 2.0,
               floor: float = 1e-13) -> FiberRate:
    """Decay per unit time of ``|S^t(g) - S^t(g~)|`` for a companion on ``W_c``.

    The companion is ``g~ = w_{-n}`` from the graph-transform sequence of
    the center part of ``S^n(g)``, ``n = offset``; both orbits then share a
    center component at time ``n`` and differ there by a stable vector.  The
    rate is fitted over ``t in [n, n + span]``.
    """
    mask = config.center_mask
    gn = _flow(g.coeffs.astype(float), config, float(offset))
    res = graph_transform_theta(SpectralField(g.mode_set, np.where(mask, gn, 0.0)), config,
                                window=max(config.window, offset))
    companion = SpectralField(g.mode_set, res.at(-offset).copy())
    cfg = config.solver.replace(t_end=offset + span, sample_dt=0.1)
    a = evolve(g, cfg)
    b = evolve(companion, cfg)
    if a.failed or b.failed:
        raise ConfigurationError(f"fiber orbit left the truncated regime: {a.message or b.message}")
    dist = np.linalg.norm(a.coeffs - b.coeffs, axis=1)
    sel = (a.times >= offset - 1e-9) & (a.times <= offset + span + 1e-9)
    t, d = a.times[sel], dist[sel]
    good = d > floor
    if good.sum() < 4:
        raise InsufficientSignalError("fiber distance fell below the floor before the window filled")
    t, d = t[good], d[good]
    slope = np.polyfit(t, np.log(d), 1)[0]
    return FiberRate(float(math.exp(slope)), companion, a.times, dist, (float(t[0]), float(t[-1])))
