"""Change of variables between the pressure ``v`` and the perturbation ``w``.

Forward:  ``z = x / sqrt(2v + |x|^2)``,  ``1 + w(z) = sqrt(2v(x) + |x|^2)``.
Inverse:  ``x = (1 + w(z)) z``,          ``v(x) = rho(z) (1 + w(z))^2``.

Both directions are realized pointwise by bisection along rays, where the
maps are monotone whenever the Jacobians are positive.  Moments of
``v^(sigma+1)`` are integrated after pulling back to the unit ball, which
keeps the fractional power of the free boundary out of the quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, FoldError, NonInvertibleError
from .measures import BallGrid, ModelParams, build_ball_grid

Array = np.ndarray
PointFn = Callable[[Array], Array]

BISECTION_TOL = 1e-13
PHYSICAL_SAMPLES = 2048


def barenblatt_pressure(R: float, x) -> Array | float:
    """``(R - |x|^2)_+ / 2``."""
    if R <= 0:
        raise DomainError("Barenblatt radius parameter must be positive")
    arr = np.asarray(x, dtype=float)
    r2 = arr * arr if arr.ndim == 0 else np.sum(arr * arr, axis=-1)
    out = 0.5 * np.maximum(R - r2, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _rays(points: Array) -> tuple[Array, Array]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.sqrt(np.sum(pts * pts, axis=1))
    e = np.zeros_like(pts)
    e[:, 0] = 1.0
    nz = r > 0
    e[nz] = pts[nz] / r[nz, None]
    return r, e


def _central_gradient(func: PointFn, pts: Array, h: float = 1e-6) -> Array:
    """Centered differences, one-sided where a neighbor leaves the support."""
    grad = np.empty_like(pts)
    for d in range(pts.shape[1]):
        step = np.zeros(pts.shape[1])
        step[d] = h
        fp, fm = func(pts + step), func(pts - step)
        g = (fp - fm) / (2 * h)
        out_p, out_m = fp <= 0, fm <= 0
        if np.any(out_p | out_m):
            f0 = func(pts)
            back = (3 * f0 - 4 * fm + func(pts - 2 * step)) / (2 * h)
            fwd = (-3 * f0 + 4 * fp - func(pts + 2 * step)) / (2 * h)
            g = np.where(out_p & ~out_m, back, np.where(out_m & ~out_p, fwd, g))
        grad[:, d] = g
    return grad


def _bisect(pred: Callable[[Array], Array], lo: Array, hi: Array, tol: float = BISECTION_TOL) -> Array:
    """Vectorized bisection for the boundary of ``{s : pred(s)}`` (true below)."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    for _ in range(200):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        below = pred(mid)
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def physical_sample_points(params: ModelParams, sector: str, radius: float, n: int = PHYSICAL_SAMPLES) -> Array:
    """Uniform samples over the bounding interval (1D/radial) or a polar grid (2D)."""
    if sector == "full_1d":
        return np.linspace(-radius, radius, n)[:, None]
    if sector == "radial":
        pts = np.zeros((n, params.N))
        pts[:, 0] = np.linspace(0.0, radius, n)
        return pts
    nr = max(n // 16, 32)
    r = np.linspace(0.0, radius, nr)
    phi = 2 * np.pi * np.arange(64) / 64
    rr, pp = np.meshgrid(r[1:], phi, indexing="ij")
    return np.concatenate([np.zeros((1, 2)), np.stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()], axis=1)])


def boundary_directions(params: ModelParams, sector: str, n: int = 256) -> Array:
    if sector == "full_1d":
        return np.array([[1.0], [-1.0]])
    if sector == "radial":
        e = np.zeros((1, params.N))
        e[0, 0] = 1.0
        return e
    phi = 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(phi), np.sin(phi)], axis=1)


@dataclass(eq=False)
class PerturbationProfile:
    """``w`` on the closed unit ball with its gradient."""

    params: ModelParams
    sector: str
    func: PointFn
    grad: PointFn
    field: object = None

    def __call__(self, z) -> Array:
        return self.func(np.atleast_2d(np.asarray(z, dtype=float)))

    def sample_points(self, n: int = 513) -> Array:
        if self.sector == "full_1d":
            return np.linspace(-1.0, 1.0, n)[:, None]
        if self.sector == "radial":
            pts = np.zeros((n, self.params.N))
            pts[:, 0] = np.linspace(0.0, 1.0, n)
            return pts
        r = np.linspace(0.0, 1.0, 65)[1:]
        phi = 2 * np.pi * np.arange(64) / 64
        rr, pp = np.meshgrid(r, phi, indexing="ij")
        return np.concatenate([np.zeros((1, 2)), np.stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()], axis=1)])

    def sup_norm(self, points: Array | None = None) -> float:
        pts = self.sample_points() if points is None else points
        return float(np.max(np.abs(self.func(pts))))

    def lip_norm(self, points: Array | None = None) -> float:
        pts = self.sample_points() if points is None else points
        g = self.grad(pts)
        return float(np.sqrt(np.max(np.sum(g * g, axis=1))))

    def jacobian(self, points: Array) -> Array:
        w = self.func(points)
        return jacobian_inverse(w, self.grad(points), points)


def perturbation_from_field(field, sector: str | None = None) -> PerturbationProfile:
    """Wrap a spectral field as a profile."""
    ms = field.mode_set
    return PerturbationProfile(ms.params, sector or ms.sector, field.values_at, field.gradient_at, field)


def perturbation_from_function(params: ModelParams, sector: str, func: PointFn, grad: PointFn | None = None) -> PerturbationProfile:
    if grad is None:
        grad = lambda z: _central_gradient(func, z)  # noqa: E731
    return PerturbationProfile(params, sector, func, grad)


@dataclass(eq=False)
class PressureProfile:
    """Nonnegative pressure with compact support.

    ``func`` evaluates ``v`` at physical points of shape ``(n, N)``;
    ``grad`` its gradient (finite differences if absent).  ``r_outer``
    bounds the support.  ``source`` is set when the profile is the image of
    a perturbation under the inverse map.
    """

    params: ModelParams
    sector: str
    func: PointFn
    r_outer: float
    grad_func: PointFn | None = None
    source: PerturbationProfile | None = None
    _grid: Array | None = field(default=None, repr=False)

    def __call__(self, x) -> Array:
        return self.func(np.atleast_2d(np.asarray(x, dtype=float)))

    def grad(self, x: Array) -> Array:
        if self.grad_func is not None:
            return self.grad_func(x)
        return _central_gradient(self.func, x)

    @property
    def grid(self) -> Array:
        if self._grid is None:
            self._grid = physical_sample_points(self.params, self.sector, self.r_outer * (1 + 1e-9))
        return self._grid

    @property
    def values(self) -> Array:
        return self.func(self.grid)


def barenblatt_profile(params: ModelParams, sector: str, R: float = 1.0) -> PressureProfile:
    return PressureProfile(
        params, sector, lambda x: barenblatt_pressure(R, x), float(np.sqrt(R)),
        grad_func=lambda x: np.where((np.sum(x * x, axis=1) < R)[:, None], -x, 0.0),
    )


def jacobian_forward(v_value, grad_v, x) -> Array | float:
    """``det grad Phi_0 = (2v+|x|^2)^(-N/2-1) (2v - x.grad v)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = np.atleast_2d(np.asarray(grad_v, dtype=float))
    v = np.asarray(v_value, dtype=float).reshape(-1)
    N = x.shape[1]
    base = 2 * v + np.sum(x * x, axis=1)
    if np.any(base <= 0):
        raise DomainError("jacobian_forward requires 2v + |x|^2 > 0")
    out = base ** (-N / 2.0 - 1.0) * (2 * v - np.sum(x * g, axis=1))
    return float(out[0]) if out.size == 1 else out


def jacobian_inverse(w_value, grad_w, z) -> Array | float:
    """``det grad (z -> (1+w)z) = (1+w)^(N-1) (1 + w + z.grad w)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    g = np.atleast_2d(np.asarray(grad_w, dtype=float))
    w = np.asarray(w_value, dtype=float).reshape(-1)
    N = z.shape[1]
    out = (1 + w) ** (N - 1) * (1 + w + np.sum(z * g, axis=1))
    return float(out[0]) if out.size == 1 else out


def forward_map_point(v: PressureProfile, x: Array) -> Array:
    """``Phi_0(x)`` for points in the positivity set."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x / np.sqrt(2 * v.func(x) + np.sum(x * x, axis=1))[:, None]


def _check_forward_jacobian(v: PressureProfile) -> None:
    pts = v.grid
    vals = v.func(pts)
    inside = vals > 1e-12
    if not np.any(inside):
        raise NonInvertibleError("pressure profile has empty positivity set")
    pin = pts[inside]
    jac = 2 * vals[inside] - np.sum(pin * v.grad(pin), axis=1)
    if np.any(jac <= 0):
        raise NonInvertibleError(f"Jacobian 2v - x.grad v <= 0 on the grid (min {jac.min():.3g})")


def forward_map(v: PressureProfile, check: bool = True) -> PerturbationProfile:
    """Perturbation ``w`` with ``w(Phi_0(x)) = sqrt(2v(x) + |x|^2) - 1``."""
    if check:
        _check_forward_jacobian(v)
    smax = v.r_outer * (1 + 1e-9)

    def preimage(z: Array) -> Array:
        r, e = _rays(z)
        if np.any(r > 1 + 1e-12):
            raise DomainError("forward_map output is defined on the closed unit ball")

        def below(s):
            x = s[:, None] * e
            phi = s / np.sqrt(2 * v.func(x) + s * s + 1e-300)
            return phi < r

        s = _bisect(below, np.zeros_like(r), np.full_like(r, smax))
        s[r == 0] = 0.0
        return s[:, None] * e

    def func(z: Array) -> Array:
        x = preimage(z)
        return np.sqrt(2 * v.func(x) + np.sum(x * x, axis=1)) - 1.0

    def grad(z: Array) -> Array:
        z = np.atleast_2d(z)
        x = preimage(z)
        g = np.sqrt(2 * v.func(x) + np.sum(x * x, axis=1)) - 1.0
        # one-sided limit from inside the support at the free boundary
        xin = np.where((v.func(x) > 0)[:, None], x, x * (1.0 - 1e-10))
        a = v.grad(xin) + x
        denom = 1.0 - np.sum(z * a, axis=1) / (1.0 + g)
        return a / denom[:, None]

    return PerturbationProfile(v.params, v.sector, func, grad)


def inverse_map(w: PerturbationProfile, check: bool = True) -> PressureProfile:
    """Pressure ``v((1+w(z))z) = rho(z)(1+w(z))^2``, zero off the support."""
    if not isinstance(w, PerturbationProfile):
        w = perturbation_from_field(w)
    if check:
        pts = w.sample_points()
        jac = w.jacobian(pts)
        if np.any(jac <= 0) or np.any(1 + w.func(pts) <= 0):
            raise FoldError(f"inverse map folds: min Jacobian {np.min(jac):.3g}")
    dirs = boundary_directions(w.params, w.sector)
    r_outer = float(np.max(1.0 + w.func(dirs)))

    def preimage(x: Array) -> tuple[Array, Array, Array]:
        r, e = _rays(x)
        edge = 1.0 + w.func(e)
        inside = r < edge

        def below(s):
            return (1.0 + w.func(s[:, None] * e)) * s < np.minimum(r, edge)

        s = _bisect(below, np.zeros_like(r), np.ones_like(r))
        s = np.where(inside, s, 1.0)
        s[r == 0] = 0.0
        return s[:, None] * e, inside, e

    def func(x: Array) -> Array:
        z, inside, _ = preimage(np.atleast_2d(x))
        wz = w.func(z)
        rho = 0.5 * (1.0 - np.sum(z * z, axis=1))
        return np.where(inside, rho * (1.0 + wz) ** 2, 0.0)

    def grad(x: Array) -> Array:
        x = np.atleast_2d(x)
        z, inside, _ = preimage(x)
        wz = w.func(z)
        gw = w.grad(z)
        # grad v + x = (1+w)/(1+w+z.grad w) grad w
        fac = (1.0 + wz) / (1.0 + wz + np.sum(z * gw, axis=1))
        return np.where(inside[:, None], fac[:, None] * gw - x, 0.0)

    return PressureProfile(w.params, w.sector, func, r_outer, grad_func=grad, source=w)


def support_bounds(v: PressureProfile) -> tuple[float, float]:
    """Min and max of ``|x|`` over the support boundary."""
    dirs = boundary_directions(v.params, v.sector)
    if v.source is not None:
        radii = 1.0 + v.source.func(dirs)
    else:
        smax = v.r_outer * (1 + 1e-9)
        radii = _bisect(lambda s: v.func(s[:, None] * dirs) > 0, np.zeros(len(dirs)), np.full(len(dirs), smax))
    return float(np.min(radii)), float(np.max(radii))


# ---------------------------------------------------------------------------
# moments


def moment_grid(params: ModelParams, sector: str, order: int = 48) -> BallGrid:
    n_angles = 96 if sector == "full_2d" else None
    return build_ball_grid(params, sector, order, n_angles)


@dataclass
class MomentValues:
    mass: float
    first: Array
    second: Array  # full matrix int v^(sigma+1) x_i x_j dx


def pullback_moments(w: PerturbationProfile, grid: BallGrid | None = None) -> MomentValues:
    """Moments of ``v^(sigma+1)`` for ``v`` the inverse image of ``w``."""
    p = w.params
    g = grid or moment_grid(p, w.sector)
    z = g.points
    wz = w.func(z)
    gw = w.grad(z)
    jac = jacobian_inverse(wz, gw, z)
    dens = g.weights * g.rho_values * (1.0 + wz) ** (2 * p.sigma + 2) * np.atleast_1d(jac)
    x = (1.0 + wz)[:, None] * z
    mass = float(np.sum(dens))
    if w.sector == "radial" and p.N > 1:
        first = np.zeros(p.N)
        r2 = float(np.sum(dens * np.sum(x * x, axis=1)))
        second = np.eye(p.N) * r2 / p.N
    else:
        first = dens @ x
        second = (dens[:, None] * x).T @ x
    return MomentValues(mass, first, second)


def _moments_of(v: PressureProfile) -> MomentValues:
    src = v.source if v.source is not None else forward_map(v)
    return pullback_moments(src)


def mass(v: PressureProfile) -> float:
    """``int v^(sigma+1) dx``."""
    return _moments_of(v).mass


def first_moment(v: PressureProfile) -> Array:
    """``int v^(sigma+1) x dx``."""
    return _moments_of(v).first


def second_moment(v: PressureProfile, M) -> float:
    """``int v^(sigma+1) x.Mx dx`` for a symmetric trace-free ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.allclose(M, M.T) or abs(np.trace(M)) > 1e-12 * max(1.0, np.abs(M).max()):
        raise DomainError("M must be symmetric and trace-free")
    return float(np.sum(_moments_of(v).second * M))


def lipschitz_bounds(delta0: float, eps0: float) -> tuple[float, float]:
    """Upper bounds on ``||w||_inf`` and ``||w||_Lip`` from pressure smallness."""
    if eps0 + 2 * delta0 >= 1:
        raise DomainError("bounds need eps0 + 2 delta0 < 1")
    return 2 * delta0, (1 + 2 * delta0) * eps0 / (1 - 2 * delta0 - eps0)


def pressure_smallness(v: PressureProfile) -> tuple[float, float]:
    """``(sup |v - rho|, sup |grad(v - rho)|)`` over the positivity set samples."""
    pts = v.grid
    vals = v.func(pts)
    inside = vals > 0
    pin = pts[inside]
    rho = 0.5 * (1.0 - np.sum(pin * pin, axis=1))
    d0 = float(np.max(np.abs(vals[inside] - rho)))
    gr = v.grad(pin) + pin
    e0 = float(np.sqrt(np.max(np.sum(gr * gr, axis=1))))
    return d0, e0
