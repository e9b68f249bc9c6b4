"""Eigenstructure of ``L = -rho*Laplacian + (sigma+1) z.grad`` on the unit ball.

Eigenfunctions are products of a terminating hypergeometric polynomial in
``|z|^2`` and a solid harmonic of degree ``l``.  Each mode keeps two
representations: exact Cartesian coefficients (for symbolic checks and
``operator_apply``) and a Jacobi-polynomial evaluator that stays accurate at
high degree (for tabulation on quadrature grids).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import eval_jacobi, poch

from .errors import ConfigurationError, DomainError, InvalidIndexError, ShapeError
from .measures import BallGrid, ModelParams, build_ball_grid

# ---------------------------------------------------------------------------
# closed-form spectral data


def _check_index(params: ModelParams, l: int, k: int) -> None:
    if l < 0 or k < 0:
        raise InvalidIndexError(f"indices must be nonnegative, got l={l}, k={k}")
    if params.N == 1 and l > 1:
        raise InvalidIndexError(f"N=1 admits only l in {{0, 1}}, got l={l}")


def eigenvalue(params: ModelParams, l: int, k: int) -> float:
    """``lambda_{lk} = (sigma+1)(l+2k) + k(2k+2l+N-2)``."""
    _check_index(params, l, k)
    return (params.sigma + 1.0) * (l + 2 * k) + k * (2 * k + 2 * l + params.N - 2)


def multiplicity(params: ModelParams, l: int) -> int:
    """Number of independent spherical harmonics of degree ``l`` in R^N."""
    if l < 0:
        raise InvalidIndexError("l must be nonnegative")
    N = params.N
    if l == 0 or (l == 1 and N == 1):
        return 1
    if N == 1:
        return 0
    return math.factorial(N + l - 3) * (N + 2 * l - 2) // (math.factorial(l) * math.factorial(N - 2))


def radial_eigenpoly(params: ModelParams, l: int, k: int) -> list[float]:
    """Coefficients ``c_j`` of ``F(-k, sigma+l+N/2+k; l+N/2; x)`` in powers of ``x``."""
    _check_index(params, l, k)
    b = params.sigma + l + params.N / 2.0 + k
    c = l + params.N / 2.0
    return [float(poch(-k, j) * poch(b, j) / (poch(c, j) * math.factorial(j))) for j in range(k + 1)]


# ---------------------------------------------------------------------------
# polynomial representations


class CartesianPoly:
    """Dense polynomial in Cartesian coordinates (N = 1 or 2).

    ``coeffs[i]`` multiplies ``z^i`` (N=1); ``coeffs[i, j]`` multiplies
    ``z1^i z2^j`` (N=2).
    """

    def __init__(self, coeffs):
        self.coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        self.N = self.coeffs.ndim
        if self.N not in (1, 2):
            raise DomainError("Cartesian polynomials are implemented for N = 1, 2")

    @property
    def degree(self) -> int:
        nz = np.argwhere(np.abs(self.coeffs) > 0)
        return int(nz.sum(axis=1).max()) if nz.size else 0

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.N == 1:
            return P.polyval(pts[:, 0], self.coeffs)
        return P.polyval2d(pts[:, 0], pts[:, 1], self.coeffs)

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.N == 1:
            return P.polyval(pts[:, 0], P.polyder(self.coeffs))[:, None]
        gx = P.polyval2d(pts[:, 0], pts[:, 1], P.polyder(self.coeffs, axis=0))
        gy = P.polyval2d(pts[:, 0], pts[:, 1], P.polyder(self.coeffs, axis=1))
        return np.stack([gx, gy], axis=1)

    def _embed(self, arr: np.ndarray) -> np.ndarray:
        out = np.zeros(self.coeffs.shape)
        out[tuple(slice(0, s) for s in arr.shape)] = arr
        return out

    def apply_L(self, sigma: float) -> "CartesianPoly":
        c = self.coeffs
        if self.N == 1:
            if c.size < 3:
                lap = np.zeros_like(c)
            else:
                lap = self._embed(P.polyder(c, 2))
            rho_lap = 0.5 * lap
            rho_lap[2:] -= 0.5 * lap[:-2]
            euler = c * np.arange(c.size)
        else:
            lap = np.zeros_like(c)
            if c.shape[0] > 2:
                lap += self._embed(P.polyder(c, 2, axis=0))
            if c.shape[1] > 2:
                lap += self._embed(P.polyder(c, 2, axis=1))
            rho_lap = 0.5 * lap
            rho_lap[2:, :] -= 0.5 * lap[:-2, :]
            rho_lap[:, 2:] -= 0.5 * lap[:, :-2]
            i, j = np.indices(c.shape)
            euler = c * (i + j)
        return CartesianPoly(-rho_lap + (sigma + 1.0) * euler)

    def scaled(self, s: float) -> "CartesianPoly":
        return CartesianPoly(s * self.coeffs)


class RadialPoly:
    """Radial polynomial ``f(|z|^2)`` in R^N with coefficients in ``x = |z|^2``."""

    def __init__(self, coeffs, N: int):
        self.coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        self.N = int(N)

    @property
    def degree(self) -> int:
        nz = np.nonzero(self.coeffs)[0]
        return 2 * int(nz.max()) if nz.size else 0

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return P.polyval(np.sum(pts * pts, axis=1), self.coeffs)

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = P.polyval(np.sum(pts * pts, axis=1), P.polyder(self.coeffs))
        return 2.0 * d[:, None] * pts

    def apply_L(self, sigma: float) -> "RadialPoly":
        c = self.coeffs
        n = c.size
        d1 = np.zeros(n)
        d2 = np.zeros(n)
        if n > 1:
            d1[: n - 1] = P.polyder(c)
        if n > 2:
            d2[: n - 2] = P.polyder(c, 2)
        # L f = -(1-x)(N f' + 2x f'') + 2(sigma+1) x f'
        inner = self.N * d1
        inner[1:] += 2.0 * d2[:-1]
        out = -inner.copy()
        out[1:] += inner[:-1]
        out[1:] += 2.0 * (sigma + 1.0) * d1[:-1]
        return RadialPoly(out, self.N)

    def scaled(self, s: float) -> "RadialPoly":
        return RadialPoly(s * self.coeffs, self.N)


def _polymul2d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for (i, j), v in np.ndenumerate(a):
        if v != 0.0:
            out[i : i + b.shape[0], j : j + b.shape[1]] += v * b
    return out


def _harmonic_coeffs_2d(l: int, n: int) -> np.ndarray:
    """Coefficients of Re (n=1) or Im (n=2) of ``(z1 + i z2)^l``."""
    c = np.zeros((l + 1, l + 1))
    for j in range(l + 1):
        if (n == 1 and j % 2 == 0) or (n == 2 and j % 2 == 1):
            sign = (-1) ** (j // 2)
            c[l - j, j] = sign * math.comb(l, j)
    return c


def _radial_coeffs_2d(p: list[float]) -> np.ndarray:
    deg = 2 * (len(p) - 1)
    c = np.zeros((deg + 1, deg + 1))
    for m, pm in enumerate(p):
        for a in range(m + 1):
            c[2 * a, 2 * (m - a)] += pm * math.comb(m, a)
    return c


# ---------------------------------------------------------------------------
# modes


@dataclass(frozen=True, order=True)
class EigenIndex:
    l: int
    n: int
    k: int

    def __str__(self) -> str:
        return f"({self.l},{self.n},{self.k})"


@dataclass(frozen=True, eq=False)
class EigenMode:
    """One unit-normalized eigenfunction ``psi_{l n k}``."""

    params: ModelParams
    sector: str
    index: EigenIndex
    lam: float
    radial_coeffs: tuple[float, ...]
    norm_const: float
    degree: int

    # -- accurate evaluation via Jacobi polynomials --------------------------

    @cached_property
    def _jacobi(self) -> tuple[float, float, float]:
        l, k = self.index.l, self.index.k
        alpha = l + self.params.N / 2.0 - 1.0
        scale = math.factorial(k) / poch(alpha + 1.0, k)
        return alpha, scale, (k + alpha + self.params.sigma + 1.0) / 2.0

    def _radial(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self.index.k
        alpha, scale, dfac = self._jacobi
        y = 1.0 - 2.0 * x
        val = scale * eval_jacobi(k, alpha, self.params.sigma, y)
        if k == 0:
            der = np.zeros_like(x)
        else:
            der = -2.0 * scale * dfac * eval_jacobi(k - 1, alpha + 1.0, self.params.sigma + 1.0, y)
        return val, der

    def _harmonic(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        l, n = self.index.l, self.index.n
        npts, N = pts.shape
        if l == 0 or self.sector == "radial":
            return np.ones(npts), np.zeros((npts, N))
        if N == 1:
            return pts[:, 0].copy(), np.ones((npts, 1))
        zeta = pts[:, 0] + 1j * pts[:, 1]
        zl = zeta**l
        dz = l * zeta ** (l - 1)
        if n == 1:
            return zl.real, np.stack([dz.real, -dz.imag], axis=1)
        return zl.imag, np.stack([dz.imag, dz.real], axis=1)

    def raw_values(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r, _ = self._radial(np.sum(pts * pts, axis=1))
        h, _ = self._harmonic(pts)
        return r * h

    def evaluate(self, points) -> np.ndarray:
        """``psi(z)`` at points of shape ``(n, N)``."""
        pts = _check_points(points, self.params.N)
        return self.norm_const * self.raw_values(pts)

    def gradient(self, points) -> np.ndarray:
        pts = _check_points(points, self.params.N)
        r, dr = self._radial(np.sum(pts * pts, axis=1))
        h, dh = self._harmonic(pts)
        return self.norm_const * (2.0 * (dr * h)[:, None] * pts + r[:, None] * dh)

    # -- exact Cartesian representation -------------------------------------

    def polynomial(self) -> CartesianPoly | RadialPoly:
        """Normalized polynomial representation of the mode."""
        p = list(self.radial_coeffs)
        l, n = self.index.l, self.index.n
        N = self.params.N
        if self.sector == "radial":
            return RadialPoly(p, N).scaled(self.norm_const)
        if N == 1:
            c = np.zeros(2 * len(p) - 1 + l)
            c[l :: 2] = p
            return CartesianPoly(c).scaled(self.norm_const)
        c = _polymul2d(_radial_coeffs_2d(p), _harmonic_coeffs_2d(l, n))
        return CartesianPoly(c).scaled(self.norm_const)


def _check_points(points, N: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != N:
        if N == 1 and pts.shape[0] == 1:
            pts = pts.T
        else:
            raise ShapeError(f"points must have {N} columns, got shape {pts.shape}")
    if np.any(np.sum(pts * pts, axis=1) > (1.0 + 1e-12) ** 2):
        raise DomainError("points must lie in the closed unit ball")
    return pts


def eigenfunction_eval(mode: EigenMode, z) -> np.ndarray | float:
    """Evaluate a mode; scalar input gives scalar output."""
    arr = np.asarray(z, dtype=float)
    single = arr.ndim <= 1
    pts = arr.reshape(1, -1) if single else arr
    out = mode.evaluate(pts)
    return float(out[0]) if single else out


def gram_order(max_degree: int) -> int:
    """Smallest radial order whose rule is exact for products of modes."""
    return max(1, (max_degree + 2) // 2)


class ModeSet:
    """Ordered, orthonormal set of eigenmodes for one sector."""

    def __init__(self, params: ModelParams, sector: str, modes: list[EigenMode], max_degree: int, grid: BallGrid):
        self.params = params
        self.sector = sector
        self.modes = tuple(modes)
        self.max_degree = max_degree
        self.grid = grid
        self.lambdas = np.array([m.lam for m in modes])
        self.lambdas.setflags(write=False)
        self._tab_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def size(self) -> int:
        return len(self.modes)

    def position(self, l: int, n: int, k: int) -> int:
        idx = EigenIndex(l, n, k)
        for i, m in enumerate(self.modes):
            if m.index == idx:
                return i
        raise InvalidIndexError(f"mode {idx} not in the mode set")

    def distinct_eigenvalues(self, tol: float = 1e-9) -> np.ndarray:
        vals: list[float] = []
        for lam in np.sort(self.lambdas):
            if not vals or lam - vals[-1] > tol:
                vals.append(float(lam))
        return np.array(vals)

    @property
    def constant_position(self) -> int:
        return self.position(0, 1, 0)

    def tabulate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(M, n)`` and gradients ``(M, n, N)`` of all modes."""
        pts = _check_points(points, self.params.N)
        key = id(points)
        cached = self._tab_cache.get(key)
        if cached is not None and cached[0] is points:
            return cached[1], cached[2]
        vals = np.stack([m.evaluate(pts) for m in self.modes])
        grads = np.stack([m.gradient(pts) for m in self.modes])
        if isinstance(points, np.ndarray):
            if len(self._tab_cache) >= 16:
                self._tab_cache.pop(next(iter(self._tab_cache)))
            self._tab_cache[key] = (points, vals, grads)
        return vals, grads

    def evaluate(self, coeffs, points) -> np.ndarray:
        vals, _ = self.tabulate(points)
        return np.asarray(coeffs) @ vals

    def gradient(self, coeffs, points) -> np.ndarray:
        _, grads = self.tabulate(points)
        return np.einsum("i,ijk->jk", np.asarray(coeffs), grads)

    def gram(self, grid: BallGrid | None = None) -> np.ndarray:
        g = grid or self.grid
        vals, _ = self.tabulate(g.points)
        return (vals * g.weights) @ vals.T

    def field(self, coeffs=None) -> "SpectralField":
        c = np.zeros(self.size) if coeffs is None else np.asarray(coeffs, dtype=float)
        return SpectralField(self, c)

    def unit(self, l: int, n: int, k: int, amplitude: float = 1.0) -> "SpectralField":
        c = np.zeros(self.size)
        c[self.position(l, n, k)] = amplitude
        return SpectralField(self, c)

    def constant(self, value: float) -> "SpectralField":
        """Spectral field of the constant function ``value``."""
        c = np.zeros(self.size)
        c[self.constant_position] = value / self.modes[self.constant_position].norm_const
        return SpectralField(self, c)


def _enumerate_indices(params: ModelParams, sector: str, max_degree: int, l_max: int | None, radial_degree: int | None):
    N = params.N
    if sector == "radial":
        ls = [0]
    elif sector == "full_1d":
        ls = [0, 1]
    else:
        ls = list(range(0, max_degree + 1))
    for l in ls:
        if l_max is not None and l > l_max:
            continue
        nmax = 1 if sector == "radial" else multiplicity(params, l)
        for k in range(0, (max_degree - l) // 2 + 1):
            if radial_degree is not None and 2 * k > radial_degree:
                continue
            for n in range(1, nmax + 1):
                yield EigenIndex(l, n, k)


def build_mode_set(
    params: ModelParams,
    sector: str,
    max_degree: int,
    *,
    l_max: int | None = None,
    radial_degree: int | None = None,
    quad_order: int | None = None,
) -> ModeSet:
    """Assemble and normalize all modes of total degree ``<= max_degree``.

    ``l_max`` caps the angular degree and ``radial_degree`` caps ``2k``.
    """
    if sector == "full_1d" and params.N != 1:
        raise ConfigurationError("full_1d sector needs N = 1")
    if sector == "full_2d" and params.N != 2:
        raise ConfigurationError("full_2d sector needs N = 2")
    if sector not in ("radial", "full_1d", "full_2d"):
        raise ConfigurationError(f"unknown sector {sector!r}")
    if max_degree < 0:
        raise ConfigurationError("max_degree must be nonnegative")
    need = gram_order(max_degree)
    order = need + 1 if quad_order is None else int(quad_order)
    if order < need:
        raise ConfigurationError(f"quadrature order {order} too small for exact Gram integrals (need >= {need})")
    n_angles = 2 * max_degree + 2 if sector == "full_2d" else None
    grid = build_ball_grid(params, sector, order, n_angles)

    modes = []
    for idx in _enumerate_indices(params, sector, max_degree, l_max, radial_degree):
        coeffs = tuple(radial_eigenpoly(params, idx.l, idx.k))
        proto = EigenMode(params, sector, idx, eigenvalue(params, idx.l, idx.k), coeffs, 1.0, idx.l + 2 * idx.k)
        nrm2 = float(np.dot(grid.weights, proto.raw_values(grid.points) ** 2))
        modes.append(
            EigenMode(params, sector, idx, proto.lam, coeffs, 1.0 / math.sqrt(nrm2), proto.degree)
        )
    modes.sort(key=lambda m: (m.lam, m.index.l, m.index.n, m.index.k))
    return ModeSet(params, sector, modes, max_degree, grid)


# ---------------------------------------------------------------------------
# fields and operators


@dataclass(eq=False)
class SpectralField:
    """Coefficient vector over a mode set."""

    mode_set: ModeSet
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mode_set.size,):
            raise ShapeError("coefficient vector does not match the mode set")

    def values_at(self, points) -> np.ndarray:
        return self.mode_set.evaluate(self.coeffs, points)

    def gradient_at(self, points) -> np.ndarray:
        return self.mode_set.gradient(self.coeffs, points)

    def __call__(self, points) -> np.ndarray:
        return self.values_at(points)

    def _compatible(self, other: "SpectralField") -> None:
        if other.mode_set is not self.mode_set:
            raise ShapeError("fields live on different mode sets")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._compatible(other)
        return SpectralField(self.mode_set, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._compatible(other)
        return SpectralField(self.mode_set, self.coeffs - other.coeffs)

    def __mul__(self, s: float) -> "SpectralField":
        return SpectralField(self.mode_set, s * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.mode_set, -self.coeffs)

    def copy(self) -> "SpectralField":
        return SpectralField(self.mode_set, self.coeffs.copy())

    def norm(self) -> float:
        """``L^2_sigma`` norm (Parseval in the orthonormal basis)."""
        return float(np.linalg.norm(self.coeffs))

    def mean(self) -> float:
        """``|B|^{-1} int w dmu_sigma``."""
        i = self.mode_set.constant_position
        return float(self.coeffs[i] * self.mode_set.modes[i].norm_const)


def operator_apply(field, params: ModelParams | None = None):
    """Apply ``L`` to a spectral field or a polynomial.

    Polynomials are differentiated exactly; spectral fields are scaled
    mode-wise (they are expanded in eigenfunctions).
    """
    if isinstance(field, SpectralField):
        return SpectralField(field.mode_set, field.mode_set.lambdas * field.coeffs)
    if isinstance(field, (CartesianPoly, RadialPoly)):
        if params is None:
            raise ConfigurationError("params required to apply L to a polynomial")
        return field.apply_L(params.sigma)
    raise TypeError(f"cannot apply L to {type(field).__name__}")


Subset = Callable[[EigenMode], bool] | Iterable[int] | None


def _subset_mask(mode_set: ModeSet, subset: Subset) -> np.ndarray:
    if subset is None:
        return np.ones(mode_set.size, dtype=bool)
    if callable(subset):
        return np.array([bool(subset(m)) for m in mode_set.modes])
    mask = np.zeros(mode_set.size, dtype=bool)
    mask[list(subset)] = True
    return mask


def project(field, mode_set: ModeSet, subset: Subset = None, grid: BallGrid | None = None) -> SpectralField:
    """``c_i = <field, psi_i>_sigma`` on the selected modes, zero elsewhere."""
    mask = _subset_mask(mode_set, subset)
    if isinstance(field, SpectralField) and field.mode_set is mode_set:
        return SpectralField(mode_set, np.where(mask, field.coeffs, 0.0))
    g = grid or mode_set.grid
    if hasattr(field, "values_at"):
        vals = field.values_at(g.points)
    elif callable(field):
        vals = np.asarray(field(g.points), dtype=float)
    else:
        vals = np.asarray(field, dtype=float)
        if vals.ndim == 0:
            vals = np.full(g.size, float(vals))
        if vals.shape != (g.size,):
            raise ShapeError("node values do not match the projection grid")
    table, _ = mode_set.tabulate(g.points)
    coeffs = table @ (g.weights * vals)
    return SpectralField(mode_set, np.where(mask, coeffs, 0.0))


def heat_semigroup(field: SpectralField, t: float) -> SpectralField:
    """Exact linear flow ``e^{-tL}`` in the eigenbasis."""
    if t < 0:
        raise DomainError("the heat semigroup is only defined for t >= 0")
    if t == 0:
        return field.copy()
    return SpectralField(field.mode_set, np.exp(-field.mode_set.lambdas * t) * field.coeffs)


def heat_kernel(t: float, z, z2, mode_set: ModeSet) -> np.ndarray | float:
    """Truncated kernel ``sum_i exp(-lambda_i t) psi_i(z) psi_i(z')``."""
    if t <= 0:
        raise DomainError("heat kernel requires t > 0")
    a = np.asarray(z, dtype=float)
    b = np.asarray(z2, dtype=float)
    single = a.ndim <= 1 and b.ndim <= 1
    N = mode_set.params.N
    pa = a.reshape(-1, N)
    pb = b.reshape(-1, N)
    va = np.stack([m.evaluate(pa) for m in mode_set.modes])
    vb = np.stack([m.evaluate(pb) for m in mode_set.modes])
    # split exp(-lambda t) evenly so that swapping z and z' is bitwise symmetric
    se = np.exp(-0.5 * mode_set.lambdas * t)[:, None]
    va, vb = se * va, se * vb
    if pa.shape[0] == pb.shape[0] or 1 in (pa.shape[0], pb.shape[0]):
        out = np.sum(va * vb, axis=0)
    else:
        out = va.T @ vb
    return float(out[0]) if single else out


def spectrum_table(params: ModelParams, sector: str, max_degree: int) -> list[tuple[int, int, int, int, float]]:
    """Rows ``(l, n, k, N_l, lambda)`` of the modes in a sector."""
    rows = []
    for idx in _enumerate_indices(params, sector, max_degree, None, None):
        mult = 1 if sector == "radial" else multiplicity(params, idx.l)
        rows.append((idx.l, idx.n, idx.k, mult, eigenvalue(params, idx.l, idx.k)))
    rows.sort(key=lambda r: (r[4], r[0], r[1], r[2]))
    return rows
