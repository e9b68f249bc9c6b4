"""Weighted measures on the unit ball, Gauss-Jacobi quadrature and inner products.

The reference measure is ``mu_sigma = rho(z)**sigma dz`` with
``rho(z) = (1 - |z|**2) / 2``.  Radial integrals are reduced to a classical
Jacobi weight through ``u = r**2``, so that the nodes never touch the
degenerate boundary ``rho = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .errors import ConstructionError, DomainError, ShapeError

SECTORS = ("radial", "full_1d", "full_2d")


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``N`` and exponent ``sigma`` of the weighted problem."""

    N: int
    sigma: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be an integer >= 1, got {self.N!r}")
        if not np.isfinite(self.sigma) or self.sigma <= -1.0:
            raise DomainError(f"sigma must satisfy sigma > -1, got {self.sigma!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def beta(self) -> float:
        return self.N + 2.0 * self.sigma + 1.0

    @property
    def m(self) -> float:
        """Porous-medium exponent, ``m = (sigma+2)/(sigma+1)``."""
        return (self.sigma + 2.0) / (self.sigma + 1.0)

    @property
    def gamma(self) -> float:
        return (2.0 * (self.sigma + 1.0) + self.N) / self.N

    @classmethod
    def from_m(cls, N: int, m: float) -> "ModelParams":
        if m <= 1.0:
            raise DomainError(f"m must exceed 1, got {m!r}")
        return cls(N, (2.0 - m) / (m - 1.0))


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N=1)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def rho(z) -> np.ndarray | float:
    """``rho(z) = (1 - |z|^2)/2`` on the closed unit ball.

    ``z`` has shape ``(N,)`` or ``(n, N)``; a scalar is read as a 1D point.
    """
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        r2 = arr * arr
    else:
        r2 = np.sum(arr * arr, axis=-1)
    if np.any(r2 > (1.0 + 1e-12) ** 2):
        raise DomainError("rho is only defined on the closed unit ball")
    out = np.maximum(0.5 * (1.0 - r2), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def gauss_jacobi(alpha: float, beta: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Golub-Welsch nodes and weights on [-1, 1] for ``(1-x)^alpha (1+x)^beta``."""
    if order < 1:
        raise DomainError("quadrature order must be >= 1")
    if alpha <= -1 or beta <= -1:
        raise DomainError("Jacobi parameters must exceed -1")
    n = np.arange(order, dtype=float)
    ab = alpha + beta
    diag = np.empty(order)
    diag[0] = (beta - alpha) / (ab + 2.0)
    if order > 1:
        k = n[1:]
        s = 2.0 * k + ab
        diag[1:] = (beta * beta - alpha * alpha) / (s * (s + 2.0))
    off = np.empty(max(order - 1, 0))
    if order > 1:
        # n = 1 written with the (1 + alpha + beta) factor cancelled
        off[0] = 4.0 * (1 + alpha) * (1 + beta) / ((2 + ab) ** 2 * (3 + ab))
        if order > 2:
            k = n[2:]
            s = 2.0 * k + ab
            off[1:] = 4.0 * k * (k + alpha) * (k + beta) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))
        off = np.sqrt(off)
    try:
        nodes, vecs = eigh_tridiagonal(diag, off)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConstructionError(f"tridiagonal eigen-solve failed: {exc}") from exc
    if not np.all(np.isfinite(nodes)):
        raise ConstructionError("non-finite Gauss-Jacobi nodes")
    log_mu0 = (ab + 1.0) * math.log(2.0) + gammaln(alpha + 1) + gammaln(beta + 1) - gammaln(ab + 2)
    weights = math.exp(log_mu0) * vecs[0, :] ** 2
    return nodes, weights


@dataclass(frozen=True)
class RadialQuadrature:
    """Nodes ``r_q`` in (0,1) and weights for ``int_0^1 f(r) rho(r)^sigma r^(N-1) dr``."""

    params: ModelParams
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def ball_measure(self) -> float:
        """``|B|_sigma`` as sphere area times the weight sum."""
        return sphere_area(self.params.N) * float(np.sum(self.weights))


def build_radial_quadrature(params: ModelParams, order: int) -> RadialQuadrature:
    """Gauss-Jacobi rule in ``u = r^2`` with weight ``(1-u)^sigma u^((N-2)/2)``."""
    a, b = params.sigma, (params.N - 2) / 2.0
    x, wx = gauss_jacobi(a, b, order)
    u = 0.5 * (1.0 + x)
    # dx weight -> du weight, then r^(N-1) rho^sigma dr = 2^(-sigma-1) (1-u)^sigma u^((N-2)/2) du
    wu = wx / 2.0 ** (a + b + 1.0)
    weights = wu * 2.0 ** (-params.sigma - 1.0)
    nodes = np.sqrt(u)
    order_idx = np.argsort(nodes)
    nodes, weights = nodes[order_idx], weights[order_idx]
    if not (np.all(nodes > 0) and np.all(nodes < 1) and np.all(weights > 0)):
        raise ConstructionError("quadrature nodes must be interior with positive weights")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return RadialQuadrature(params, order, nodes, weights)


@dataclass(frozen=True, eq=False)
class BallGrid:
    """Quadrature grid on the unit ball for one solver sector.

    ``points`` has shape ``(n, N)``; ``weights`` integrate against ``mu_sigma``.
    In the radial sector the points lie on the positive ``e_1`` ray and the
    weights carry the sphere area, so only radial integrands are allowed.
    """

    params: ModelParams
    sector: str
    points: np.ndarray
    weights: np.ndarray
    quadrature: RadialQuadrature
    n_angles: int = 0
    rho_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rho_values", 0.5 * (1.0 - np.sum(self.points**2, axis=1)))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def ball_measure(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, values, weight_shift: int = 0) -> float:
        """Sum of ``values * rho^weight_shift`` against ``mu_sigma``."""
        values = _as_node_values(values, self)
        w = self.weights if weight_shift == 0 else self.weights * self.rho_values**weight_shift
        return float(np.dot(w, values))


def build_ball_grid(params: ModelParams, sector: str, order: int, n_angles: int | None = None) -> BallGrid:
    """Tensor grid for ``sector`` (``radial``, ``full_1d`` or ``full_2d``)."""
    if sector not in SECTORS:
        raise DomainError(f"unknown sector {sector!r}")
    quad = build_radial_quadrature(params, order)
    r, w = quad.nodes, quad.weights
    N = params.N
    if sector == "radial":
        pts = np.zeros((order, N))
        pts[:, 0] = r
        return BallGrid(params, sector, pts, w * sphere_area(N), quad)
    if sector == "full_1d":
        if N != 1:
            raise DomainError("full_1d sector needs N = 1")
        pts = np.concatenate([r, -r])[:, None]
        return BallGrid(params, sector, pts, np.concatenate([w, w]), quad)
    if N != 2:
        raise DomainError("full_2d sector needs N = 2")
    K = int(n_angles) if n_angles else 2 * order + 2
    phi = 2.0 * np.pi * np.arange(K) / K
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    pts = np.stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()], axis=1)
    ww = np.repeat(w * (2.0 * np.pi / K), K)
    return BallGrid(params, sector, pts, ww, quad, n_angles=K)


def _as_node_values(f, grid: BallGrid) -> np.ndarray:
    if hasattr(f, "values_at"):
        return f.values_at(grid.points)
    if callable(f):
        return np.asarray(f(grid.points), dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.size, float(arr))
    if arr.shape != (grid.size,):
        raise ShapeError(f"field has shape {arr.shape}, grid has {grid.size} nodes")
    return arr


def _as_node_gradients(f, grid: BallGrid) -> np.ndarray:
    if hasattr(f, "gradient_at"):
        return f.gradient_at(grid.points)
    arr = np.asarray(f, dtype=float)
    if arr.shape != grid.points.shape:
        raise ShapeError(f"gradient has shape {arr.shape}, expected {grid.points.shape}")
    return arr


def inner_sigma(f, g, grid: BallGrid) -> float:
    """``int f g dmu_sigma`` by quadrature.

    ``f`` and ``g`` are node-value arrays, scalars, callables of points, or
    spectral fields (anything with ``values_at``).
    """
    fv = _as_node_values(f, grid)
    gv = _as_node_values(g, grid)
    return float(np.dot(grid.weights, fv * gv))


def inner_grad_sigma1(f, g, grid: BallGrid) -> float:
    """``int grad f . grad g dmu_{sigma+1}`` by quadrature.

    Arguments are spectral fields or node-gradient arrays of shape ``(n, N)``.
    """
    fg = _as_node_gradients(f, grid)
    gg = _as_node_gradients(g, grid)
    return float(np.dot(grid.weights * grid.rho_values, np.sum(fg * gg, axis=1)))


def ball_measure(params: ModelParams, shift: int = 0) -> float:
    """Closed form ``|B|_{sigma+shift}`` via the Beta function."""
    s = params.sigma + shift
    N = params.N
    log_beta = gammaln(s + 1) + gammaln(N / 2.0) - gammaln(s + 1 + N / 2.0)
    return sphere_area(N) * 2.0 ** (-s - 1.0) * math.exp(log_beta)
