"""Intrinsic geometry of the unit ball under the metric ``|dz|^2 / (1 - |z|^2)``.

In polar coordinates with ``|z| = sin s`` the length element becomes
``ds^2 + tan(s)^2 dtheta^2``, so ``s`` is the geodesic distance from the
origin and the boundary sits at the finite depth ``s = pi/2``.  The numeric
oracle meshes rings that are uniform in ``s`` and runs Dijkstra on straight
chords whose lengths are integrated exactly enough by Gauss-Legendre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.stats import qmc

from .errors import ConstructionError, DomainError
from .measures import ModelParams, ball_measure

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class GeoPoint:
    """Point of the closed unit ball."""

    coords: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.coords))
        if sum(x * x for x in c) > (1 + 1e-12) ** 2:
            raise DomainError("GeoPoint must lie in the closed unit ball")
        object.__setattr__(self, "coords", c)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)


def _pt(z) -> np.ndarray:
    arr = z.array if isinstance(z, GeoPoint) else np.atleast_1d(np.asarray(z, dtype=float))
    if np.sum(arr * arr, axis=-1).max() > (1 + 1e-12) ** 2:
        raise DomainError("points must lie in the closed unit ball")
    return arr


def semimetric(z1, z2) -> float | np.ndarray:
    """``|z1 - z2| / (sqrt(rho(z1)) + sqrt(rho(z2)) + sqrt(|z1 - z2|))``.

    Accepts single points or stacked arrays of shape ``(n, N)``.
    """
    a, b = _pt(z1), _pt(z2)
    delta = a - b
    # scale before squaring so tiny separations do not underflow
    m = np.max(np.abs(delta), axis=-1)
    safe_m = np.where(m > 0, m, 1.0)
    diff = m * np.sqrt(np.sum((delta / np.expand_dims(safe_m, -1)) ** 2, axis=-1))
    ra = np.sqrt(np.maximum(0.5 * (1 - np.sum(a * a, axis=-1)), 0.0))
    rb = np.sqrt(np.maximum(0.5 * (1 - np.sum(b * b, axis=-1)), 0.0))
    den = ra + rb + np.sqrt(diff)
    out = np.where(diff > 0, diff / np.where(den > 0, den, 1.0), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _check_r(r: float) -> None:
    if not 0 < r <= 0.5:
        raise DomainError(f"hypocycloid radius must lie in (0, 1/2], got {r!r}")


def hypocycloid_point(r: float, t) -> np.ndarray:
    """Point of the hypocycloid through ``(1, 0)`` traced by a circle of radius ``r``."""
    _check_r(r)
    t = np.asarray(t, dtype=float)
    a, b = math.sqrt(r / (1 - r)), math.sqrt((1 - r) / r)
    x = (1 - r) * np.cos(a * t) + r * np.cos(b * t)
    y = (1 - r) * np.sin(a * t) - r * np.sin(b * t)
    return np.stack([x, y], axis=-1)


def hypocycloid_velocity(r: float, t) -> np.ndarray:
    _check_r(r)
    t = np.asarray(t, dtype=float)
    a, b = math.sqrt(r / (1 - r)), math.sqrt((1 - r) / r)
    dx = -(1 - r) * a * np.sin(a * t) - r * b * np.sin(b * t)
    dy = (1 - r) * a * np.cos(a * t) - r * b * np.cos(b * t)
    return np.stack([dx, dy], axis=-1)


def geodesic_equation_residual(r: float, t) -> np.ndarray:
    """``|G'|^2 - (1 - |G|^2)`` along the hypocycloid."""
    g = hypocycloid_point(r, t)
    dg = hypocycloid_velocity(r, t)
    return np.sum(dg * dg, axis=-1) - (1.0 - np.sum(g * g, axis=-1))


def geodesic_distance_exact(z1, z2, tol: float = 1e-12) -> float | None:
    """Closed-form intrinsic distance, or ``None`` when the pair is not covered.

    Covered: equal points, points on a common ray from the origin, and pairs
    of boundary points.
    """
    a, b = _pt(z1), _pt(z2)
    diff = float(np.linalg.norm(a - b))
    if diff <= tol:
        return 0.0
    ra, rb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if ra <= tol or rb <= tol or abs(float(a @ b) - ra * rb) <= tol * max(1.0, ra * rb):
        return abs(math.acos(min(ra, 1.0)) - math.acos(min(rb, 1.0)))
    if abs(ra - 1.0) <= tol and abs(rb - 1.0) <= tol:
        r = math.asin(min(diff / 2.0, 1.0)) / math.pi
        return 2.0 * math.pi * math.sqrt(r * (1.0 - r))
    return None


# ---------------------------------------------------------------------------
# numeric oracle


def chord_length(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Metric length of straight chords ``p -> q`` (rows), 8-point Gauss-Legendre."""
    d = q - p
    pts = p[:, None, :] + _GL_X[None, :, None] * d[:, None, :]
    rad = np.maximum(1.0 - np.sum(pts * pts, axis=2), 1e-300)
    return np.linalg.norm(d, axis=1) * (rad**-0.5 @ _GL_W)


@dataclass(frozen=True, eq=False)
class GeodesicOracle:
    """Ring mesh of the open disk with chord-length edges.

    Ring ``j`` sits at depth ``s_j = j h`` (radius ``sin s_j``) and carries an
    even number of nodes proportional to its metric circumference.  The last
    ring is clamped to radius ``1 - h^2``.
    """

    h: float
    reach: float
    ring_s: np.ndarray
    ring_start: np.ndarray
    ring_count: np.ndarray
    nodes: np.ndarray
    graph: csr_matrix

    @property
    def s_max(self) -> float:
        return float(self.ring_s[-1])

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]


def _ring_layout(h: float) -> tuple[np.ndarray, np.ndarray]:
    s_max = math.asin(1.0 - h * h)
    n_rings = int(math.floor(s_max / h))
    s = h * np.arange(n_rings + 1, dtype=float)
    if s_max - s[-1] > 0.25 * h:
        s = np.append(s, s_max)
    else:
        s[-1] = s_max
    counts = np.ones(len(s), dtype=int)
    circ = 2 * np.pi * np.tan(s[1:]) / h
    counts[1:] = np.maximum(6, 2 * np.ceil(circ / 2).astype(int))
    return s, counts


def _ring_nodes(s: float, count: int, j: int) -> np.ndarray:
    if count == 1:
        return np.zeros((1, 2))
    # alternate a half-step offset to break radial alignment
    th = 2 * np.pi * (np.arange(count) + 0.5 * (j % 2)) / count
    return math.sin(s) * np.stack([np.cos(th), np.sin(th)], axis=1)


def _candidates(oracle_s, starts, counts, nodes, q: np.ndarray, q_s: np.ndarray, reach: float,
                exclude_lower: bool) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(query_row, node_index)`` of candidate chords within ``reach``."""
    rows, cols = [], []
    q_th = np.arctan2(q[:, 1], q[:, 0])
    for j, sj in enumerate(oracle_s):
        near = np.abs(q_s - sj) <= reach + 1e-12
        if not np.any(near):
            continue
        idx = np.nonzero(near)[0]
        n = counts[j]
        if n == 1:
            rows.append(idx)
            cols.append(np.full(len(idx), starts[j]))
            continue
        smin = np.maximum(np.minimum(q_s[idx], sj), 1e-12)
        width = np.minimum(1.5 * reach / np.tan(smin), np.pi)
        off = 0.5 * (j % 2)
        step = 2 * np.pi / n
        lo = np.ceil((q_th[idx] - width) / step - off).astype(int)
        hi = np.floor((q_th[idx] + width) / step - off).astype(int)
        hi = np.minimum(hi, lo + n - 1)
        cnt = hi - lo + 1
        rr = np.repeat(idx, cnt)
        base = np.repeat(lo, cnt)
        k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        cc = starts[j] + np.mod(base + k, n)
        rows.append(rr)
        cols.append(cc)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    if exclude_lower:
        keep = cols > rows
        rows, cols = rows[keep], cols[keep]
    return rows, cols


@lru_cache(maxsize=8)
def build_geodesic_oracle(h: float, reach_factor: float = 6.0) -> GeodesicOracle:
    """Mesh at depth step ``h``; chords up to metric length ``reach_factor * h``."""
    if not 0 < h < 0.5:
        raise DomainError("mesh step must lie in (0, 0.5)")
    s, counts = _ring_layout(h)
    nodes = np.concatenate([_ring_nodes(sj, n, j) for j, (sj, n) in enumerate(zip(s, counts))])
    ring_of = np.repeat(np.arange(len(s)), counts)
    node_s = s[ring_of]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    reach = reach_factor * h
    rows, cols = _candidates(s, starts, counts, nodes, nodes, node_s, reach, exclude_lower=True)
    w = chord_length(nodes[rows], nodes[cols])
    keep = w <= reach
    rows, cols, w = rows[keep], cols[keep], w[keep]
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ConstructionError("non-positive or non-finite edge weight")
    n = nodes.shape[0]
    g = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    return GeodesicOracle(h, reach, s, starts, counts, nodes, g)


def _clamp(oracle: GeodesicOracle, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project points deeper than the last ring onto it; return the exact radial offsets."""
    r = np.linalg.norm(pts, axis=1)
    s = np.arcsin(np.minimum(r, 1.0))
    deep = s > oracle.s_max
    offset = np.where(deep, s - oracle.s_max, 0.0)
    s = np.minimum(s, oracle.s_max)
    scale = np.where(r > 0, np.sin(s) / np.where(r > 0, r, 1.0), 0.0)
    return pts * scale[:, None], s, offset


def geodesic_distances(oracle: GeodesicOracle, z1, z2) -> np.ndarray:
    """Shortest-path lengths for stacked pairs ``z1[i] <-> z2[i]`` (2D)."""
    a = np.atleast_2d(np.asarray(z1, dtype=float))
    b = np.atleast_2d(np.asarray(z2, dtype=float))
    if a.shape[1] != 2 or a.shape != b.shape:
        raise DomainError("oracle queries need matching (n, 2) point arrays")
    q = np.concatenate([a, b])
    qc, qs, off = _clamp(oracle, q)
    rows, cols = _candidates(oracle.ring_s, oracle.ring_start, oracle.ring_count, oracle.nodes,
                             qc, qs, oracle.reach, exclude_lower=False)
    w = chord_length(qc[rows], oracle.nodes[cols])
    keep = w <= oracle.reach
    rows, cols, w = rows[keep], cols[keep], np.maximum(w[keep], 1e-300)
    n = oracle.n_nodes
    nq = len(q)
    if len(np.unique(rows)) < nq:
        raise ConstructionError("a query point could not be attached to the mesh")
    base = oracle.graph.tocoo()
    data = np.concatenate([base.data, w])
    ii = np.concatenate([base.row, n + rows])
    jj = np.concatenate([base.col, cols])
    g = coo_matrix((data, (ii, jj)), shape=(n + nq, n + nq)).tocsr()
    m = len(a)
    src = n + np.arange(m)
    dist = dijkstra(g, directed=False, indices=src)
    d = dist[np.arange(m), n + m + np.arange(m)]
    # direct chord between close queries
    direct = chord_length(qc[:m], qc[m:])
    d = np.minimum(d, np.where(direct <= oracle.reach, direct, np.inf))
    same = np.all(a == b, axis=1)
    d = d + off[:m] + off[m:]
    d[same] = 0.0
    if not np.all(np.isfinite(d)):
        raise ConstructionError("disconnected mesh query")
    return d


def geodesic_distance_numeric(oracle: GeodesicOracle, z1, z2) -> float:
    return float(geodesic_distances(oracle, _pt(z1)[None, :], _pt(z2)[None, :])[0])


def geodesic_distance_extrapolated(z1, z2, h: float = 0.04, reach_factor: float = 6.0) -> np.ndarray:
    """Richardson extrapolation ``2 d(h/2) - d(h)`` for stacked pairs."""
    a = np.atleast_2d(np.asarray(z1, dtype=float))
    b = np.atleast_2d(np.asarray(z2, dtype=float))
    coarse = geodesic_distances(build_geodesic_oracle(h, reach_factor), a, b)
    fine = geodesic_distances(build_geodesic_oracle(h / 2, reach_factor), a, b)
    return 2 * fine - coarse


# ---------------------------------------------------------------------------
# volumes


def _reach_bound(z: np.ndarray, r: float) -> float:
    """Euclidean radius containing the semimetric ball of radius ``r``."""
    rho = max(0.5 * (1 - float(z @ z)), 0.0)
    c = math.sqrt(rho) + math.sqrt(0.5)
    return ((r + math.sqrt(r * r + 4 * r * c)) / 2.0) ** 2


def intrinsic_ball_volume(z, r: float, params: ModelParams, samples: int = 400) -> float:
    """``mu_sigma``-volume of ``{z' : d(z, z') < r}``.

    N = 1 and 2 use a midpoint rule in local polar coordinates around ``z``
    with ``samples`` radial nodes (and as many angles in 2D); larger N uses a
    scrambled Sobol sample of size ``samples**2`` over the bounding box.
    """
    if r <= 0:
        raise DomainError("ball radius must be positive")
    z = _pt(z)
    N = params.N
    if z.shape != (N,):
        raise DomainError(f"point must have {N} coordinates")
    sig = params.sigma
    if r >= math.sqrt(2.0):
        return ball_measure(params)
    t_max = min(_reach_bound(z, r), 2.0)

    def density(pts):
        r2 = np.sum(pts * pts, axis=-1)
        inside = r2 < 1
        rho = np.where(inside, 0.5 * (1 - np.where(inside, r2, 0.0)), 1.0)
        safe = np.where(inside[..., None], pts, 0.0).reshape(-1, N)
        dist = semimetric(np.broadcast_to(z, safe.shape), safe).reshape(r2.shape)
        member = inside & (dist < r)
        return np.where(member, rho**sig, 0.0)

    if N == 1:
        t = (np.arange(2 * samples) + 0.5) / (2 * samples) * 2 * t_max - t_max
        return float(np.sum(density(z + t[:, None])) * 2 * t_max / (2 * samples))
    if N == 2:
        t = (np.arange(samples) + 0.5) / samples * t_max
        ph = 2 * np.pi * (np.arange(samples) + 0.5) / samples
        tt, pp = np.meshgrid(t, ph, indexing="ij")
        pts = z + np.stack([tt * np.cos(pp), tt * np.sin(pp)], axis=-1)
        return float(np.sum(density(pts) * tt) * (t_max / samples) * (2 * np.pi / samples))
    sob = qmc.Sobol(N, scramble=True, seed=0).random(samples * samples)
    lo = np.maximum(z - t_max, -1.0)
    hi = np.minimum(z + t_max, 1.0)
    pts = lo + sob * (hi - lo)
    return float(np.mean(density(pts)) * np.prod(hi - lo))


def volume_model(z, r: float, params: ModelParams) -> float:
    """``r^N (r + sqrt(rho(z)))^(N + 2 sigma)``."""
    z = _pt(z)
    rho = max(0.5 * (1 - float(z @ z)), 0.0)
    return r**params.N * (r + math.sqrt(rho)) ** (params.N + 2 * params.sigma)
