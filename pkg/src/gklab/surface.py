"""Hypersurfaces as radial graphs over a direction grid, and their curvature.

A surface is stored as ``radii[i]`` along unit tangent directions ``omega_i`` at
an interior base point, so the surface point is ``exp_base(radii[i] omega_i)``.
The direction grid doubles as the quadrature rule on the unit sphere, which
turns surface integrals into weighted sums:

    int_Gamma f dA = sum_i w_i f(x_i) sn(rho_i)^{n-1} / <N_i, gamma_i'(rho_i)>.

The shape operator comes from central differences of the unit normal field
along short geodesics in tangent directions, transported back and symmetrized.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .model_space import ConvergenceError, ModelSpace, _ldot, unit_sphere_volume

__all__ = [
    "DirectionGrid",
    "RadialGraph",
    "AnalyticSphere",
    "SurfacePointData",
    "SurfaceData",
    "LimitResult",
    "level_surface",
    "adaptive_level_surface",
    "parallel_hypersurface",
    "surface_point_data",
    "total_curvature",
    "area",
    "enclosed_volume",
    "enclosed_curvature_integral",
    "total_curvature_limit",
    "normal_image_total",
    "parallel_normal_image_total",
    "level_normal_image_total",
    "space_form_basis",
    "hausdorff_distance",
    "pointset_hausdorff",
    "write_surface_csv",
]

ROOT_TOL = 1e-10
ROOT_MAXITER = 100


# ----------------------------------------------------------------- direction grids
@dataclass(frozen=True)
class DirectionGrid:
    """Unit vectors in reference coordinates plus sphere quadrature weights."""

    ref: np.ndarray
    weights: np.ndarray
    shape: tuple | None = None  # (count,) or (n_polar, n_azimuth) for product grids

    @classmethod
    def default(cls, n: int, n_polar: int = 64, n_azimuth: int = 128, n_angles: int = 512):
        if n == 2:
            return cls.circle(n_angles)
        if n == 3:
            return cls.sphere(n_polar, n_azimuth)
        raise ValueError("mesh surfaces are only available for n = 2 and n = 3")

    @classmethod
    def circle(cls, count: int = 512):
        th = 2.0 * np.pi * np.arange(count) / count
        return cls(np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(count, 2.0 * np.pi / count),
                   (count,))

    @classmethod
    def sphere(cls, n_polar: int = 64, n_azimuth: int = 128):
        """Gauss-Legendre in z = cos(theta) times a uniform azimuthal grid."""
        z, wz = np.polynomial.legendre.leggauss(n_polar)
        ph = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        Z, PH = np.meshgrid(z, ph, indexing="ij")
        rho = np.sqrt(1.0 - Z**2)
        ref = np.stack([rho * np.cos(PH), rho * np.sin(PH), Z], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(n_azimuth, 2.0 * np.pi / n_azimuth)[None, :]).ravel()
        return cls(ref, w, (n_polar, n_azimuth))

    def __len__(self):
        return len(self.weights)


# ------------------------------------------------------------------- point data
@dataclass(frozen=True)
class SurfacePointData:
    point: np.ndarray
    normal: np.ndarray
    principal_curvatures: np.ndarray
    principal_directions: np.ndarray
    gk: float
    area_element: float
    kink: bool = False


@dataclass
class SurfaceData:
    """Per-node curvature data, arrays indexed like the direction grid."""

    points: np.ndarray
    normals: np.ndarray
    kappas: np.ndarray
    directions: np.ndarray
    gk: np.ndarray
    area_element: np.ndarray
    kink: np.ndarray
    noise: np.ndarray  # |S_h - S_{h/2}|, zero when kinks were not probed

    def take(self, idx):
        return SurfaceData(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    @staticmethod
    def concat(parts):
        return SurfaceData(*(np.concatenate([getattr(p, f) for p in parts])
                             for f in SurfaceData.__dataclass_fields__))


def _dsn(space: ModelSpace, s):
    s = np.asarray(s, dtype=float)
    if space.kind == "euclidean":
        return np.ones_like(s)
    if space.kind == "hyperbolic":
        return np.cosh(s / space.scale)
    return space.profile.dphi(s)


def _ray(space: ModelSpace, base, dirs, s):
    """Points gamma(s) = exp_base(s omega) and velocities gamma'(s)."""
    s = np.asarray(s, dtype=float)[..., None]
    if space.kind == "hyperbolic":
        R = space.scale
        ch, sh = np.cosh(s / R), np.sinh(s / R)
        return ch * base + R * sh * dirs, sh / R * base + ch * dirs
    if space.kind == "warped" and np.any(base):
        raise NotImplementedError("warped radial graphs must be based at the origin")
    return base + s * dirs, np.broadcast_to(dirs, np.broadcast_shapes(dirs.shape, s.shape)).copy()


def _unit_normals(space, field_fn, points):
    _, g = field_fn(points)
    nrm = space.norm(points, g)
    if np.any(~(nrm > 1e-14)):
        raise ValueError("level function has a vanishing gradient on the surface")
    return g / nrm[..., None]


def solve_radii(space, base, dirs, field_fn, level, guess, tol=ROOT_TOL, maxiter=ROOT_MAXITER):
    """Safeguarded Newton along each ray for F(exp_base(s omega)) = level.

    F must be below ``level`` at the base and increase through ``level`` once
    along each ray.  Newton steps falling outside the current bracket are
    replaced by bisection (or doubling while no upper bracket is known).
    """
    dirs = np.asarray(dirs, dtype=float)
    N = len(dirs)
    s = np.broadcast_to(np.asarray(guess, dtype=float), (N,)).copy()
    level = np.broadcast_to(np.asarray(level, dtype=float), (N,))
    lo = np.zeros(N)
    hi = np.full(N, np.inf)
    active = np.arange(N)
    for _ in range(maxiter):
        pts, vel = _ray(space, base, dirs[active], s[active])
        val, grad = field_fn(pts)
        g = val - level[active]
        done = np.abs(g) <= tol
        active_next = ~done
        a = active[active_next]
        if len(a) == 0:
            return s
        g, val_pts, vel, grad = g[active_next], pts[active_next], vel[active_next], grad[active_next]
        sa = s[a]
        lo[a] = np.where(g < 0, np.maximum(lo[a], sa), lo[a])
        hi[a] = np.where(g > 0, np.minimum(hi[a], sa), hi[a])
        dg = space.inner(val_pts, grad, vel)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = sa - g / dg
        fallback = np.where(np.isfinite(hi[a]), 0.5 * (lo[a] + hi[a]), 2.0 * np.maximum(sa, 1e-3))
        good = (dg > 0) & (newton > lo[a]) & (newton < hi[a]) & np.isfinite(newton)
        # without an upper bracket, never step further than doubling would
        good &= np.isfinite(hi[a]) | (newton <= 2.0 * np.maximum(sa, 1e-3))
        s[a] = np.where(good, newton, fallback)
        # a collapsed bracket means the level is reached to machine precision
        tight = np.isfinite(hi[a]) & (hi[a] - lo[a] <= 4e-16 * np.maximum(hi[a], 1.0))
        s[a[tight]] = 0.5 * (lo[a[tight]] + hi[a[tight]])
        active = a[~tight]
        if len(active) == 0:
            return s
    pts, _ = _ray(space, base, dirs[active], s[active])
    res = float(np.max(np.abs(field_fn(pts)[0] - level[active])))
    raise ConvergenceError("radial root finding did not converge", res)


def _tangent_bases(space, points, normals):
    """Orthonormal bases (N, n-1, dim) of the tangent spaces orthogonal to the normals.

    Uses a Householder reflection in frame coordinates, so the basis is
    deterministic and depends smoothly on the normal away from one hemisphere seam.
    """
    E = space.frame(points)
    nu = np.einsum("...d,...id->...i", normals, _metric_lower(space, points, E))
    n = space.n
    sgn = np.where(nu[..., -1] >= 0, 1.0, -1.0)
    w = nu.copy()
    w[..., -1] += sgn
    H = np.eye(n) - 2.0 * w[..., :, None] * w[..., None, :] / np.sum(w * w, axis=-1)[..., None, None]
    # columns 0..n-2 of H are orthonormal and orthogonal to nu
    return np.einsum("...ia,...id->...ad", H[..., :, : n - 1], E)


def _metric_lower(space, points, vectors):
    """Vectors with the index lowered, so that <x, v> = x . lowered(v)."""
    if space.kind == "euclidean":
        return vectors
    if space.kind == "hyperbolic":
        out = np.array(vectors, dtype=float)
        out[..., 0] *= -1.0
        return out
    pe = points[..., None, :]
    u, r = space._radial_unit(pe)
    psi, _, _ = space.profile.chart_terms(r)
    sv = np.sum(u * vectors, axis=-1, keepdims=True)
    return sv * u + psi[..., None] ** 2 * (vectors - sv * u)


def _shape_matrix(space, points, T, normal_fn, h):
    """Symmetrized matrix of the shape operator in the bases T, by central differences."""
    m = T.shape[-2]
    A = np.empty(points.shape[:-1] + (m, m))
    for a in range(m):
        diffs = []
        for sign in (1.0, -1.0):
            v = sign * h * T[..., a, :]
            if space.kind == "warped":
                q, vq = space.exp_with_velocity(points, v)
                back = space.transport_along(q, -vq, normal_fn(q))
            else:
                q = space.exp_map(points, v)
                back = space.parallel_transport(q, points, normal_fn(q))
            diffs.append(back)
        dN = (diffs[0] - diffs[1]) / (2.0 * h)
        for b in range(m):
            A[..., a, b] = space.inner(points, dN, T[..., b, :])
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def shape_operator_at(space, points, normal_fn, h, probe_kinks=False, kink_tol=1e-6):
    """Outward normals, principal curvatures (descending) and principal directions.

    Returns ``(normals, kappas, directions, kink, noise)``.  With
    ``probe_kinks`` the shape operator is recomputed at step h/2; points where
    the two disagree by more than ``kink_tol (1 + max|kappa|)`` are flagged.
    """
    N = normal_fn(points)
    T = _tangent_bases(space, points, N)
    A = _shape_matrix(space, points, T, normal_fn, h)
    lam, vec = np.linalg.eigh(A)
    kappas, vec = lam[..., ::-1], vec[..., ::-1]
    dirs_out = np.einsum("...ab,...ad->...bd", vec, T)
    noise = np.zeros(points.shape[:-1])
    kink = np.zeros(points.shape[:-1], dtype=bool)
    if probe_kinks:
        A2 = _shape_matrix(space, points, T, normal_fn, 0.5 * h)
        noise = np.linalg.norm(A - A2, axis=(-1, -2))
        kink = noise > kink_tol * (1.0 + np.abs(kappas).max(axis=-1))
    return N, kappas, dirs_out, kink, noise


def compute_surface_data(space, base, dirs, radii, normal_fn, h, probe_kinks=False, kink_tol=1e-6):
    """Normals, principal curvatures, Gauss-Kronecker curvature and area elements."""
    pts, vel = _ray(space, base, dirs, radii)
    N, kappas, dirs_out, kink, noise = shape_operator_at(space, pts, normal_fn, h, probe_kinks, kink_tol)
    gk = np.prod(kappas, axis=-1)
    cosang = space.inner(pts, N, vel)
    if np.any(~(cosang > 1e-12)):
        raise ValueError("surface is not a radial graph over the base (degenerate area element)")
    ae = space.sn(radii) ** (space.n - 1) / cosang
    return SurfaceData(pts, N, kappas, dirs_out, gk, ae, kink, noise)


# ------------------------------------------------------------------- surfaces
class RadialGraph:
    """A hypersurface star-shaped about ``base``, sampled on a direction grid."""

    def __init__(self, space: ModelSpace, base, ref, weights, radii, normal_fn: Callable,
                 fd_step: float, data: SurfaceData | None = None, probe_kinks: bool = False):
        radii = np.asarray(radii, dtype=float)
        if np.any(~(radii > 0)):
            raise ValueError("radial graph radii must be positive")
        self.space = space
        self.base = np.asarray(base, dtype=float)
        self.ref = np.asarray(ref, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.radii = radii
        self.normal_fn = normal_fn
        self.fd_step = float(fd_step)
        self.probe_kinks = probe_kinks
        if data is not None:
            self.__dict__["data"] = data

    @cached_property
    def frame(self):
        return self.space.frame(self.base)

    @cached_property
    def directions(self):
        return self.ref @ self.frame

    @cached_property
    def points(self):
        return _ray(self.space, self.base, self.directions, self.radii)[0]

    @cached_property
    def data(self) -> SurfaceData:
        return compute_surface_data(self.space, self.base, self.directions, self.radii,
                                    self.normal_fn, self.fd_step, self.probe_kinks)

    def __len__(self):
        return len(self.radii)

    def same_grid(self, other: "RadialGraph") -> bool:
        return (self.space == other.space and self.ref.shape == other.ref.shape
                and np.array_equal(self.base, other.base) and np.array_equal(self.ref, other.ref))


@dataclass(frozen=True)
class AnalyticSphere:
    """Geodesic sphere, usable as a level set of the distance to its centre."""

    space: ModelSpace
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    def value_and_grad(self, p):
        S = self.space
        p = np.asarray(p, dtype=float)
        if S.kind == "warped" and not np.any(self.center):
            r = np.linalg.norm(p, axis=-1)
            return r, p / np.where(r > 0, r, 1.0)[..., None]
        lg = S.log_map(p, np.broadcast_to(self.center, p.shape))
        d = S.norm(p, lg)
        return d, -lg / np.where(d > 0, d, 1.0)[..., None]

    def curvature(self) -> float:
        """Principal curvature (the sphere is umbilic)."""
        S, r = self.space, self.radius
        if S.kind == "euclidean":
            return 1.0 / r
        if S.kind == "hyperbolic":
            return 1.0 / (S.scale * math.tanh(r / S.scale))
        if np.any(self.center):
            raise NotImplementedError("analytic curvature of off-centre warped spheres")
        return float(S.profile.dphi(r) / S.profile.phi(r))

    def gk(self) -> float:
        return self.curvature() ** (self.space.n - 1)

    def area(self) -> float:
        if self.space.kind == "warped" and np.any(self.center):
            raise NotImplementedError("analytic area of off-centre warped spheres")
        return unit_sphere_volume(self.space.n) * float(self.space.sn(self.radius)) ** (self.space.n - 1)

    def total_curvature(self) -> float:
        return self.gk() * self.area()

    def graph(self, grid: DirectionGrid | None = None, base=None, fd_step=None) -> RadialGraph:
        S = self.space
        grid = grid or DirectionGrid.default(S.n)
        base = np.asarray(self.center if base is None else base, dtype=float)
        h = fd_step if fd_step is not None else 1e-4 * 2.0 * self.radius
        frame = S.frame(base)
        dirs = grid.ref @ frame
        if np.array_equal(base, self.center):
            radii = np.full(len(grid), float(self.radius))
        else:
            from .convex_body import Ball
            radii = Ball(S, self.center, self.radius).boundary_radii(base, dirs)
        normal_fn = lambda q: _unit_normals(S, self.value_and_grad, q)  # noqa: E731
        return RadialGraph(S, base, grid.ref, grid.weights, radii, normal_fn, h)


def level_surface(space: ModelSpace, base, field_fn: Callable, level: float,
                  grid: DirectionGrid | None = None, fd_step: float = 1e-4, guess=1.0,
                  probe_kinks: bool = False) -> RadialGraph:
    """Level set {F = level} of a function increasing along rays from ``base``.

    ``field_fn(points)`` returns values and gradients.
    """
    grid = grid or DirectionGrid.default(space.n)
    base = np.asarray(base, dtype=float)
    dirs = grid.ref @ space.frame(base)
    g = guess(grid.ref) if callable(guess) else guess
    radii = solve_radii(space, base, dirs, field_fn, level, g)
    normal_fn = lambda q: _unit_normals(space, field_fn, q)  # noqa: E731
    return RadialGraph(space, base, grid.ref, grid.weights, radii, normal_fn, fd_step,
                       probe_kinks=probe_kinks)


# ------------------------------------------------------------ adaptive surfaces
def _lobatto(order: int):
    """Gauss-Lobatto nodes and weights on [-1, 1] (endpoints included)."""
    if order < 3:
        raise ValueError("Lobatto rules need at least 3 nodes")
    P = np.polynomial.legendre.Legendre.basis(order - 1)
    x = np.concatenate([[-1.0], np.sort(P.deriv().roots().real), [1.0]])
    w = 2.0 / (order * (order - 1) * P(x) ** 2)
    return x, w


class _CellRule:
    """Tensor Gauss-Lobatto cells on the direction parameter domain.

    n = 2: intervals of the angle; n = 3: rectangles in (z, azimuth), whose
    Lebesgue measure is the area measure of the unit sphere.  Nodes sit on
    the cell boundary too, so a jump of the integrand inside a cell always
    separates two of its own nodes.
    """

    def __init__(self, n: int, order: int):
        if n not in (2, 3):
            raise ValueError("adaptive surfaces are only available for n = 2 and n = 3")
        self.n = n
        self.x, self.w = _lobatto(order)
        self.children = 2 if n == 2 else 4

    def initial(self, cells_polar: int, cells_azimuth: int):
        if self.n == 2:
            e = np.linspace(0.0, 2.0 * np.pi, cells_azimuth + 1)
            return np.stack([e[:-1], e[1:]], axis=-1)
        z = np.linspace(-1.0, 1.0, cells_polar + 1)
        ph = np.linspace(0.0, 2.0 * np.pi, cells_azimuth + 1)
        Z0, P0 = np.meshgrid(z[:-1], ph[:-1], indexing="ij")
        Z1, P1 = np.meshgrid(z[1:], ph[1:], indexing="ij")
        return np.stack([Z0.ravel(), Z1.ravel(), P0.ravel(), P1.ravel()], axis=-1)

    def split(self, cells):
        if self.n == 2:
            m = 0.5 * (cells[:, 0] + cells[:, 1])
            return np.stack([np.stack([cells[:, 0], m], -1), np.stack([m, cells[:, 1]], -1)],
                            axis=1).reshape(-1, 2)
        za, zb, pa, pb = cells.T
        zm, pm = 0.5 * (za + zb), 0.5 * (pa + pb)
        kids = [np.stack(c, -1) for c in ((za, zm, pa, pm), (zm, zb, pa, pm),
                                          (za, zm, pm, pb), (zm, zb, pm, pb))]
        return np.stack(kids, axis=1).reshape(-1, 4)

    def nodes(self, cells):
        x, w = self.x, self.w
        if self.n == 2:
            half = 0.5 * (cells[:, 1] - cells[:, 0])
            th = 0.5 * (cells[:, 0] + cells[:, 1])[:, None] + half[:, None] * x[None, :]
            ref = np.stack([np.cos(th), np.sin(th)], axis=-1).reshape(-1, 2)
            return ref, (half[:, None] * w[None, :]).ravel()
        za, zb, pa, pb = cells.T
        hz, hp = 0.5 * (zb - za), 0.5 * (pb - pa)
        z = 0.5 * (za + zb)[:, None] + hz[:, None] * x[None, :]
        ph = 0.5 * (pa + pb)[:, None] + hp[:, None] * x[None, :]
        Z = np.repeat(z[:, :, None], len(x), axis=2)
        PH = np.repeat(ph[:, None, :], len(x), axis=1)
        rho = np.sqrt(np.maximum(1.0 - Z**2, 0.0))
        ref = np.stack([rho * np.cos(PH), rho * np.sin(PH), Z], axis=-1).reshape(-1, 3)
        W = (hz[:, None, None] * hp[:, None, None]) * (w[:, None] * w[None, :])[None]
        return ref, W.ravel()

    @property
    def per_cell(self):
        return len(self.x) ** (self.n - 1)


@dataclass
class AdaptiveInfo:
    nodes: int
    evaluated: int
    error_estimate: float
    converged: bool
    rounds: int


def adaptive_level_surface(space: ModelSpace, base, field_fn: Callable, level: float,
                           tol: float, fd_step: float, guess=1.0, order: int | None = None,
                           init_cells: tuple[int, int] = (8, 16), max_nodes: int = 400_000,
                           probe_kinks: bool = False, label_fn: Callable | None = None,
                           mix_factor: float = 1.0) -> tuple[RadialGraph, AdaptiveInfo]:
    """Level surface on a direction grid refined where GK dA varies abruptly.

    Parallel surfaces of polytopes have piecewise smooth curvature with jumps
    along curves, where a fixed product grid converges slowly.  Each cell is
    compared with the sum over its children; cells carrying the largest share
    of the estimated error are split until the total estimate drops below
    ``tol`` (absolute, on the integral of GK dA).

    Parent and children can agree by accident when a cell straddles a jump.
    When ``label_fn`` tags the smooth pieces of the surface, a cell whose
    nodes carry more than one tag is charged the worst-case error
    (spread of the integrand density times the cell measure) instead.
    """
    rule = _CellRule(space.n, order or (5 if space.n == 2 else 3))
    base = np.asarray(base, dtype=float)
    frame = space.frame(base)
    normal_fn = lambda q: _unit_normals(space, field_fn, q)  # noqa: E731
    q = rule.per_cell
    c = rule.children
    store_ref, store_w, store_r, store_data, store_lab = [], [], [], [], []
    count = [0]

    def evaluate(cells):
        ref, w = rule.nodes(cells)
        dirs = ref @ frame
        g = guess(ref) if callable(guess) else guess
        radii = solve_radii(space, base, dirs, field_fn, level, g)
        data = compute_surface_data(space, base, dirs, radii, normal_fn, fd_step, probe_kinks)
        start = count[0]
        count[0] += len(w)
        store_ref.append(ref), store_w.append(w), store_r.append(radii), store_data.append(data)
        dens = data.gk * data.area_element
        lab = label_fn(data.points) if label_fn is not None else np.zeros(len(w), dtype=int)
        store_lab.append(lab)
        Q = (w * dens).reshape(len(cells), q).sum(axis=1)
        idx = np.arange(start, start + len(w)).reshape(len(cells), q)
        stats = (dens.reshape(-1, q).min(axis=1), dens.reshape(-1, q).max(axis=1),
                 lab.reshape(-1, q).min(axis=1), lab.reshape(-1, q).max(axis=1),
                 w.reshape(-1, q).sum(axis=1))
        return Q, idx, stats

    def open_front(parents, Qparent, pstats):
        kids = rule.split(parents)
        Qk, idx, ks = evaluate(kids)
        P = len(parents)
        Qk = Qk.reshape(P, c)
        err = np.abs(Qparent - Qk.sum(axis=1))
        dmin = np.minimum(pstats[0], ks[0].reshape(P, c).min(axis=1))
        dmax = np.maximum(pstats[1], ks[1].reshape(P, c).max(axis=1))
        lmin = np.minimum(pstats[2], ks[2].reshape(P, c).min(axis=1))
        lmax = np.maximum(pstats[3], ks[3].reshape(P, c).max(axis=1))
        mixed = lmin != lmax
        err = np.where(mixed, np.maximum(err, mix_factor * (dmax - dmin) * pstats[4]), err)
        kstats = tuple(a.reshape(P, c) for a in ks)
        return kids.reshape(P, c, -1), Qk, idx.reshape(P, c * q), err, kstats

    cells = rule.initial(*init_cells) if space.n == 3 else rule.initial(1, init_cells[1])
    Q0, _, s0 = evaluate(cells)
    kids, Qk, idx, err, kst = open_front(cells, Q0, s0)
    rounds = 0
    while err.sum() > tol and count[0] < max_nodes:
        rounds += 1
        order_ = np.argsort(-err, kind="stable")
        cum = np.cumsum(err[order_])
        take = order_[: int(np.searchsorted(cum, 0.5 * cum[-1])) + 1]
        keep = np.setdiff1d(np.arange(len(err)), take)
        parents = kids[take].reshape(-1, kids.shape[-1])
        pst = tuple(a[take].ravel() for a in kst)
        nk, nQ, nidx, nerr, nst = open_front(parents, Qk[take].ravel(), pst)
        kids = np.concatenate([kids[keep], nk])
        Qk = np.concatenate([Qk[keep], nQ])
        idx = np.concatenate([idx[keep], nidx])
        err = np.concatenate([err[keep], nerr])
        kst = tuple(np.concatenate([a[keep], b]) for a, b in zip(kst, nst))
    sel = np.sort(idx.ravel())
    ref = np.concatenate(store_ref)[sel]
    w = np.concatenate(store_w)[sel]
    radii = np.concatenate(store_r)[sel]
    data = SurfaceData.concat(store_data).take(sel)
    info = AdaptiveInfo(int(len(sel)), int(count[0]), float(err.sum()), bool(err.sum() <= tol), rounds)
    graph = RadialGraph(space, base, ref, w, radii, normal_fn, fd_step, data=data,
                        probe_kinks=probe_kinks)
    return graph, info


def parallel_hypersurface(body, t: float, grid: DirectionGrid | None = None, base=None,
                          adaptive_tol: float | None = None, probe_kinks: bool = False,
                          fd_step: float | None = None, **adaptive_kw):
    """Outer parallel hypersurface {d_body = t} as a radial graph.

    Returns ``(graph, info)`` when ``adaptive_tol`` is given, else the graph.
    """
    if not t > 0:
        raise ValueError("parallel distance must be positive")
    S = body.space
    base = body.interior_point() if base is None else np.asarray(base, dtype=float)
    h = fd_step if fd_step is not None else 1e-4 * body.diameter

    def guess(ref):
        return body.boundary_radii(base, ref @ S.frame(base)) + t

    if adaptive_tol is not None:
        adaptive_kw.setdefault("label_fn", getattr(body, "stratum", None))
        return adaptive_level_surface(S, base, body.value_and_grad, t, adaptive_tol, h,
                                      guess=guess, probe_kinks=probe_kinks, **adaptive_kw)
    return level_surface(S, base, body.value_and_grad, t, grid, h, guess, probe_kinks)


# ------------------------------------------------------------------ integrals
def surface_point_data(surface: RadialGraph, index: int) -> SurfacePointData:
    if not 0 <= index < len(surface):
        raise IndexError("direction index out of range")
    d = surface.data
    return SurfacePointData(d.points[index], d.normals[index], d.kappas[index],
                            d.directions[index], float(d.gk[index]), float(d.area_element[index]),
                            bool(d.kink[index]))


def total_curvature(surface: RadialGraph) -> float:
    d = surface.data
    return float(np.sum(surface.weights * d.gk * d.area_element))


def area(surface: RadialGraph) -> float:
    return float(np.sum(surface.weights * surface.data.area_element))


def _ball_volume_factor(space: ModelSpace, rho, nodes: int = 24):
    """int_0^rho sn(s)^{n-1} ds."""
    rho = np.asarray(rho, dtype=float)
    n = space.n
    if space.kind == "euclidean":
        return rho**n / n
    if space.kind == "hyperbolic" and n == 2:
        R = space.scale
        return R**2 * (np.cosh(rho / R) - 1.0)
    if space.kind == "hyperbolic" and n == 3:
        R = space.scale
        x = rho / R
        return R**3 * (0.25 * np.sinh(2.0 * x) - 0.5 * x)
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * rho[..., None] * (x + 1.0)
    return 0.5 * rho * np.sum(w * space.sn(s) ** (n - 1), axis=-1)


def enclosed_volume(surface: RadialGraph) -> float:
    """Volume of the star-shaped region bounded by the surface."""
    return float(np.sum(surface.weights * _ball_volume_factor(surface.space, surface.radii)))


def enclosed_curvature_integral(surface: RadialGraph) -> float:
    """Integral of the ambient Gaussian curvature over the enclosed region (n = 2).

    In polar coordinates K sn = -sn'', so the radial integral is 1 - sn'(rho).
    """
    if surface.space.n != 2:
        raise ValueError("enclosed curvature integral is defined for n = 2")
    return float(np.sum(surface.weights * (1.0 - _dsn(surface.space, surface.radii))))


# ------------------------------------------------------------ normal image
def _sphere_triangles(n_polar: int, n_azimuth: int):
    """Triangles over a (polar x azimuth) product grid plus two pole nodes."""
    idx = np.arange(n_polar * n_azimuth).reshape(n_polar, n_azimuth)
    nxt = np.roll(idx, -1, axis=1)
    south, north = n_polar * n_azimuth, n_polar * n_azimuth + 1
    return np.concatenate([
        np.stack([idx[:-1], nxt[:-1], nxt[1:]], axis=-1).reshape(-1, 3),
        np.stack([idx[:-1], nxt[1:], idx[1:]], axis=-1).reshape(-1, 3),
        np.stack([np.full(n_azimuth, south), nxt[0], idx[0]], axis=-1),
        np.stack([np.full(n_azimuth, north), idx[-1], nxt[-1]], axis=-1),
    ])


def normal_image_total(space: ModelSpace, base, field_fn: Callable, level: float,
                       size=None, guess=1.0) -> float:
    """Total curvature of a level surface as the area of its normal image.

    In a space form the outward unit normal N, viewed as a vector of the
    ambient linear space (R^n, or Minkowski space for the hyperboloid), has
    dN = S on tangent vectors.  The image N(Gamma) therefore has area element
    GK dA, and for a C^{1,1} surface it has continuous tangent planes even
    where GK jumps.  The oriented area of its piecewise linear interpolant
    converges at second order in the grid spacing where the pointwise quadrature of
    GK dA is only first order.

    ``size`` is the number of angles for n = 2 and (n_polar, n_azimuth) for n = 3.
    """
    if space.kind == "warped" or space.n not in (2, 3):
        raise ValueError("normal images need a space form and n = 2 or n = 3")
    base = np.asarray(base, dtype=float)
    if space.n == 2:
        ref = DirectionGrid.circle(size or 512).ref
    else:
        n_polar, n_azimuth = size or (64, 128)
        ref = np.concatenate([DirectionGrid.sphere(n_polar, n_azimuth).ref,
                              [[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]])
    dirs = ref @ space.frame(base)
    g = guess(ref) if callable(guess) else guess
    radii = solve_radii(space, base, dirs, field_fn, level, g)
    points = _ray(space, base, dirs, radii)[0]
    N = _unit_normals(space, field_fn, points)
    cells = (np.stack([np.arange(len(N)), np.roll(np.arange(len(N)), -1)], axis=-1)
             if space.n == 2 else _sphere_triangles(n_polar, n_azimuth))
    return abs(float(np.sum(_oriented_measures(space, points, N, cells))))


def _oriented_measures(space, points, N, cells):
    """Signed measure of each chord simplex of N, projected to the tangent plane.

    Projection onto the tangent space at the cell centre (the complement of
    the point and normal directions) makes pieces where the normal image is
    lower dimensional contribute nothing, and folds of the interpolant cancel.
    """
    V = N[cells]
    edges = V[:, 1:] - V[:, :1]
    Nm = V.mean(axis=1)
    cols = []
    if space.kind == "hyperbolic":
        x = points[cells].mean(axis=1)
        x = x / np.sqrt(-_ldot(x, x))[:, None]
        Nm = Nm + _ldot(Nm, x)[:, None] * x
        cols.append(x)
    Nm = Nm / np.sqrt(space.inner(None, Nm, Nm))[:, None]
    cols.append(Nm)
    M = np.concatenate([np.stack(cols, axis=1), edges], axis=1)
    return np.linalg.det(M) / math.factorial(space.n - 1)


def level_normal_image_total(space: ModelSpace, base, field_fn: Callable, level: float,
                             guess, size=None) -> tuple[float, float]:
    """G of a level set from its normal image on a grid and its refinement by two.

    The second-order grid error is removed by Richardson extrapolation;
    returns (value, error estimate).
    """
    size = size or ((512,) if space.n == 2 else (64, 128))
    fine = tuple(2 * m for m in size)
    unpack = (lambda z: z[0]) if space.n == 2 else (lambda z: z)
    coarse_v = normal_image_total(space, base, field_fn, level, unpack(size), guess)
    fine_v = normal_image_total(space, base, field_fn, level, unpack(fine), guess)
    return (4.0 * fine_v - coarse_v) / 3.0, abs(fine_v - coarse_v) / 3.0


def parallel_normal_image_total(body, t: float, size=None, base=None) -> tuple[float, float]:
    """Extrapolated G of the parallel surface at distance t, with an error estimate."""
    if not t > 0:
        raise ValueError("parallel distance must be positive")
    S = body.space
    base = body.interior_point() if base is None else np.asarray(base, dtype=float)
    frame = S.frame(base)
    guess = lambda ref: body.boundary_radii(base, ref @ frame) + t  # noqa: E731
    return level_normal_image_total(S, base, body.value_and_grad, t, guess, size)


# ------------------------------------------------------------------ the limit
@dataclass
class LimitResult:
    value: float
    ts: list
    values: list
    table: list
    converged: bool
    monotone: bool
    min_kappa: float | None
    kinks: int
    quadrature_error: list = field(default_factory=list)
    method: str = "quadrature"

    def as_dict(self):
        return dict(self.__dict__)


def space_form_basis(space: ModelSpace, t):
    """sn(t)^j cs(t)^(n-1-j), j = 0..n-1.

    In a space form, G of the outer parallel surfaces of a convex body lies in
    the span of these functions of t (the Steiner structure of parallel
    bodies), and only the j = 0 function is nonzero at t = 0.
    """
    t = np.asarray(t, dtype=float)
    sn, cs = space.sn(t), _dsn(space, t)
    n = space.n
    return np.stack([sn**j * cs ** (n - 1 - j) for j in range(n)], axis=-1)


def _limit_method(body, method):
    if method == "auto":
        S = body.space
        return "normal_image" if S.kind != "warped" and S.n in (2, 3) else "quadrature"
    if method not in ("normal_image", "quadrature"):
        raise ValueError(f"unknown limit method {method!r}")
    return method


def total_curvature_limit(body, t0: float | None = None, tol: float = 5e-2,
                          max_levels: int = 6, min_levels: int | None = None,
                          method: str = "auto", grid: DirectionGrid | None = None,
                          size=None, adaptive_tol: float | None = None, mono_tol: float = 1e-6,
                          base=None, probe_kinks: bool = False, **adaptive_kw) -> LimitResult:
    """G(boundary) as the t -> 0 limit of G over outer parallel surfaces.

    G(t) is sampled at t0, t0/2, ... until successive limit estimates agree to
    ``tol``.  Two routes:

    ``normal_image`` (space forms, n = 2, 3): G(t) from the grid-extrapolated
    normal image area, limit from a least-squares fit of all samples in the
    space-form basis, which is exact up to quadrature error, so t0 can be
    large enough for the quadrature to resolve the body's corners.

    ``quadrature``: G(t) as the GK dA quadrature on ``grid`` (or adaptive),
    limit from a Richardson table in integer powers of t.
    """
    S = body.space
    method = _limit_method(body, method)
    ts, vals, table, qerr = [], [], [], []
    min_k, kinks = np.inf, 0
    converged = False
    if method == "normal_image":
        t = t0 if t0 is not None else (3.2 * S.scale if S.kind == "hyperbolic" else body.diameter)
        min_levels = min_levels or S.n + 1
        for level in range(max_levels):
            G, err = parallel_normal_image_total(body, t, size=size, base=base)
            ts.append(t)
            vals.append(G)
            qerr.append(err)
            row = [G]
            if len(ts) >= S.n:
                B = space_form_basis(S, np.array(ts))
                row.append(float(np.linalg.lstsq(B, np.array(vals), rcond=None)[0][0]))
            table.append(row)
            if (level + 1 >= min_levels and len(table[level - 1]) > 1
                    and abs(row[-1] - table[level - 1][-1]) < tol):
                converged = True
                break
            t *= 0.5
        value = table[-1][-1]
        min_k = None
    else:
        t = t0 if t0 is not None else 0.2
        min_levels = min_levels or 3
        for level in range(max_levels):
            out = parallel_hypersurface(body, t, grid=grid, base=base, adaptive_tol=adaptive_tol,
                                        probe_kinks=probe_kinks, **adaptive_kw)
            graph, info = out if isinstance(out, tuple) else (out, None)
            d = graph.data
            G = total_curvature(graph)
            ts.append(t)
            vals.append(G)
            qerr.append(info.error_estimate if info else None)
            ok = ~d.kink
            if np.any(ok):
                min_k = min(min_k, float(d.kappas[ok].min()))
            kinks += int(d.kink.sum())
            row = [G]
            for j in range(1, level + 1):
                row.append(row[j - 1] + (row[j - 1] - table[level - 1][j - 1]) / (2.0**j - 1.0))
            table.append(row)
            if level + 1 >= min_levels and abs(row[-1] - table[level - 1][-1]) < tol:
                converged = True
                break
            t *= 0.5
        value = table[-1][-1]
        min_k = float(min_k)
    monotone = all(vals[i + 1] <= vals[i] + mono_tol for i in range(len(vals) - 1))
    return LimitResult(float(value), ts, vals, table, converged, monotone, min_k, kinks, qerr,
                       method)


# ------------------------------------------------------------------ Hausdorff
def _chunked_min_dist(space, A, B, chunk=512):
    out = np.empty(len(A))
    for i in range(0, len(A), chunk):
        a = A[i:i + chunk]
        d = space.distance(a[:, None, :], B[None, :, :])
        out[i:i + chunk] = d.min(axis=1)
    return out


def pointset_hausdorff(space: ModelSpace, A, B) -> float:
    """Exact Hausdorff distance between two finite point sets (brute force)."""
    if space.kind == "warped":
        raise NotImplementedError("point-set distances in warped space need the shooting log")
    return float(max(_chunked_min_dist(space, A, B).max(), _chunked_min_dist(space, B, A).max()))


def _offsets(a: RadialGraph, b: RadialGraph):
    """Distance from each node of a to the tangent plane of b at the same direction."""
    S = a.space
    pb, Nb = b.points, b.data.normals
    if S.kind == "warped":
        lg = a.points - pb  # first order in the chart
    else:
        lg = S.log_map(pb, a.points)
    return np.abs(S.inner(pb, lg, Nb))


def hausdorff_distance(a: RadialGraph, b: RadialGraph) -> float:
    """Hausdorff distance between two surfaces.

    Surfaces on the same base and grid use normal offsets between matching
    nodes (accurate to second order in the offset); otherwise the discrete
    point-set distance is returned.
    """
    if a.same_grid(b):
        return float(max(_offsets(a, b).max(), _offsets(b, a).max()))
    return pointset_hausdorff(a.space, a.points, b.points)


# ------------------------------------------------------------------ export
def write_surface_csv(surface: RadialGraph, path) -> None:
    d = surface.data
    n, dim = surface.space.n, surface.space.dim
    header = (["index"] + [f"x{i}" for i in range(dim)] + ["radius", "weight"]
              + [f"kappa{i + 1}" for i in range(n - 1)] + ["gk", "area_element", "kink"])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(len(surface)):
            wr.writerow([i, *(f"{x:.17g}" for x in d.points[i]), f"{surface.radii[i]:.17g}",
                         f"{surface.weights[i]:.17g}", *(f"{k:.17g}" for k in d.kappas[i]),
                         f"{d.gk[i]:.17g}", f"{d.area_element[i]:.17g}", int(d.kink[i])])
