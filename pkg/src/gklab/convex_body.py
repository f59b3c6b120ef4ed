"""Convex bodies, their distance functions and nearest-point projections.

Two body types are supported:

* :class:`Ball`, a closed geodesic ball in any model space;
* :class:`Hull`, the geodesic convex hull of finitely many points in Euclidean
  or hyperbolic space.  In the hyperboloid model the hull is the trace of the
  Euclidean convex cone spanned by the vertex rays, so it is a Euclidean
  polytope in Klein coordinates.

Projection onto a hull enumerates the faces of that polytope: the nearest
point lies in the relative interior of exactly one face, where it coincides
with the projection onto the totally geodesic span of that face.  A projected
gradient solver over simplex weights (:meth:`Hull.project_pgd`) is kept as an
independent route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import _hull_kernel
from .model_space import ConvergenceError, ModelSpace, _ldot

__all__ = [
    "ProjectionResult",
    "Ball",
    "Hull",
    "project_simplex",
    "SweepStats",
    "lipschitz_ratio_sweep",
    "shell_pairs",
    "straddle_pairs",
    "projection_expansion",
    "log_map_expansion",
    "polygon_area",
    "hull_hausdorff",
]


@dataclass(frozen=True)
class ProjectionResult:
    foot: np.ndarray
    dist: np.ndarray
    grad: np.ndarray  # unit gradient of d_X off the body, zero on it
    face: np.ndarray | None = None  # hulls: index of the face whose relative interior holds the foot


class _Body:
    space: ModelSpace

    def project(self, p) -> ProjectionResult:  # pragma: no cover - abstract
        raise NotImplementedError

    def contains(self, p):
        return self.project(p).dist == 0.0

    def distance_to(self, p):
        return self.project(p).dist

    def grad_distance(self, p):
        res = self.project(p)
        if np.any(res.dist <= 0.0):
            raise ValueError("grad_distance is undefined on the body")
        return res.grad

    def grad_distance_squared(self, p):
        """-2 log_p(foot); vanishes on the body."""
        res = self.project(p)
        return 2.0 * res.dist[..., None] * res.grad

    def value_and_grad(self, p):
        res = self.project(p)
        return res.dist, res.grad


@dataclass(frozen=True)
class Ball(_Body):
    space: ModelSpace
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", self.space.project_point(np.asarray(self.center, float)))

    @property
    def _at_origin(self) -> bool:
        return self.space.kind == "warped" and not np.any(self.center)

    def interior_point(self):
        return self.center.copy()

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def project(self, p) -> ProjectionResult:
        S = self.space
        p = np.asarray(p, dtype=float)
        if self._at_origin:
            r = np.linalg.norm(p, axis=-1)
            u = p / np.where(r > 0, r, 1.0)[..., None]
            d = np.maximum(r - self.radius, 0.0)
            out = d > 0
            foot = np.where(out[..., None], self.radius * u, p)
            return ProjectionResult(foot, d, u * out[..., None])
        c = np.broadcast_to(self.center, p.shape)
        to_c = S.log_map(p, c)
        s = S.norm(p, to_c)
        d = np.maximum(s - self.radius, 0.0)
        out = d > 0
        safe = np.where(out, s, 1.0)
        grad = -to_c / safe[..., None] * out[..., None]
        foot = S.exp_map(p, to_c * (d / safe)[..., None])
        foot = np.where(out[..., None], foot, p)
        return ProjectionResult(foot, d, grad)

    def boundary_radii(self, base, dirs):
        """Distance from ``base`` to the sphere along each unit tangent in ``dirs``."""
        S = self.space
        base = np.asarray(base, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        if S.kind != "warped" or (self._at_origin and not np.any(base)):
            b = np.broadcast_to(base, dirs.shape)
            to_c = S.log_map(b, np.broadcast_to(self.center, dirs.shape))
            a = S.norm(b, to_c)
            cosang = np.where(a > 0, S.inner(b, to_c, dirs) / np.where(a > 0, a, 1.0), 0.0)
            if S.kind == "euclidean" or self._at_origin:
                return cosang * a + np.sqrt(self.radius**2 - a**2 * (1.0 - cosang**2))
            # hyperbolic law of cosines, solved for the far intersection
            R = S.scale
            A, rho = a / R, self.radius / R
            ch, sh = np.cosh(A), np.sinh(A) * cosang
            # cosh(rho) = ch cosh(s) - sh sinh(s)  ->  solve for s >= 0
            amp = np.sqrt(np.maximum(ch**2 - sh**2, 1e-300))
            phase = np.arctanh(np.clip(sh / ch, -1 + 1e-16, 1 - 1e-16))
            return R * (phase + np.arccosh(np.maximum(np.cosh(rho) / amp, 1.0)))
        raise NotImplementedError("boundary radii in warped space need an origin-centred ball and base")


class Hull(_Body):
    """Geodesic convex hull of a finite point set (Euclidean or hyperbolic)."""

    def __init__(self, space: ModelSpace, vertices):
        if space.kind == "warped":
            raise ValueError("hulls are only supported in Euclidean and hyperbolic spaces")
        V = space.project_point(np.asarray(vertices, dtype=float))
        if V.ndim != 2 or V.shape[1] != space.dim:
            raise ValueError("vertices must have shape (m, dim)")
        if len(V) < space.n + 1:
            raise ValueError(f"a hull in dimension {space.n} needs at least {space.n + 1} vertices")
        for i, j in combinations(range(len(V)), 2):
            if space.distance(V[i], V[j]) < 1e-9:
                raise ValueError("coincident vertices")
        self.space = space
        self.vertices = V
        try:
            qh = ConvexHull(self._klein(V))
        except QhullError as exc:
            raise ValueError("vertices do not span a full-dimensional body") from exc
        self._equations = qh.equations
        self._facets = [tuple(sorted(s)) for s in qh.simplices]
        faces = set()
        for f in self._facets:
            for m in range(1, len(f) + 1):
                faces.update(combinations(f, m))
        self._faces = sorted(faces, key=lambda f: (len(f), f))
        self._face_data = [self._prepare_face(f) for f in self._faces]

    # ------------------------------------------------------------ structure
    def _klein(self, x):
        if self.space.kind == "hyperbolic":
            return x[..., 1:] / x[..., :1]
        return x

    def _facet_forms(self, x):
        """Facet functionals, <= 0 inside; shape (..., facets)."""
        a, b = self._equations[:, :-1], self._equations[:, -1]
        if self.space.kind == "hyperbolic":
            return x[..., 1:] @ a.T + x[..., :1] * b
        return x @ a.T + b

    def _prepare_face(self, face):
        V = self.vertices[list(face)]
        if self.space.kind == "hyperbolic":
            J = np.diag([-1.0] + [1.0] * self.space.n)
            G = V @ J @ V.T
            return V, np.linalg.inv(G) @ V @ J
        v0 = V[0]
        A = (V[1:] - v0).T
        if A.shape[1] == 0:
            return V, None
        return V, np.linalg.pinv(A)

    @property
    def faces(self):
        return list(self._faces)

    @property
    def facets(self):
        return list(self._facets)

    @property
    def diameter(self) -> float:
        V = self.vertices
        return max(float(self.space.distance(V[i], V[j])) for i, j in combinations(range(len(V)), 2))

    def interior_point(self):
        """Normalized vertex barycentre (lies in the interior)."""
        c = self.vertices.mean(axis=0)
        if self.space.kind == "hyperbolic":
            c = c * self.space.scale / math.sqrt(-_ldot(c, c))
        return c

    # ----------------------------------------------------------- projection
    def _packed(self):
        if not hasattr(self, "_pack"):
            F = len(self._face_data)
            mmax = max(len(V) for V, _ in self._face_data)
            dim = self.space.dim
            Vp = np.zeros((F, mmax, dim))
            Mp = np.zeros((F, mmax, dim))
            m = np.zeros(F, dtype=np.int64)
            for f, (V, M) in enumerate(self._face_data):
                m[f] = len(V)
                Vp[f, : len(V)] = V
                if M is not None:
                    Mp[f, : M.shape[0]] = M
            self._pack = (Vp, Mp, m)
        return self._pack

    def project(self, p) -> ProjectionResult:
        S = self.space
        p = np.asarray(p, dtype=float)
        shape = p.shape
        P = np.ascontiguousarray(p.reshape(-1, S.dim))
        Vp, Mp, m = self._packed()
        hyper = S.kind == "hyperbolic"
        foot, dist, face = _hull_kernel.project_points(
            P, Vp, Mp, m, hyper, S.scale if hyper else 1.0,
            np.ascontiguousarray(self._equations[:, :-1]), np.ascontiguousarray(self._equations[:, -1]),
            1e-13, 1e-12)
        out = dist > 0
        lg = S.log_map(P, foot)
        grad = -lg / np.where(out, dist, 1.0)[:, None] * out[:, None]
        return ProjectionResult(foot.reshape(shape), dist.reshape(shape[:-1]),
                                grad.reshape(shape), face.reshape(shape[:-1]))

    def stratum(self, p):
        """Index into :attr:`faces` of the face carrying the nearest point (-1 inside)."""
        return self.project(p).face

    def boundary_radii(self, base, dirs):
        """Exit distance from ``base`` (interior) along unit tangents ``dirs``."""
        S = self.space
        base = np.asarray(base, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        Lb = self._facet_forms(base)
        if np.any(Lb >= 0):
            raise ValueError("base point must lie in the interior of the hull")
        a, b = self._equations[:, :-1], self._equations[:, -1]
        if S.kind == "hyperbolic":
            Lw = dirs[..., 1:] @ a.T + dirs[..., :1] * b
            R = S.scale
            ratio = np.where(Lw > 0, -Lb / (R * np.where(Lw > 0, Lw, 1.0)), np.inf)
            s = np.where(ratio < 1.0, R * np.arctanh(np.minimum(ratio, 1 - 1e-16)), np.inf)
        else:
            Lw = dirs @ a.T
            s = np.where(Lw > 0, -Lb / np.where(Lw > 0, Lw, 1.0), np.inf)
        return s.min(axis=-1)

    # ------------------------------------------------------- solver route
    def project_pgd(self, p, tol: float = 1e-10, maxiter: int = 20000) -> ProjectionResult:
        """Projection by projected gradient over simplex weights with Armijo steps.

        Multi-start from the barycentre and every vertex; slow, one point at a time.
        """
        S = self.space
        p = np.asarray(p, dtype=float)
        V = self.vertices
        m = len(V)
        J = np.diag([-1.0] + [1.0] * S.n) if S.kind == "hyperbolic" else None

        def objective(w):
            z = w @ V
            if J is None:
                r = p - z
                return float(r @ r), -2.0 * V @ r
            q = -(z @ J @ z)
            a = -(p @ J @ z)
            f = a / math.sqrt(q)
            # d/dw of a / sqrt(q), with dq/dw = -2 V J z
            ga = -(V @ J @ p)
            gq = -2.0 * (V @ J @ z)
            return f, ga / math.sqrt(q) - 0.5 * a * gq / q**1.5

        best = None
        starts = [np.full(m, 1.0 / m)] + [np.eye(m)[i] for i in range(m)]
        for w in starts:
            f, g = objective(w)
            step = 1.0
            for _ in range(maxiter):
                w_new = project_simplex(w - step * g)
                f_new, g_new = objective(w_new)
                while f_new > f - 1e-4 * np.dot(g, w - w_new) and step > 1e-16:
                    step *= 0.5
                    w_new = project_simplex(w - step * g)
                    f_new, g_new = objective(w_new)
                moved = np.linalg.norm(w_new - w)
                w, f, g = w_new, f_new, g_new
                pg = np.linalg.norm(project_simplex(w - g) - w)
                if pg < tol or moved < 1e-16:
                    break
                step = min(step * 2.0, 1e6)
            else:
                raise ConvergenceError("projected gradient did not converge", float(pg))
            if best is None or f < best[0]:
                best = (f, w)
        z = best[1] @ V
        foot = z * (S.scale / math.sqrt(-_ldot(z, z))) if J is not None else z
        if bool(self.contains(p)):
            foot = p.copy()
        d = S.distance(p, foot)
        grad = -S.log_map(p, foot) / d if d > 0 else np.zeros_like(p)
        return ProjectionResult(foot, np.asarray(d), grad)


def project_simplex(y):
    """Euclidean projection of y onto the probability simplex (sort-based)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(y) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


# ------------------------------------------------------------- Lipschitz sweep
@dataclass
class SweepStats:
    max_ratio: float
    max_ratio_half: float
    rel_change: float
    stabilized: bool
    skipped: int
    pairs: int
    hist_counts: list = field(default_factory=list)
    hist_edges: list = field(default_factory=list)

    def as_dict(self):
        return dict(self.__dict__)


def lipschitz_ratio_sweep(space: ModelSpace, vector_field: Callable, sampler: Callable,
                          pairs: int, rng: np.random.Generator, bins: int = 20,
                          stable_tol: float = 0.05) -> SweepStats:
    """Ratios |F(p) - T_{q->p} F(q)| / dist(p, q) over sampled pairs.

    ``sampler(rng, count)`` returns two point arrays.  The maximum over the first
    half of the pairs is compared with the maximum over all of them to judge
    whether the estimate has stabilized.
    """
    P, Q = sampler(rng, pairs)
    d = space.distance(P, Q)
    keep = d >= 1e-10
    skipped = int(np.count_nonzero(~keep))
    P, Q, d = P[keep], Q[keep], d[keep]
    Fp = vector_field(P)
    Fq = space.parallel_transport(Q, P, vector_field(Q))
    diff = Fp - Fq
    ratio = space.norm(P, diff) / d
    half = max(1, len(ratio) // 2)
    m_all = float(ratio.max())
    m_half = float(ratio[:half].max())
    rel = (m_all - m_half) / m_all if m_all > 0 else 0.0
    counts, edges = np.histogram(ratio, bins=bins, range=(0.0, m_all if m_all > 0 else 1.0))
    return SweepStats(m_all, m_half, rel, bool(np.isfinite(m_all) and rel < stable_tol),
                      skipped, int(len(ratio)), counts.tolist(), edges.tolist())


def _random_unit_tangents(space, P, rng):
    F = space.frame(P)
    c = rng.normal(size=P.shape[:-1] + (space.n,))
    c /= np.linalg.norm(c, axis=-1, keepdims=True)
    return np.einsum("...i,...id->...d", c, F)


def shell_pairs(space: ModelSpace, body, base, outer: float, max_sep: float, min_sep: float = 1e-3):
    """Sampler of close pairs in the geodesic ball of radius ``outer`` about ``base``.

    The first point is uniform in direction and radius, the second sits at a
    log-uniform separation in a random direction.
    """
    base = np.asarray(base, dtype=float)

    def sample(rng, count):
        F0 = space.frame(base)
        c = rng.normal(size=(count, space.n))
        c /= np.linalg.norm(c, axis=-1, keepdims=True)
        r = outer * rng.uniform(0.0, 1.0, size=count) ** (1.0 / space.n)
        P = space.exp_map(np.broadcast_to(base, (count, space.dim)), (c * r[:, None]) @ F0)
        sep = np.exp(rng.uniform(math.log(min_sep), math.log(max_sep), size=count))
        Q = space.exp_map(P, _random_unit_tangents(space, P, rng) * sep[:, None])
        return P, Q

    return sample


def straddle_pairs(space: ModelSpace, body, base, separation: float):
    """Pairs p, q on opposite sides of the body's boundary, ``separation`` apart.

    Both lie on the ray from ``base`` through a random boundary point, at
    signed distances -separation/2 and +separation/2 from the boundary.
    """
    base = np.asarray(base, dtype=float)

    def sample(rng, count):
        F0 = space.frame(base)
        c = rng.normal(size=(count, space.n))
        c /= np.linalg.norm(c, axis=-1, keepdims=True)
        dirs = c @ F0
        rho = body.boundary_radii(base, dirs)
        B = np.broadcast_to(base, (count, space.dim))
        P = space.exp_map(B, dirs * (rho - 0.5 * separation)[:, None])
        Q = space.exp_map(B, dirs * (rho + 0.5 * separation)[:, None])
        return P, Q

    return sample


# ---------------------------------------------------------- nonexpansive maps
def projection_expansion(body, P, Q):
    """dist(pi P, pi Q) / dist(P, Q) for paired points."""
    d = body.space.distance(P, Q)
    dp = body.space.distance(body.project(P).foot, body.project(Q).foot)
    return dp / d


def log_map_expansion(space: ModelSpace, p, A, B):
    """|log_p A - log_p B| / dist(A, B) for paired points A, B."""
    p = np.broadcast_to(np.asarray(p, dtype=float), np.shape(A))
    diff = space.log_map(p, A) - space.log_map(p, B)
    return space.norm(p, diff) / space.distance(A, B)


def polygon_area(hull: "Hull") -> float:
    """Area of a two-dimensional hull from its vertex angles or the shoelace rule."""
    S = hull.space
    if S.n != 2:
        raise ValueError("polygon area needs a two-dimensional hull")
    ring = _boundary_cycle(hull)
    V = hull.vertices[ring]
    if S.kind == "euclidean":
        x, y = V[:, 0], V[:, 1]
        return float(0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))
    prev, nxt = np.roll(V, 1, axis=0), np.roll(V, -1, axis=0)
    a, b = S.log_map(V, prev), S.log_map(V, nxt)
    cos = S.inner(V, a, b) / (S.norm(V, a) * S.norm(V, b))
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    return float(((len(V) - 2) * math.pi - angles.sum()) * S.scale**2)


def _boundary_cycle(hull):
    nbrs = {}
    for i, j in hull.facets:
        nbrs.setdefault(i, []).append(j)
        nbrs.setdefault(j, []).append(i)
    start = min(nbrs)
    ring, prev = [start], None
    while True:
        cur = ring[-1]
        nxt = next(v for v in nbrs[cur] if v != prev)
        if nxt == start:
            return ring
        prev = cur
        ring.append(nxt)


def hull_hausdorff(a: "Hull", b: "Hull") -> float:
    """Hausdorff distance between two hulls.

    d_B is convex along geodesics, so its maximum over a hull is attained at a
    vertex and the distance is exact.
    """
    return float(max(b.distance_to(a.vertices).max(), a.distance_to(b.vertices).max()))
