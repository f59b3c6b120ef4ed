"""Independent closed-form oracles used by the test suite.

Nothing here is imported by the package.  The polytope formulas integrate
the parallel surface of a hull stratum by stratum: flat pieces over facets,
tube pieces around edges and spherical pieces at vertices.
"""
import math
from itertools import combinations

import numpy as np
from scipy.spatial import ConvexHull

J3 = np.diag([-1.0, 1.0, 1.0, 1.0])
J2 = np.diag([-1.0, 1.0, 1.0])


def lorentz(x, y, J):
    return x @ J @ y


def _hyperbolic_angle(apex, a, b, J):
    """Angle at ``apex`` of the geodesic triangle (apex, a, b) in the hyperboloid."""
    def tangent(q):
        v = q + lorentz(apex, q, J) * apex  # k = -1: project onto T_apex
        return v / math.sqrt(lorentz(v, v, J))
    u, w = tangent(a), tangent(b)
    return math.acos(max(-1.0, min(1.0, lorentz(u, w, J))))


def _facet_planes(V, kind):
    """Facets of the hull as (vertex index triple, outward unit normal)."""
    if kind == "hyperbolic":
        K = V[:, 1:] / V[:, :1]
    else:
        K = V
    qh = ConvexHull(K)
    out = []
    for simplex, eq in zip(qh.simplices, qh.equations):
        a, b = eq[:-1], eq[-1]
        if kind == "hyperbolic":
            # functional a.x_spatial + b x0 <= 0 inside; Lorentz normal n with <n, x> = that form
            n = np.concatenate([[-b], a])
            n = n / math.sqrt(lorentz(n, n, J3))
        else:
            n = a / np.linalg.norm(a)
        out.append((tuple(int(i) for i in simplex), n))
    return out


def steiner_h3(V, t):
    """Area of the parallel surface at distance t of a hyperbolic polytope (k = -1, n = 3).

    Returns (area, facet_area, edge_term, vertex_term) where
    area = A cosh^2 t + (sum_e L_e theta_e) sinh t cosh t + (sum_v Omega_v) sinh^2 t.
    """
    facets = _facet_planes(V, "hyperbolic")
    A = 0.0
    angle_sum = {}
    for tri, _ in facets:
        angs = []
        for i in range(3):
            p = tri[i]
            q, r = tri[(i + 1) % 3], tri[(i + 2) % 3]
            a = _hyperbolic_angle(V[p], V[q], V[r], J3)
            angs.append(a)
            angle_sum[p] = angle_sum.get(p, 0.0) + a
        A += math.pi - sum(angs)
    edges = {}
    for tri, n in facets:
        for e in combinations(sorted(tri), 2):
            edges.setdefault(e, []).append(n)
    E = 0.0
    for (i, j), ns in edges.items():
        L = math.acosh(max(1.0, -lorentz(V[i], V[j], J3)))
        theta = math.acos(max(-1.0, min(1.0, lorentz(ns[0], ns[1], J3))))
        E += L * theta
    Om = sum(2.0 * math.pi - s for s in angle_sum.values())
    ch, sh = math.cosh(t), math.sinh(t)
    return A * ch * ch + E * sh * ch + Om * sh * sh, A, E, Om


def total_curvature_h3_parallel(V, t):
    """G of the parallel surface: Gauss-Bonnet gives 4 pi + area for k = -1."""
    return 4.0 * math.pi + steiner_h3(V, t)[0]


def polygon_h2(V):
    """(perimeter, area) of a convex hyperbolic polygon with hyperboloid vertices (k = -1)."""
    K = V[:, 1:] / V[:, :1]
    qh = ConvexHull(K)
    order = list(qh.vertices)
    m = len(order)
    L, angs = 0.0, 0.0
    for i in range(m):
        a, b, c = V[order[i - 1]], V[order[i]], V[order[(i + 1) % m]]
        L += math.acosh(max(1.0, -lorentz(b, c, J2)))
        angs += _hyperbolic_angle(b, a, c, J2)
    return L, (m - 2) * math.pi - angs


def parallel_curve_h2(V, t):
    """(length, integral of geodesic curvature) of the parallel curve at distance t."""
    L, area = polygon_h2(V)
    ext = 2.0 * math.pi + area  # sum of exterior angles
    return L * math.cosh(t) + ext * math.sinh(t), L * math.sinh(t) + ext * math.cosh(t)


def enclosed_area_h2_parallel(V, t):
    """Area enclosed by the parallel curve at distance t (k = -1)."""
    L, area = polygon_h2(V)
    ext = 2.0 * math.pi + area
    return area + L * math.sinh(t) + ext * (math.cosh(t) - 1.0)
