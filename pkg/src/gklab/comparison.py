"""The interpolant u = lam d_D + d_Omega^2 and the comparison formula.

For a convex function u constant on two nested convex hypersurfaces
gamma = {u = a} and Gamma = {u = b},

    G(Gamma) - G(gamma) = -int sum_i GK_i R_inin
                          + int sum_{i != j} GK_ij (|grad u|_j / |grad u|) R_ijin,

integrated over the region a < u < b.  Here e_n = grad u / |grad u|, e_i are
principal directions of the level sets with principal curvatures kappa_i,
GK_i (GK_ij) is the product of all kappa's except kappa_i (kappa_i, kappa_j),
and |grad u|_j is the derivative of |grad u| along e_j.  R_abab is the
sectional curvature of the plane e_a, e_b.

Volume integrals are evaluated with the coarea formula: Gauss-Legendre nodes
in the level value, each level set a radial graph on the angular grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convex_body import Ball, Hull
from .model_space import ModelSpace
from .surface import (
    AnalyticSphere,
    DirectionGrid,
    RadialGraph,
    _unit_normals,
    level_surface,
    shape_operator_at,
    total_curvature,
    total_curvature_limit,
)

__all__ = [
    "DistanceField",
    "InterpolantField",
    "AdaptedFrame",
    "IntegrandSample",
    "ComparisonReport",
    "N3Estimates",
    "evaluate_interpolant",
    "norm_identity_residual",
    "extract_level_set",
    "adapted_frame",
    "grad_norm_derivative",
    "grad_norm_derivatives",
    "cofactors",
    "integrand_terms",
    "comparison_integrands",
    "region_integral",
    "comparison_identity_report",
    "f_lambda",
    "n3_estimates_report",
    "sample_outside",
    "sample_between",
    "check_nested",
]

KINK_RTOL = 1e-3
MARGIN_FRACTION = 1.0 / 16.0


def _fd_base_step(diameter: float) -> float:
    return 1e-4 * diameter


def check_nested(inner, outer, samples: int = 2048) -> None:
    """Raise ValueError unless the closure of ``inner`` lies in the interior of ``outer``.

    Boundary points of ``inner`` are pushed slightly outward along rays from
    its interior point and must still be inside ``outer``.
    """
    if inner.space != outer.space:
        raise ValueError("bodies live in different spaces")
    S = inner.space
    base = inner.interior_point()
    if outer.distance_to(base[None])[0] > 0:
        raise ValueError("nesting violation: inner body is not inside the outer one")
    grid = DirectionGrid.default(S.n, 16, 32, samples // 4) if S.n in (2, 3) else None
    if grid is None:
        rng = np.random.default_rng(0)
        ref = rng.normal(size=(samples, S.n))
        ref /= np.linalg.norm(ref, axis=1, keepdims=True)
    else:
        ref = grid.ref
    dirs = ref @ S.frame(base)
    r = inner.boundary_radii(base, dirs)
    pad = 1e-6 * max(inner.diameter, 1.0)
    pts = S.exp_map(np.broadcast_to(base, dirs.shape), dirs * (r + pad)[:, None])
    if np.any(outer.distance_to(pts) > 0):
        raise ValueError("nesting violation: inner body is not inside the outer one")
    if isinstance(inner, Hull) and np.any(outer.distance_to(inner.vertices) > 0):
        raise ValueError("nesting violation: an inner vertex lies outside the outer body")


# ----------------------------------------------------------------- fields
class _Field:
    space: ModelSpace

    def interior_point(self):
        return self._anchor.interior_point()

    @property
    def diameter(self) -> float:
        return self._extent.diameter

    def grad_norm(self, p):
        _, g = self.value_and_grad(p)
        return self.space.norm(p, g)

    def unit_normal(self, p):
        return _unit_normals(self.space, self.value_and_grad, p)


@dataclass(frozen=True)
class DistanceField(_Field):
    """u = d_X, convex and C^{1,1} off X."""

    body: object

    @property
    def space(self):
        return self.body.space

    @property
    def _anchor(self):
        return self.body

    @property
    def _extent(self):
        return self.body

    def value_and_grad(self, p):
        return self.body.value_and_grad(p)

    def smooth_margin(self, p):
        return self.body.distance_to(p)

    def radial_guess(self, base, dirs, level):
        return self.body.boundary_radii(base, dirs) + level


@dataclass(frozen=True)
class InterpolantField(_Field):
    """u = lam d_D + d_Omega^2 with D (inner) nested in Omega (outer)."""

    inner: object
    outer: object
    lam: float = 0.0
    lam_max: float | None = None
    check: bool = True

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.lam_max is not None and self.lam > self.lam_max:
            raise ValueError("lambda exceeds the configured maximum")
        if self.check:
            check_nested(self.inner, self.outer)

    @property
    def space(self):
        return self.outer.space

    @property
    def _anchor(self):
        return self.inner

    @property
    def _extent(self):
        return self.outer

    def with_lambda(self, lam: float) -> "InterpolantField":
        return InterpolantField(self.inner, self.outer, lam, self.lam_max, check=False)

    def parts(self, p):
        """(d_D, grad d_D, d_Omega, grad d_Omega); gradients vanish on the bodies."""
        dD, gD = self.inner.value_and_grad(p)
        dO, gO = self.outer.value_and_grad(p)
        return dD, gD, dO, gO

    def value_and_grad(self, p):
        dD, gD, dO, gO = self.parts(p)
        return (self.lam * dD + dO**2,
                self.lam * gD + 2.0 * dO[..., None] * gO)

    def smooth_margin(self, p):
        dD, _, dO, _ = self.parts(p)
        return np.where(dO > 0, dO, dD if self.lam > 0 else np.inf)

    def radial_guess(self, base, dirs, level):
        return self.outer.boundary_radii(base, dirs) + math.sqrt(max(level, 0.0))


def evaluate_interpolant(fld: InterpolantField, p):
    """(u, grad u) at points outside the inner body (anywhere when lam = 0)."""
    p = np.asarray(p, dtype=float)
    if fld.lam > 0 and np.any(fld.inner.distance_to(p) <= 0):
        raise ValueError("u is only C^{1,1} off the inner body; point lies inside it")
    return fld.value_and_grad(p)


def norm_identity_residual(fld: InterpolantField, p):
    """|grad u|^2 - (4 d^2 + lam^2 + 4 lam d <grad d_Omega, grad d_D>), d = d_Omega."""
    p = np.asarray(p, dtype=float)
    dD, gD, dO, gO = fld.parts(p)
    g = fld.lam * gD + 2.0 * dO[..., None] * gO
    S = fld.space
    lhs = S.inner(p, g, g)
    rhs = 4.0 * dO**2 + fld.lam**2 + 4.0 * fld.lam * dO * S.inner(p, gO, gD)
    return lhs - rhs


# ------------------------------------------------------------- level sets
def extract_level_set(fld, c: float, base=None, grid: DirectionGrid | None = None,
                      fd_step: float | None = None) -> RadialGraph:
    """The level set {u = c} as a radial graph about an interior point of the inner body."""
    S = fld.space
    if not c > 0:
        raise ValueError("level must be positive")
    base = fld.interior_point() if base is None else np.asarray(base, dtype=float)
    if fld._anchor.distance_to(base[None])[0] > 0:
        raise ValueError("base must lie in the inner body")
    grid = grid or DirectionGrid.default(S.n)
    h = fd_step if fd_step is not None else _fd_base_step(fld.diameter)
    frame = S.frame(base)
    guess = fld.radial_guess(base, grid.ref @ frame, c)
    return level_surface(S, base, fld.value_and_grad, c, grid, h, guess)


# ---------------------------------------------------------------- frames
@dataclass(frozen=True)
class AdaptedFrame:
    """Frames at a batch of points: e[..., i, :] for i < n-1 and e_n."""

    point: np.ndarray
    e_n: np.ndarray
    e: np.ndarray
    kappas: np.ndarray
    grad_norm: np.ndarray
    step: np.ndarray

    def full(self):
        return np.concatenate([self.e, self.e_n[..., None, :]], axis=-2)

    def gram_residual(self, space):
        E = self.full()
        p = self.point[..., None, None, :]
        G = space.inner(p, E[..., :, None, :], E[..., None, :, :])
        return np.abs(G - np.eye(E.shape[-2])).max(axis=(-1, -2))


def _steps(fld, p, h):
    h0 = h if h is not None else _fd_base_step(fld.diameter)
    margin = fld.smooth_margin(p)
    return np.minimum(h0, MARGIN_FRACTION * margin)


def adapted_frame(fld, p, h=None) -> AdaptedFrame:
    """e_n = grad u/|grad u| and principal directions of the level set through p."""
    S = fld.space
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    P = np.atleast_2d(p)
    _, g = fld.value_and_grad(P)
    gn = S.norm(P, g)
    if np.any(~(gn > 1e-10)):
        raise ValueError("gradient of u vanishes; no adapted frame")
    step = _steps(fld, P, h)
    if np.any(~(step > 1e-13)):
        raise ValueError("finite-difference step underflow near the nonsmooth set")
    N, kappas, dirs, _, _ = shape_operator_at(S, P, fld.unit_normal, step[:, None])
    fr = AdaptedFrame(P, N, dirs, kappas, gn, step)
    if single:
        return AdaptedFrame(*(getattr(fr, f)[0] for f in fr.__dataclass_fields__))
    return fr


def grad_norm_derivatives(fld, P, E, step):
    """|grad u|_j along each frame vector, by central differences at steps h and h/2.

    Returns ``(values, disagreement)``; values use step h.
    """
    S = fld.space
    m = E.shape[-2]
    out = np.empty(P.shape[:-1] + (m,))
    dis = np.empty_like(out)
    h = np.asarray(step, dtype=float)[..., None]
    for j in range(m):
        est = []
        for hh in (h, 0.5 * h):
            v = hh * E[..., j, :]
            gp = fld.grad_norm(S.exp_map(P, v))
            gm = fld.grad_norm(S.exp_map(P, -v))
            est.append((gp - gm) / (2.0 * hh[..., 0]))
        out[..., j] = est[0]
        dis[..., j] = np.abs(est[0] - est[1])
    return out, dis


def grad_norm_derivative(fld, frame: AdaptedFrame, j: int) -> float:
    """|grad u|_j = d/ds |grad u|(exp_p(s e_j)) at s = 0."""
    if not 0 <= j < frame.e.shape[-2]:
        raise IndexError("frame index out of range")
    vals, _ = grad_norm_derivatives(fld, frame.point[None], frame.e[None], np.atleast_1d(frame.step))
    return float(vals[0, j])


# ------------------------------------------------------------- integrands
def cofactors(kappas):
    """(GK_i, GK_ij) as explicit products omitting the indicated curvatures."""
    k = np.asarray(kappas, dtype=float)
    m = k.shape[-1]
    diag = np.ones(k.shape)
    off = np.zeros(k.shape + (m,))
    for i in range(m):
        for l in range(m):
            if l != i:
                diag[..., i] *= k[..., l]
        for j in range(m):
            if j == i:
                continue
            prod = np.ones(k.shape[:-1])
            for l in range(m):
                if l not in (i, j):
                    prod = prod * k[..., l]
            off[..., i, j] = prod
    return diag, off


def integrand_terms(kappas, ratios, R):
    """term1 = sum_i GK_i R_inin, term2 = sum_{i != j} GK_ij ratio_j R_ijin.

    ``R`` is the curvature tensor in the frame (e_1..e_{n-1}, e_n), ``ratios``
    holds |grad u|_j / |grad u|.  The off-diagonal sum runs over ordered pairs.
    """
    diag, off = cofactors(kappas)
    n1 = np.shape(kappas)[-1]
    idx = np.arange(n1)
    R_inin = R[..., idx, n1, idx, n1]
    R_ijin = R[..., idx[:, None], idx[None, :], idx[:, None], n1]
    term1 = np.sum(diag * R_inin, axis=-1)
    mask = ~np.eye(n1, dtype=bool)
    term2 = np.sum(np.where(mask, off * ratios[..., None, :] * R_ijin, 0.0), axis=(-1, -2))
    return term1, term2, R_inin, R_ijin


@dataclass
class IntegrandSample:
    point: np.ndarray
    cofactor_diag: np.ndarray
    cofactor_off: np.ndarray
    grad_norm: np.ndarray
    grad_norm_derivs: np.ndarray
    R_inin: np.ndarray
    R_ijin: np.ndarray
    term1: np.ndarray
    term2: np.ndarray
    kink: np.ndarray


def _integrands_from_frame(fld, P, e, e_n, kappas, gn, step) -> IntegrandSample:
    S = fld.space
    derivs, dis = grad_norm_derivatives(fld, P, e, step)
    kink = np.any(dis > KINK_RTOL * (1.0 + np.abs(derivs)), axis=-1)
    R = S.riemann_tensor(P, np.concatenate([e, e_n[..., None, :]], axis=-2))
    t1, t2, R_inin, R_ijin = integrand_terms(kappas, derivs / gn[..., None], R)
    diag, off = cofactors(kappas)
    return IntegrandSample(P, diag, off, gn, derivs, R_inin, R_ijin, t1, t2, kink)


def comparison_integrands(fld, p, h=None) -> IntegrandSample:
    fr = adapted_frame(fld, np.atleast_2d(np.asarray(p, dtype=float)), h)
    return _integrands_from_frame(fld, fr.point, fr.e, fr.e_n, fr.kappas, fr.grad_norm, fr.step)


def f_lambda(fld, p, h=None):
    """F = sum_{i,j <= 2} (|grad u|_j / |grad u|) R_ijin (n = 3)."""
    if fld.space.n != 3:
        raise ValueError("F_lambda is defined for n = 3")
    s = comparison_integrands(fld, p, h)
    ratios = s.grad_norm_derivs / s.grad_norm[..., None]
    return np.sum(ratios[..., None, :] * s.R_ijin, axis=(-1, -2))


# ---------------------------------------------------------- region integrals
def _level_terms(fld, a, b, names, grid, nodes, fd_step, base, integrand=None):
    """Coarea integrals over a < u < b of the requested integrands."""
    out = {k: 0.0 for k in names}
    if not b > a:
        return out, 0
    x, w = np.polynomial.legendre.leggauss(nodes)
    levels = 0.5 * (b - a) * x + 0.5 * (a + b)
    kinks = 0
    for c, wc in zip(levels, 0.5 * (b - a) * w):
        graph = extract_level_set(fld, c, base=base, grid=grid, fd_step=fd_step)
        d = graph.data
        P = d.points
        gn = fld.grad_norm(P)
        dA = graph.weights * d.area_element / gn
        if "one" in names:
            out["one"] += wc * float(np.sum(dA))
        if integrand is not None:
            out["custom"] += wc * float(np.sum(np.asarray(integrand(P)) * dA))
        if "term1" in names or "term2" in names:
            step = np.minimum(graph.fd_step, MARGIN_FRACTION * fld.smooth_margin(P))
            s = _integrands_from_frame(fld, P, d.directions, d.normals, d.kappas, gn, step)
            kinks += int(s.kink.sum())
            if "term1" in names:
                out["term1"] += wc * float(np.sum(s.term1 * dA))
            if "term2" in names:
                out["term2"] += wc * float(np.sum(s.term2 * dA))
    return out, kinks


_NAMED = ("one", "term1", "term2")


def region_integral(fld, value_range, integrand, grid: DirectionGrid | None = None,
                    nodes: int = 32, fd_step: float | None = None, base=None) -> float:
    """int over {a < u < b} of f dV = int_a^b dt int_{u = t} f / |grad u| dA.

    ``integrand`` is a callable of points or one of "one", "term1", "term2".
    """
    a, b = value_range
    if isinstance(integrand, str):
        if integrand not in _NAMED:
            raise ValueError(f"unknown integrand {integrand!r}")
        res, _ = _level_terms(fld, a, b, (integrand,), grid, nodes, fd_step, base)
        return res[integrand]
    res, _ = _level_terms(fld, a, b, ("custom",), grid, nodes, fd_step, base, integrand)
    return res["custom"]


# --------------------------------------------------------- identity report
@dataclass
class ComparisonReport:
    lhs: float
    rhs_term1: float  # -int term1
    rhs_term2: float  # +int term2
    residual: float
    inequality_margin: float
    refinement_history: list = field(default_factory=list)
    g_outer: float = math.nan
    g_inner: float = math.nan
    levels: tuple = ()
    kinks: int = 0

    @property
    def rhs(self) -> float:
        return self.rhs_term1 + self.rhs_term2

    @property
    def relative_residual(self) -> float:
        return self.residual / abs(self.lhs) if self.lhs else math.inf

    def as_dict(self):
        return {
            "lhs": self.lhs,
            "rhs_term1": self.rhs_term1,
            "rhs_term2": self.rhs_term2,
            "residual": self.residual,
            "inequality_margin": self.inequality_margin,
            "refinement_history": self.refinement_history,
            "g_outer": self.g_outer,
            "g_inner": self.g_inner,
            "levels": list(self.levels),
            "kinks": self.kinks,
        }


def _boundary_level(fld, body, base, grid):
    S = fld.space
    dirs = grid.ref @ S.frame(base)
    r = body.boundary_radii(base, dirs)
    pts = S.exp_map(np.broadcast_to(base, dirs.shape), dirs * r[:, None])
    u = fld.value_and_grad(pts)[0]
    if np.ptp(u) > 1e-8 * (1.0 + np.abs(u).max()):
        raise ValueError("u is not constant on the boundary of the given body")
    return float(np.mean(u))


def _body_total(body, base, grid, fd_step, limit_kw):
    if isinstance(body, Ball):
        sph = AnalyticSphere(body.space, body.center, body.radius)
        return total_curvature(sph.graph(grid, base=base, fd_step=fd_step))
    return total_curvature_limit(body, **(limit_kw or {})).value


def comparison_identity_report(inner, outer, fld, grid: DirectionGrid | None = None,
                               nodes: int = 32, fd_step: float | None = None,
                               refinements: int = 1, base=None,
                               limit_kw: dict | None = None) -> ComparisonReport:
    """Both sides of the comparison formula between two level sets of u.

    ``inner`` and ``outer`` are either level values of u or bodies whose
    boundaries are level sets of u.  Totals come from surface quadrature (balls,
    level sets) or the parallel-surface limit (hulls); the right side from
    coarea integrals.  Each refinement doubles the angular grid and halves
    the finite-difference step.
    """
    S = fld.space
    base = fld.interior_point() if base is None else np.asarray(base, dtype=float)
    grid = grid or DirectionGrid.default(S.n)
    h = fd_step if fd_step is not None else _fd_base_step(fld.diameter)
    if not isinstance(inner, (int, float)) and not isinstance(outer, (int, float)):
        check_nested(inner, outer)
    history = []
    report = None
    for level in range(refinements + 1):
        a = float(inner) if isinstance(inner, (int, float)) else _boundary_level(fld, inner, base, grid)
        b = float(outer) if isinstance(outer, (int, float)) else _boundary_level(fld, outer, base, grid)
        if not b > a:
            raise ValueError("nesting violation: u must be smaller on the inner surface")

        def total(spec, c):
            if isinstance(spec, (int, float)):
                return total_curvature(extract_level_set(fld, c, base=base, grid=grid, fd_step=h))
            return _body_total(spec, base, grid, h, limit_kw)

        g_out, g_in = total(outer, b), total(inner, a)
        res, kinks = _level_terms(fld, a, b, ("term1", "term2"), grid, nodes, h, base)
        lhs = g_out - g_in
        r1, r2 = -res["term1"], res["term2"]
        residual = abs(lhs - (r1 + r2))
        history.append({"grid": _grid_spec(grid, S.n), "fd_step": h, "nodes": nodes,
                        "lhs": lhs, "rhs": r1 + r2, "residual": residual})
        if report is None:
            report = ComparisonReport(lhs, r1, r2, residual, lhs - r2, history, g_out, g_in,
                                      (a, b), kinks)
        grid = _refine_grid(grid, S.n)
        h *= 0.5
    return report


def _grid_spec(grid, n):
    return list(grid.shape) if grid.shape else [len(grid)]


def _refine_grid(grid, n):
    if grid.shape is None:
        raise ValueError("refinement needs a product direction grid")
    if n == 2:
        return DirectionGrid.circle(2 * grid.shape[0])
    n_polar, n_azimuth = grid.shape
    return DirectionGrid.sphere(2 * n_polar, 2 * n_azimuth)


# -------------------------------------------------------------- estimates
def sample_outside(outer, base, count, d_min, d_max, rng):
    """Points outside ``outer`` with d_Omega log-uniform in [d_min, d_max].

    Feet and outward normals come from projecting points at distance d_max
    along random rays; each sample is exp_foot(d normal), whose distance to
    the convex body is exactly d.
    """
    from .surface import solve_radii

    S = outer.space
    ref = rng.normal(size=(count, S.n))
    ref /= np.linalg.norm(ref, axis=1, keepdims=True)
    d = np.exp(rng.uniform(math.log(d_min), math.log(d_max), size=count))
    dirs = ref @ S.frame(base)
    guess = outer.boundary_radii(base, dirs) + d_max
    s = solve_radii(S, base, dirs, outer.value_and_grad, d_max, guess)
    far = S.exp_map(np.broadcast_to(base, dirs.shape), dirs * s[:, None])
    foot = outer.project(far).foot
    nu = S.log_map(foot, far)
    nu /= S.norm(foot, nu)[:, None]
    return S.exp_map(foot, nu * d[:, None])


def sample_between(inner, outer, base, count, rng, lo=0.05, hi=0.95):
    """Points of Omega minus closed D along rays from ``base``."""
    S = outer.space
    ref = rng.normal(size=(count, S.n))
    ref /= np.linalg.norm(ref, axis=1, keepdims=True)
    dirs = ref @ S.frame(base)
    r0 = inner.boundary_radii(base, dirs)
    r1 = outer.boundary_radii(base, dirs)
    s = r0 + rng.uniform(lo, hi, size=count) * (r1 - r0)
    return S.exp_map(np.broadcast_to(base, dirs.shape), dirs * s[:, None])


@dataclass
class N3Estimates:
    lam: float
    count: int
    min_inner_product: float
    min_grad_ratio: float
    max_grad_norm_deriv: float
    max_f_outside: float
    max_f_between: float
    f_noise_floor: float
    max_norm_identity: float
    jittered: int
    unresolved_kinks: int
    pass_inner_product: bool
    pass_grad_ratio: bool
    pass_f: bool

    def as_dict(self):
        return dict(self.__dict__)


def _jittered_integrands(fld, P, h):
    """Integrand samples; kinked points are moved by 10 steps along e_1 once."""
    P = np.array(P, dtype=float)
    s = comparison_integrands(fld, P, h)
    kink = s.kink.copy()
    moved = int(kink.sum())
    if moved:
        fr = adapted_frame(fld, P[kink], h)
        Q = fld.space.exp_map(P[kink], 10.0 * fr.step[:, None] * fr.e[:, 0, :])
        s2 = comparison_integrands(fld, Q, h)
        for f in s.__dataclass_fields__:
            getattr(s, f)[kink] = getattr(s2, f)
    return s, moved, int(s.kink.sum())


def n3_estimates_report(fld: InterpolantField, outside, between=None, h=None,
                        f_floor: float = 1e-9) -> N3Estimates:
    """The three n = 3 estimates on sample points outside Omega.

    (a) <grad d_Omega, grad d_D> >= 0, (b) |grad u| >= 2 d_Omega, and the size
    of |grad u|_j; F_lambda is reported outside Omega and on ``between`` points
    in Omega minus closed D, where u = lam d_D.  The F noise floor is
    ``f_floor (1 + sum_j ||grad u|_j| / |grad u|)``.
    """
    S = fld.space
    if S.n != 3:
        raise ValueError("the estimates are stated for n = 3")
    P = np.asarray(outside, dtype=float)
    dD, gD, dO, gO = fld.parts(P)
    if np.any(dO <= 0):
        raise ValueError("sample points must lie outside the outer body")
    ip = S.inner(P, gO, gD)
    _, g = fld.value_and_grad(P)
    gn = S.norm(P, g)
    ratio = gn / (2.0 * dO)
    ident = np.abs(norm_identity_residual(fld, P))
    s, jit, unresolved = _jittered_integrands(fld, P, h)
    rat = s.grad_norm_derivs / s.grad_norm[:, None]
    F_out = np.sum(rat[:, None, :] * s.R_ijin, axis=(-1, -2))
    floor_out = f_floor * (1.0 + np.abs(rat).sum(axis=-1))
    f_ok = bool(np.all(np.abs(F_out) <= floor_out))
    max_between = 0.0
    if between is not None and len(between):
        sb, jb, ub = _jittered_integrands(fld, np.asarray(between, dtype=float), h)
        jit, unresolved = jit + jb, unresolved + ub
        rb = sb.grad_norm_derivs / sb.grad_norm[:, None]
        F_b = np.sum(rb[:, None, :] * sb.R_ijin, axis=(-1, -2))
        max_between = float(np.abs(F_b).max())
        f_ok = f_ok and bool(np.all(np.abs(F_b) <= f_floor * (1.0 + np.abs(rb).sum(axis=-1))))
    return N3Estimates(
        lam=fld.lam, count=len(P),
        min_inner_product=float(ip.min()), min_grad_ratio=float(ratio.min()),
        max_grad_norm_deriv=float(np.abs(s.grad_norm_derivs).max()),
        max_f_outside=float(np.abs(F_out).max()), max_f_between=max_between,
        f_noise_floor=float(floor_out.max()), max_norm_identity=float(ident.max()),
        jittered=jit, unresolved_kinks=unresolved,
        pass_inner_product=bool(ip.min() >= -1e-9),
        pass_grad_ratio=bool(ratio.min() >= 1.0 - 1e-9),
        pass_f=f_ok,
    )
