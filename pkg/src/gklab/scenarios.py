"""Scenario catalog: validated configs, seeded bodies and the checks each scenario runs.

A scenario takes a :class:`ScenarioConfig` and returns a :class:`ScenarioReport`.
Failed checks are report entries, not exceptions; exceptions are reserved for
configs that cannot be run (:class:`ConfigError`) and numerical breakdowns
(:class:`NumericalFailure`).
"""
from __future__ import annotations

import copy
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .comparison import (DistanceField, InterpolantField, check_nested, comparison_identity_report,
                         extract_level_set, n3_estimates_report, sample_between, sample_outside)
from .convex_body import (Ball, Hull, hull_hausdorff, lipschitz_ratio_sweep, log_map_expansion,
                          polygon_area, projection_expansion, shell_pairs, straddle_pairs)
from .model_space import ConvergenceError, Frame, ModelSpace, mixed_components, unit_sphere_volume
from .report import Check, ScenarioReport, Table
from .surface import (AnalyticSphere, DirectionGrid, hausdorff_distance, level_normal_image_total,
                      parallel_hypersurface, parallel_normal_image_total, total_curvature,
                      total_curvature_limit)

__all__ = [
    "SCHEMA_VERSION",
    "WORKERS_ENV",
    "ConfigError",
    "NumericalFailure",
    "ScenarioConfig",
    "CATALOG",
    "list_scenarios",
    "default_config",
    "load_config",
    "run_scenario",
]

SCHEMA_VERSION = 1
WORKERS_ENV = "GKLAB_WORKERS"
NESTING_TRIES = 2000


class ConfigError(ValueError):
    """The config cannot be turned into a runnable scenario."""


class NumericalFailure(RuntimeError):
    """A numerical routine broke down while a scenario was running."""


# ------------------------------------------------------------------ configs
class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpaceSpec(_Strict):
    kind: Literal["euclidean", "hyperbolic", "warped"] = "hyperbolic"
    n: int = Field(3, ge=2, le=3)
    k: float = Field(-1.0, lt=0)
    r0: float = Field(1.0, gt=0)
    c: float = Field(0.05, ge=0)

    def build(self) -> ModelSpace:
        if self.kind == "euclidean":
            return ModelSpace.euclidean(self.n)
        if self.kind == "hyperbolic":
            return ModelSpace.hyperbolic(self.n, self.k)
        return ModelSpace.warped(self.n, self.r0, self.c)


class BodySpec(_Strict):
    """A ball, a hull with given vertices, or a hull of random vertices.

    Coordinates are tangent coordinates at the origin of the space.
    """

    name: str
    kind: Literal["ball", "hull", "random_hull"]
    radius: float | None = Field(None, gt=0)
    center: list[float] | None = None
    vertices: list[list[float]] | None = None
    count: int = Field(6, ge=3)
    sample_radius: float = Field(1.2, gt=0)


class Numerics(_Strict):
    seed: int = Field(ge=0)
    n_polar: int = Field(64, ge=4)
    n_azimuth: int = Field(128, ge=8)
    n_angles: int = Field(512, ge=16)
    fd_step: float = Field(1e-4, gt=0)
    quad_nodes: int = Field(32, ge=2)
    tolerances: dict[str, float] = Field(default_factory=dict)
    lambda_factors: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    eps_fraction: float = Field(0.05, gt=0)
    t_grid: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4])
    distances: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    perturbations: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025])
    instances: int = Field(1, ge=1)
    samples: int = Field(1000, ge=1)
    pairs: int = Field(1000, ge=2)
    refinements: int = Field(1, ge=0)
    workers: int = Field(1, ge=1)

    @field_validator("tolerances")
    @classmethod
    def _positive(cls, v):
        bad = sorted(k for k, x in v.items() if not x > 0)
        if bad:
            raise ValueError(f"tolerances must be positive: {bad}")
        return v

    @field_validator("lambda_factors", "t_grid", "distances", "perturbations")
    @classmethod
    def _positive_list(cls, v):
        if not v or any(not x > 0 for x in v):
            raise ValueError("sweep values must be positive and non-empty")
        return v


class ScenarioConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    scenario: str
    space: SpaceSpec = SpaceSpec()
    bodies: list[BodySpec] = Field(default_factory=list)
    numerics: Numerics
    output: str | None = None

    def body(self, name: str) -> BodySpec:
        for b in self.bodies:
            if b.name == name:
                return b
        raise ConfigError(f"scenario {self.scenario!r} needs a body named {name!r}")

    def tol(self, key: str) -> float:
        return self.numerics.tolerances[key]

    def echo(self) -> dict:
        """The config as it enters the report; the output path is not an input."""
        return self.model_dump(mode="json", exclude={"output"})


# ------------------------------------------------------------------ helpers
def _rng(cfg: ScenarioConfig, *index: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, scenario, index...)."""
    key = [cfg.numerics.seed, zlib.crc32(cfg.scenario.encode()), *index]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _workers(cfg: ScenarioConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            w = int(env)
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be a positive integer") from exc
        if w < 1:
            raise ConfigError(f"{WORKERS_ENV} must be a positive integer")
        return w
    return cfg.numerics.workers


def _map(cfg: ScenarioConfig, fn: Callable, items) -> list:
    """Ordered map over a worker pool; results come back in input order."""
    items = list(items)
    w = min(_workers(cfg), len(items)) if items else 1
    if w <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))


def _grid(cfg: ScenarioConfig, n: int) -> DirectionGrid:
    if n == 2:
        return DirectionGrid.circle(cfg.numerics.n_angles)
    return DirectionGrid.sphere(cfg.numerics.n_polar, cfg.numerics.n_azimuth)


def _ref_coords(space: ModelSpace, coords, what: str) -> np.ndarray:
    a = np.asarray(coords, dtype=float)
    if a.shape[-1] != space.n:
        raise ConfigError(f"{what} needs {space.n} coordinates per point")
    return a


def _uniform_ball(rng, count: int, n: int, radius: float) -> np.ndarray:
    v = rng.normal(size=(count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.uniform(size=(count, 1)) ** (1.0 / n)


def build_body(space: ModelSpace, spec: BodySpec, rng: np.random.Generator | None = None):
    if spec.kind == "ball":
        if spec.radius is None:
            raise ConfigError(f"ball {spec.name!r} needs a radius")
        c = _ref_coords(space, spec.center if spec.center is not None else [0.0] * space.n,
                        f"centre of {spec.name!r}")
        center = space.origin if not np.any(c) else space.from_origin(c)
        return Ball(space, center, spec.radius)
    if spec.kind == "hull":
        if spec.vertices is None:
            raise ConfigError(f"hull {spec.name!r} needs vertices")
        return Hull(space, space.from_origin(_ref_coords(space, spec.vertices, spec.name)))
    if rng is None:
        raise ConfigError("random hulls need a random stream")
    return Hull(space, space.from_origin(_uniform_ball(rng, spec.count, space.n, spec.sample_radius)))


def nested_pair(space: ModelSpace, inner: BodySpec, outer: BodySpec, rng):
    """Bodies for (inner, outer), resampled until the inner one lies inside."""
    fixed = inner.kind != "random_hull" and outer.kind != "random_hull"
    for _ in range(1 if fixed else NESTING_TRIES):
        O = build_body(space, outer, rng)
        D = build_body(space, inner, rng)
        try:
            check_nested(D, O)
            return D, O
        except ValueError:
            continue
    raise ConfigError("could not produce nested bodies from the body specs")


def _decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _spread(values) -> float:
    """(max - min) / max."""
    hi = max(values)
    return (hi - min(values)) / hi if hi > 0 else 0.0


def _fd(cfg: ScenarioConfig, body) -> float:
    return cfg.numerics.fd_step * body.diameter


# ---------------------------------------------------------------- scenarios
def _spheres(cfg: ScenarioConfig, rep: ScenarioReport, rel_key="rel", lower=False):
    S = cfg.space.build()
    grid = _grid(cfg, S.n)
    unit = unit_sphere_volume(S.n)
    rows = []
    for spec in cfg.bodies:
        body = build_body(S, spec)
        if not isinstance(body, Ball):
            raise ConfigError("sphere scenarios take ball bodies")
        sph = AnalyticSphere(S, body.center, body.radius)
        g = total_curvature(sph.graph(grid, fd_step=_fd(cfg, body)))
        if S.kind == "euclidean":
            exact = unit
        elif S.kind == "hyperbolic":
            exact = unit * math.cosh(body.radius / S.scale) ** (S.n - 1)
        else:
            exact = sph.total_curvature()
        rel = abs(g - exact) / exact
        rows.append([spec.name, body.radius, g, exact, rel])
        rep.check(f"{spec.name}: G matches closed form", rel <= cfg.tol(rel_key), rel, cfg.tol(rel_key))
        if lower:
            rep.check(f"{spec.name}: G >= |S^(n-1)|", g >= unit, g, unit)
    rep.table("spheres", ["body", "radius", "G", "exact", "rel_error"], rows)


def run_sphere_euclidean(cfg, rep):
    _spheres(cfg, rep)


def run_sphere_hyperbolic(cfg, rep):
    _spheres(cfg, rep, lower=True)


def run_nested_hulls(cfg, rep):
    S = cfg.space.build()
    inner, outer = cfg.body("inner"), cfg.body("outer")
    unit = unit_sphere_volume(S.n)

    def one(i):
        D, O = nested_pair(S, inner, outer, _rng(cfg, i))
        go = total_curvature_limit(O)
        gi = total_curvature_limit(D)
        return [i, go.value, gi.value, go.value - gi.value, go.converged and gi.converged,
                go.monotone and gi.monotone]

    rows = _map(cfg, one, range(cfg.numerics.instances))
    gaps = [r[3] for r in rows]
    outs = [r[1] for r in rows]
    rep.table("pairs", ["instance", "G_outer", "G_inner", "gap", "converged", "monotone"], rows)
    tg = cfg.tol("gap")
    rep.check("G(outer) - G(inner) >= -tol in every pair", min(gaps) >= -tg, min(gaps), -tg)
    ts = cfg.tol("sphere_rel")
    rep.check("G(outer) >= |S^(n-1)| (1 - tol) in every pair", min(outs) >= unit * (1 - ts),
              min(outs), unit * (1 - ts))


def run_parallel_monotone(cfg, rep):
    S = cfg.space.build()
    body = build_body(S, cfg.body("outer"), _rng(cfg, 0))
    ts = sorted(cfg.numerics.t_grid)
    adaptive = isinstance(body, Hull)

    def one(t):
        if adaptive:
            g, info = parallel_hypersurface(body, t, adaptive_tol=cfg.tol("adaptive"),
                                            fd_step=_fd(cfg, body), mix_factor=1.0)
            return [t, total_curvature(g), info.nodes, info.error_estimate]
        g = parallel_hypersurface(body, t, _grid(cfg, S.n), fd_step=_fd(cfg, body))
        return [t, total_curvature(g), len(g), float("nan")]

    rows = _map(cfg, one, ts)
    if S.kind != "warped" and S.n in (2, 3):
        for r in rows:
            r.append(parallel_normal_image_total(body, r[0])[0])
    else:
        for r in rows:
            r.append(float("nan"))
    rep.table("levels", ["t", "G", "nodes", "error_estimate", "G_normal_image"], rows)
    g = [r[1] for r in rows]
    steps = [b - a for a, b in zip(g, g[1:])]
    tol = cfg.tol("monotone")
    rep.check("t -> G(Gamma_t) nondecreasing", min(steps) >= -tol, min(steps), -tol)


def run_hausdorff_continuity(cfg, rep):
    S = cfg.space.build()
    if S.kind == "warped":
        raise ConfigError("hausdorff_continuity needs a space form")
    rng = _rng(cfg, 0)
    D, O = nested_pair(S, cfg.body("inner"), cfg.body("outer"), rng)
    # vertex perturbations along fixed random directions
    T = S.frame(O.vertices)
    c = _rng(cfg, 1).normal(size=(len(O.vertices), S.n))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    dirs = np.einsum("mi,mid->md", c, T)
    g0 = total_curvature_limit(O).value

    def perturbed(delta):
        P = Hull(S, S.exp_map(O.vertices, delta * dirs))
        return [delta, hull_hausdorff(O, P), abs(total_curvature_limit(P).value - g0)]

    deltas = sorted(cfg.numerics.perturbations, reverse=True)
    rows = _map(cfg, perturbed, deltas)
    rep.table("perturbations", ["delta", "hausdorff", "abs_dG"], rows)
    rep.check("vertex perturbation: Hausdorff decreases", _decreasing([r[1] for r in rows]),
              rows[-1][1], None)
    rep.check("vertex perturbation: |G - G0| decreases", _decreasing([r[2] for r in rows]),
              rows[-1][2], None)

    # level sets of the interpolant approach the parallel surface as lambda -> 0
    eps = cfg.numerics.eps_fraction * O.diameter
    base = D.interior_point()
    grid = _grid(cfg, S.n)
    h = _fd(cfg, O)
    frame = S.frame(base)
    guess = lambda ref: O.boundary_radii(base, ref @ frame) + eps  # noqa: E731
    size = (cfg.numerics.n_angles,) if S.n == 2 else (cfg.numerics.n_polar, cfg.numerics.n_azimuth)
    ref_surface = parallel_hypersurface(O, eps, grid, base, fd_step=h)
    ref_g, ref_err = level_normal_image_total(S, base, O.value_and_grad, eps, guess, size)

    def level(factor):
        fld = InterpolantField(D, O, factor * eps, check=False)
        L = extract_level_set(fld, eps**2, base=base, grid=grid, fd_step=h)
        g, err = level_normal_image_total(S, base, fld.value_and_grad, eps**2, guess, size)
        return [factor, factor * eps, hausdorff_distance(L, ref_surface), abs(g - ref_g), g, err]

    lam_rows = _map(cfg, level, sorted(cfg.numerics.lambda_factors, reverse=True))
    rep.table("lambda_sweep", ["factor", "lambda", "hausdorff", "abs_dG", "G", "G_error"], lam_rows)
    rep.value("G_parallel", ref_g)
    rep.value("eps", eps)
    rep.check("lambda sweep: Hausdorff decreases", _decreasing([r[2] for r in lam_rows]),
              lam_rows[-1][2], None)
    rep.check("lambda sweep: |G - G(Gamma_eps)| decreases", _decreasing([r[3] for r in lam_rows]),
              lam_rows[-1][3], None)


def _body_base_radius(body, base) -> float:
    if isinstance(body, Ball):
        return body.radius
    return float(body.space.distance(base, body.vertices).max())


def run_lipschitz_d2(cfg, rep):
    S = cfg.space.build()
    seps = sorted(cfg.numerics.distances, reverse=True)
    rows, ctrl = [], []
    for i, spec in enumerate(cfg.bodies):
        body = build_body(S, spec, _rng(cfg, i, 0))
        base = body.interior_point()
        outer = _body_base_radius(body, base) + 0.5
        sampler = shell_pairs(S, body, base, outer, max_sep=0.1)
        st = lipschitz_ratio_sweep(S, body.grad_distance_squared, sampler, 2 * cfg.numerics.pairs,
                                   _rng(cfg, i, 1), stable_tol=cfg.tol("stability"))
        rows.append([spec.name, st.pairs, st.max_ratio_half, st.max_ratio, st.rel_change])
        rep.check(f"{spec.name}: max ratio of grad d^2 finite and stable under doubling",
                  bool(np.isfinite(st.max_ratio)) and st.rel_change < cfg.tol("stability"),
                  st.rel_change, cfg.tol("stability"))
        sq, un = [], []
        for j, sep in enumerate(seps):
            pairs = straddle_pairs(S, body, base, sep)
            # grad d_X, extended by zero on the body
            a = lipschitz_ratio_sweep(S, lambda P: body.project(P).grad, pairs, cfg.numerics.pairs, _rng(cfg, i, 2, j))
            b = lipschitz_ratio_sweep(S, body.grad_distance_squared, pairs, cfg.numerics.pairs,
                                      _rng(cfg, i, 2, j))
            un.append(a.max_ratio)
            sq.append(b.max_ratio)
            ctrl.append([spec.name, sep, a.max_ratio, b.max_ratio])
        growth = un[-1] / un[0]
        rep.check(f"{spec.name}: unsquared grad d ratio grows across the boundary",
                  growth > cfg.tol("control_growth"), growth, cfg.tol("control_growth"))
        rep.value(f"{spec.name}_squared_straddle_growth", sq[-1] / sq[0])
    rep.table("shell", ["body", "pairs", "max_ratio_half", "max_ratio", "rel_change"], rows)
    rep.table("straddle", ["body", "separation", "ratio_grad_d", "ratio_grad_d2"], ctrl)


def run_nonexpansive_maps(cfg, rep):
    S = cfg.space.build()
    m = cfg.numerics.pairs
    tol = cfg.tol("factor")
    rows = []
    for i, spec in enumerate(cfg.bodies):
        body = build_body(S, spec, _rng(cfg, i, 0))
        base = body.interior_point()
        sampler = shell_pairs(S, body, base, _body_base_radius(body, base) + 1.0, max_sep=1.0)
        P, Q = sampler(_rng(cfg, i, 1), m)
        f = projection_expansion(body, P, Q)
        worst = float(f.max())
        rows.append([f"projection:{spec.name}", m, worst])
        rep.check(f"{spec.name}: projection is nonexpansive", worst <= 1 + tol, worst, 1 + tol)
    rng = _rng(cfg, len(cfg.bodies), 0)
    O = np.broadcast_to(S.origin, (m, S.dim))
    p = S.exp_map(O, _uniform_ball(rng, m, S.n, 2.0) @ S.frame(S.origin))
    A = S.exp_map(O, _uniform_ball(rng, m, S.n, 2.0) @ S.frame(S.origin))
    B = S.exp_map(O, _uniform_ball(rng, m, S.n, 2.0) @ S.frame(S.origin))
    f = log_map_expansion(S, p, A, B)
    worst = float(f.max())
    rows.append(["log_map", m, worst])
    rep.check("log map is nonexpansive", worst <= 1 + tol, worst, 1 + tol)
    rep.table("expansion", ["map", "pairs", "max_factor"], rows)


def _mixing_frames(S, P, rng):
    """A frame turning the radial direction halfway into a tangential one, and a random frame."""
    r = np.linalg.norm(P, axis=-1, keepdims=True)
    radial = P / r
    E = S.orthonormalize(P, np.stack([radial, rng.normal(size=P.shape), rng.normal(size=P.shape)], axis=-2))
    a = 1.0 / math.sqrt(2.0)
    rot = np.array([[a, a, 0.0], [-a, a, 0.0], [0.0, 0.0, 1.0]])[: S.n, : S.n]
    mixed = np.einsum("ij,kjd->kid", rot, E[..., : S.n, :])
    rand = S.orthonormalize(P, rng.normal(size=P.shape[:-1] + (S.n, S.n)))
    return Frame(S, P, mixed), Frame(S, P, rand)


def run_mixed_term_bound(cfg, rep):
    S = cfg.space.build()
    if S.kind != "warped":
        raise ConfigError("mixed_term_bound needs a warped space")
    X = Ball(S, S.origin, S.profile.r0)
    m = cfg.numerics.samples
    rows = []
    for j, d in enumerate(sorted(cfg.numerics.distances, reverse=True)):
        rng = _rng(cfg, j)
        u = rng.normal(size=(m, S.n))
        P = u / np.linalg.norm(u, axis=1, keepdims=True) * (S.profile.r0 + d)
        dX = X.distance_to(P)
        f1, f2 = _mixing_frames(S, P, rng)
        worst = float(np.maximum(mixed_components(f1), mixed_components(f2)).max())
        rows.append([d, float(dX.min()), float(dX.max()), worst, worst / d])
    rep.table("ratios", ["d_X", "d_X_min", "d_X_max", "max_mixed", "ratio"], rows)
    ratios = [r[4] for r in rows]
    sp = _spread(ratios)
    rep.check("max |mixed| / d_X varies by less than tol", sp < cfg.tol("spread"), sp, cfg.tol("spread"))
    # bounded evidence: the ratio settles, its increments shrink as d_X decreases
    inc = [abs(b - a) for a, b in zip(ratios, ratios[1:])]
    rep.check("max |mixed| / d_X increments shrink as d_X decreases (non-diverging)",
              len(inc) < 2 or _decreasing(inc), inc[-1] if inc else 0.0, inc[0] if inc else None)
    rng = _rng(cfg, len(rows))
    u = rng.normal(size=(m, S.n))
    P = u / np.linalg.norm(u, axis=1, keepdims=True) * (S.profile.r0 * rng.uniform(0.05, 1.0, size=(m, 1)))
    f1, f2 = _mixing_frames(S, P, rng)
    inside = float(np.maximum(mixed_components(f1), mixed_components(f2)).max())
    rep.value("max_mixed_inside", inside)
    rep.check("mixed terms vanish where K is constant", inside <= cfg.tol("inside"), inside, cfg.tol("inside"))


def run_comparison_identity(cfg, rep):
    S = cfg.space.build()
    D, O = nested_pair(S, cfg.body("inner"), cfg.body("outer"), _rng(cfg, 0))
    fld = DistanceField(D)
    r = comparison_identity_report(D, O, fld, _grid(cfg, S.n), nodes=cfg.numerics.quad_nodes,
                                   fd_step=_fd(cfg, O), refinements=cfg.numerics.refinements)
    hist = r.refinement_history
    rep.table("refinements", ["grid", "fd_step", "nodes", "lhs", "rhs", "residual"],
              [["x".join(map(str, h["grid"])), h["fd_step"], h["nodes"], h["lhs"], h["rhs"], h["residual"]]
               for h in hist])
    for k in ("lhs", "rhs_term1", "rhs_term2", "residual", "inequality_margin", "g_outer", "g_inner"):
        rep.value(k, getattr(r, k))
    tol = cfg.tol("residual")
    rep.check("|lhs - rhs| <= tol * lhs", r.relative_residual <= tol, r.relative_residual, tol)
    if len(hist) > 1:
        rep.check("residual decreases under grid doubling", hist[-1]["residual"] < hist[0]["residual"],
                  hist[-1]["residual"], hist[0]["residual"])
    if isinstance(D, Ball) and isinstance(O, Ball) and S.kind == "hyperbolic" and S.n == 3 \
            and np.allclose(D.center, O.center):
        R = S.scale
        exact = 4 * math.pi * (math.cosh(O.radius / R) ** 2 - math.cosh(D.radius / R) ** 2)
        rep.value("lhs_closed_form", exact)
        err = abs(r.lhs - exact) / exact
        rep.check("lhs matches the closed form", err <= tol, err, tol)


def run_n3_estimates(cfg, rep):
    S = cfg.space.build()
    D, O = nested_pair(S, cfg.body("inner"), cfg.body("outer"), _rng(cfg, 0))
    eps = cfg.numerics.eps_fraction * O.diameter
    base = D.interior_point()
    m = cfg.numerics.samples
    out = sample_outside(O, base, m, 1e-9 * O.diameter, eps, _rng(cfg, 1))
    btw = sample_between(D, O, base, max(1, m // 5), _rng(cfg, 2))
    floor = cfg.tol("f_floor")

    def one(factor):
        r = n3_estimates_report(InterpolantField(D, O, factor * eps, check=False), out, btw, f_floor=floor)
        return factor, r

    res = _map(cfg, one, sorted(cfg.numerics.lambda_factors, reverse=True))
    cols = ["factor", "lambda", "min_inner_product", "min_grad_ratio", "max_grad_norm_deriv",
            "max_f_outside", "max_f_between", "f_noise_floor", "max_norm_identity", "jittered",
            "unresolved_kinks"]
    rows = [[f, r.lam] + [getattr(r, c) for c in cols[2:]] for f, r in res]
    rep.table("estimates", cols, rows)
    rep.value("eps", eps)
    rep.value("samples_outside", len(out))
    rep.value("samples_between", len(btw))
    ip = min(r.min_inner_product for _, r in res)
    rep.check("<grad d_Omega, grad d_D> >= -tol", ip >= -cfg.tol("inner_product"), ip, -cfg.tol("inner_product"))
    gr = min(r.min_grad_ratio for _, r in res)
    rep.check("|grad u| >= 2 d_Omega (1 - tol)", gr >= 1 - cfg.tol("grad_ratio"), gr, 1 - cfg.tol("grad_ratio"))
    sp = _spread([r.max_grad_norm_deriv for _, r in res])
    rep.check("max ||grad u|_j| varies less than tol across lambda", sp < cfg.tol("deriv_spread"), sp,
              cfg.tol("deriv_spread"))
    rep.check("F_lambda vanishes within the noise floor", all(r.pass_f for _, r in res),
              max(max(r.max_f_outside, r.max_f_between) for _, r in res), None)


def run_gauss_bonnet_2d(cfg, rep):
    S = cfg.space.build()
    if S.n != 2 or S.kind != "hyperbolic":
        raise ConfigError("gauss_bonnet_2d needs a hyperbolic plane")
    circle = build_body(S, cfg.body("circle"))
    sph = AnalyticSphere(S, circle.center, circle.radius)
    g = total_curvature(sph.graph(_grid(cfg, 2), fd_step=_fd(cfg, circle)))
    exact = 2 * math.pi * math.cosh(circle.radius / S.scale)
    rel = abs(g - exact) / exact
    rep.check("circle: total geodesic curvature = 2 pi cosh r", rel <= cfg.tol("circle"), rel, cfg.tol("circle"))
    hull = build_body(S, cfg.body("polygon"), _rng(cfg, 0))
    lim = total_curvature_limit(hull)
    area = polygon_area(hull)
    target = 2 * math.pi + area / S.scale**2
    rel_h = abs(lim.value - target) / target
    rep.check("hull curve: G = 2 pi + |k| area", rel_h <= cfg.tol("hull"), rel_h, cfg.tol("hull"))
    rep.table("curves", ["curve", "G", "expected", "rel_error"],
              [["circle", g, exact, rel], ["hull", lim.value, target, rel_h]])
    rep.value("hull_area", area)


# ------------------------------------------------------------------ catalog
@dataclass(frozen=True)
class Entry:
    name: str
    description: str
    anchor: str
    run: Callable
    defaults: dict


def _ball(name, r, center=None):
    d = {"name": name, "kind": "ball", "radius": r}
    if center is not None:
        d["center"] = center
    return d


_HULL_OUTER = {"name": "outer", "kind": "random_hull", "count": 6, "sample_radius": 1.2}
_HULL_INNER = {"name": "inner", "kind": "random_hull", "count": 4, "sample_radius": 0.4}

CATALOG: dict[str, Entry] = {e.name: e for e in [
    Entry("sphere_euclidean", "Euclidean spheres have total curvature |S^(n-1)|",
          "equality case of G >= |S^(n-1)|", run_sphere_euclidean,
          {"space": {"kind": "euclidean", "n": 3}, "bodies": [_ball("r0.5", 0.5), _ball("r2", 2.0)],
           "numerics": {"tolerances": {"rel": 1e-6}}}),
    Entry("sphere_hyperbolic", "Hyperbolic spheres: G = |S^(n-1)| cosh^(n-1) r >= |S^(n-1)|",
          "G >= |S^(n-1)| on geodesic spheres", run_sphere_hyperbolic,
          {"bodies": [_ball("r0.5", 0.5), _ball("r1", 1.0)], "numerics": {"tolerances": {"rel": 1e-4}}}),
    Entry("nested_hulls", "Seeded nested hull pairs: G(outer) >= G(inner) >= |S^(n-1)|",
          "G(Gamma) >= G(gamma) for nested convex hypersurfaces", run_nested_hulls,
          {"bodies": [_HULL_OUTER, _HULL_INNER],
           "numerics": {"instances": 20, "tolerances": {"gap": 1e-3, "sphere_rel": 1e-3}}}),
    Entry("parallel_monotone", "G of outer parallel surfaces of a hull is nondecreasing in t",
          "t -> G(Gamma_t) is nondecreasing", run_parallel_monotone,
          {"bodies": [_HULL_OUTER], "numerics": {"tolerances": {"monotone": 1e-6, "adaptive": 1e-4}}}),
    Entry("hausdorff_continuity", "Total curvature follows Hausdorff-close perturbations and lambda -> 0",
          "G is continuous in the Hausdorff distance; level sets of u^lambda tend to Gamma_eps",
          run_hausdorff_continuity,
          {"bodies": [_HULL_OUTER, _HULL_INNER], "numerics": {}}),
    Entry("lipschitz_d2", "grad d_X^2 is Lipschitz while grad d_X jumps across the boundary",
          "d_X^2 is locally C^(1,1)", run_lipschitz_d2,
          {"bodies": [_ball("ball", 1.0), {**_HULL_OUTER, "name": "hull"}],
           "numerics": {"pairs": 10000, "distances": [1e-1, 1e-2, 1e-3],
                        "tolerances": {"stability": 0.05, "control_growth": 10.0}}}),
    Entry("nonexpansive_maps", "Nearest-point projection and log_p are 1-Lipschitz",
          "pi_X and log_p are nonexpansive when K <= 0", run_nonexpansive_maps,
          {"bodies": [_ball("ball", 1.0), {**_HULL_OUTER, "name": "hull"}],
           "numerics": {"pairs": 1000, "tolerances": {"factor": 1e-8}}}),
    Entry("mixed_term_bound", "Mixed curvature terms scale like d_X outside a constant-curvature core",
          "mixed terms are bounded by C d_X near a set where K is constant", run_mixed_term_bound,
          {"space": {"kind": "warped", "n": 3, "r0": 1.0, "c": 0.05},
           "numerics": {"samples": 500, "tolerances": {"spread": 0.25, "inside": 1e-8}}}),
    Entry("comparison_identity", "Both sides of the comparison formula between concentric spheres",
          "comparison formula G(Gamma) - G(gamma) as a volume integral", run_comparison_identity,
          {"bodies": [_ball("inner", 0.5), _ball("outer", 1.0)],
           "numerics": {"tolerances": {"residual": 5e-3}}}),
    Entry("n3_estimates", "Sign, growth and boundedness estimates for u^lambda in dimension three",
          "F_lambda vanishes, |grad u| >= 2 d_Omega, |R_ijin| <= C d_Omega", run_n3_estimates,
          {"bodies": [_HULL_OUTER, _HULL_INNER],
           "numerics": {"samples": 10000,
                        "tolerances": {"inner_product": 1e-9, "grad_ratio": 1e-9, "deriv_spread": 0.1,
                                       "f_floor": 1e-9}}}),
    Entry("gauss_bonnet_2d", "Curves in the hyperbolic plane: G = 2 pi + |k| area",
          "G >= |S^1| follows from Gauss-Bonnet", run_gauss_bonnet_2d,
          {"space": {"kind": "hyperbolic", "n": 2},
           "bodies": [_ball("circle", 1.0), {**_HULL_OUTER, "name": "polygon"}],
           "numerics": {"tolerances": {"circle": 5e-3, "hull": 5e-3}}}),
]}


def list_scenarios() -> list[tuple[str, str, str]]:
    """(name, description, anchor) for every catalog entry."""
    return [(e.name, e.description, e.anchor) for e in CATALOG.values()]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "tolerances":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def default_config(name: str, seed: int = 0) -> dict:
    if name not in CATALOG:
        raise ConfigError(f"unknown scenario {name!r}")
    d = _merge({"schema_version": SCHEMA_VERSION, "scenario": name, "numerics": {"seed": seed}},
               CATALOG[name].defaults)
    return d


def load_config(data: dict, scenario: str | None = None) -> ScenarioConfig:
    """Validate a config document, filling gaps from the scenario's defaults.

    The seed is never filled in: it must be present in ``data``.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    name = data.get("scenario", scenario)
    if scenario is not None and name != scenario:
        raise ConfigError(f"config is for {name!r}, not {scenario!r}")
    if name not in CATALOG:
        raise ConfigError(f"unknown scenario {name!r}")
    if not isinstance(data.get("numerics"), dict) or "seed" not in data["numerics"]:
        raise ConfigError("numerics.seed is mandatory")
    defaults = default_config(name)
    user_tol = data["numerics"].get("tolerances")
    merged = _merge(defaults, {**data, "scenario": name})
    if isinstance(user_tol, dict):
        unknown = sorted(set(user_tol) - set(defaults["numerics"].get("tolerances", {})))
        if unknown:
            raise ConfigError(f"unknown tolerances for {name}: {unknown}")
        merged["numerics"]["tolerances"] = {**defaults["numerics"].get("tolerances", {}), **user_tol}
    try:
        return ScenarioConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Run one catalog entry; check failures are recorded, never raised."""
    entry = CATALOG.get(config.scenario)
    if entry is None:
        raise ConfigError(f"unknown scenario {config.scenario!r}")
    _workers(config)  # a bad override is a config error even for serial scenarios
    rep = ScenarioReport(config.scenario, __version__, config.echo())
    try:
        with np.errstate(over="ignore"):
            rep.timed(entry.run, config, rep)
    except ConfigError:
        raise
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError, ValueError, ZeroDivisionError) as exc:
        raise NumericalFailure(f"{config.scenario}: {type(exc).__name__}: {exc}") from exc
    return rep
