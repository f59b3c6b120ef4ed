"""Ambient Cartan-Hadamard model spaces.

Three geometries are supported, all with the same batch-friendly surface:

* ``euclidean``: points and tangent vectors are arrays in R^n.
* ``hyperbolic``: constant curvature k < 0 in the hyperboloid model.  Points
  live in R^{n+1} with the Lorentz form <x, y> = -x0*y0 + sum(xi*yi) and
  satisfy <x, x> = 1/k, x0 > 0.  Tangent vectors are ambient vectors
  Lorentz-orthogonal to their base point.
* ``warped``: the rotationally symmetric metric dr^2 + phi(r)^2 g_S, written in
  the Cartesian-like chart x = r * theta of R^n.  The profile is sinh(r) up to
  r0 and sinh(r) + c (r - r0)^3 beyond, so K == -1 exactly on {r <= r0}.

Every function accepts arrays with arbitrary leading batch axes; the last axis
holds coordinates.  The curvature tensor uses the convention in which
``R[i, j, i, j]`` is the sectional curvature of span(e_i, e_j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _warped_ode

__all__ = [
    "ConvergenceError",
    "WarpProfile",
    "ModelSpace",
    "Frame",
    "riemann_component",
    "curvature_operator_matrix",
    "mixed_components",
    "unit_sphere_volume",
    "wedge_pairs",
]

GEODESIC_STEP = 1e-3
SHOOTING_TOL = 1e-10
SHOOTING_MAXITER = 100


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


def _sinhc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(xs) / xs)


def _ldot(x, y):
    """Lorentz form along the last axis."""
    return np.sum(x * y, axis=-1) - 2.0 * x[..., 0] * y[..., 0]


def unit_sphere_volume(n: int) -> float:
    """Volume of the unit sphere S^{n-1} in R^n, e.g. 2*pi for n=2."""
    if n < 2:
        raise ValueError(f"unit sphere volume needs n >= 2, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def wedge_pairs(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))


@dataclass(frozen=True)
class WarpProfile:
    """phi(r) = sinh(r) + c * max(r - r0, 0)**3."""

    r0: float = 1.0
    c: float = 0.05

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("warp profile needs r0 > 0")
        if self.c < 0:
            # phi'' would turn negative just past r0: not Cartan-Hadamard
            raise ValueError("warp profile needs c >= 0 (phi'' >= 0)")

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        s = np.maximum(r - self.r0, 0.0)
        return np.sinh(r) + self.c * s**3

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        s = np.maximum(r - self.r0, 0.0)
        return np.cosh(r) + 3.0 * self.c * s**2

    def ddphi(self, r):
        r = np.asarray(r, dtype=float)
        s = np.maximum(r - self.r0, 0.0)
        return np.sinh(r) + 6.0 * self.c * s

    def radial_curvature(self, r):
        """Sectional curvature of planes containing the radial direction."""
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, -1.0)
        far = r > self.r0
        if np.any(far):
            rf = r[far]
            out[far] = -self.ddphi(rf) / self.phi(rf)
        return out

    def tangential_curvature(self, r):
        """Sectional curvature of planes orthogonal to the radial direction."""
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, -1.0)
        far = r > self.r0
        if np.any(far):
            rf = r[far]
            out[far] = (1.0 - self.dphi(rf) ** 2) / self.phi(rf) ** 2
        return out

    def chart_terms(self, r):
        """psi = phi/r, psi' and (1 - psi^2)/r, series-expanded near r = 0."""
        r = np.asarray(r, dtype=float)
        small = r < 0.05
        rs = np.where(small, 1.0, r)
        psi = self.phi(rs) / rs
        dpsi = (rs * self.dphi(rs) - self.phi(rs)) / rs**2
        cr = (1.0 - psi**2) / rs
        r2 = r * r
        psi_s = 1.0 + r2 / 6.0 + r2 * r2 / 120.0 + r2**3 / 5040.0
        dpsi_s = r / 3.0 + r * r2 / 30.0 + r * r2 * r2 / 840.0
        cr_s = -(r / 3.0 + 2.0 * r * r2 / 45.0 + r * r2 * r2 / 315.0)
        return (np.where(small, psi_s, psi), np.where(small, dpsi_s, dpsi),
                np.where(small, cr_s, cr))


@dataclass(frozen=True)
class ModelSpace:
    kind: str
    n: int
    k: float = 0.0
    profile: WarpProfile | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "hyperbolic", "warped"):
            raise ValueError(f"unknown model space kind {self.kind!r}")
        if not 2 <= self.n <= 8:
            raise ValueError(f"dimension must satisfy 2 <= n <= 8, got {self.n}")
        if self.kind == "euclidean" and self.k != 0.0:
            raise ValueError("Euclidean space has k = 0")
        if self.kind == "hyperbolic" and not self.k < 0:
            raise ValueError("hyperbolic space needs k < 0")
        if self.kind == "warped" and self.profile is None:
            raise ValueError("warped space needs a profile")

    @classmethod
    def euclidean(cls, n: int) -> "ModelSpace":
        return cls("euclidean", n)

    @classmethod
    def hyperbolic(cls, n: int, k: float = -1.0) -> "ModelSpace":
        return cls("hyperbolic", n, float(k))

    @classmethod
    def warped(cls, n: int, r0: float = 1.0, c: float = 0.05) -> "ModelSpace":
        return cls("warped", n, 0.0, WarpProfile(float(r0), float(c)))

    # ------------------------------------------------------------------ basics
    @property
    def dim(self) -> int:
        """Length of the coordinate arrays."""
        return self.n + 1 if self.kind == "hyperbolic" else self.n

    @property
    def scale(self) -> float:
        """Curvature radius 1/sqrt(-k) of the hyperboloid."""
        return 1.0 / math.sqrt(-self.k)

    @property
    def origin(self) -> np.ndarray:
        o = np.zeros(self.dim)
        if self.kind == "hyperbolic":
            o[0] = self.scale
        return o

    def origin_frame(self) -> np.ndarray:
        """Orthonormal frame at the origin, shape (n, dim)."""
        if self.kind == "hyperbolic":
            return np.eye(self.n + 1)[1:]
        return np.eye(self.n)

    def sn(self, s):
        """Polar area factor: |S^{n-1}| sn(s)^{n-1} is the area of the sphere of radius s
        about the origin (any centre for constant curvature)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "euclidean":
            return s
        if self.kind == "hyperbolic":
            return self.scale * np.sinh(s / self.scale)
        return self.profile.phi(s)

    def inner(self, p, v, w):
        if self.kind == "euclidean":
            return np.sum(v * w, axis=-1)
        if self.kind == "hyperbolic":
            return _ldot(v, w)
        u, _ = self._radial_unit(p)
        psi, _, _ = self.profile.chart_terms(np.linalg.norm(p, axis=-1))
        sv = np.sum(u * v, axis=-1)
        sw = np.sum(u * w, axis=-1)
        return sv * sw + psi**2 * (np.sum(v * w, axis=-1) - sv * sw)

    def norm(self, p, v):
        return np.sqrt(np.maximum(self.inner(p, v, v), 0.0))

    def _radial_unit(self, x):
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        return x / safe[..., None] * (r > 0)[..., None], r

    def project_point(self, x):
        """Renormalize onto the hyperboloid sheet; identity elsewhere."""
        x = np.array(x, dtype=float)
        if self.kind == "hyperbolic":
            x[..., 0] = np.sqrt(self.scale**2 + np.sum(x[..., 1:] ** 2, axis=-1))
        return x

    def project_tangent(self, p, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "hyperbolic":
            return v - (self.k * _ldot(v, p))[..., None] * p
        return v

    def check_tangent(self, p, v, tol: float = 1e-8):
        if self.kind != "hyperbolic":
            return
        scale = 1.0 + np.abs(p).max() * (1.0 + np.abs(v).max())
        if np.max(np.abs(_ldot(v, p))) > tol * scale:
            raise ValueError("tangent vector is not based at the given point")

    def lift(self, coords):
        """Point from spatial coordinates (x1..xn); adds x0 on the hyperboloid."""
        coords = np.asarray(coords, dtype=float)
        if self.kind == "hyperbolic":
            x0 = np.sqrt(self.scale**2 + np.sum(coords**2, axis=-1))
            return np.concatenate([x0[..., None], coords], axis=-1)
        return coords.copy()

    def from_origin(self, v_ref):
        """exp at the origin of a reference vector given in the origin frame."""
        v_ref = np.asarray(v_ref, dtype=float)
        return self.exp_map(np.broadcast_to(self.origin, v_ref.shape[:-1] + (self.dim,)),
                            v_ref @ self.origin_frame())

    # ------------------------------------------------------------ exp and log
    def exp_map(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == "euclidean":
            return p + v
        if self.kind == "hyperbolic":
            self.check_tangent(p, v)
            nv = self.norm(p, v)
            th = nv / self.scale
            out = np.cosh(th)[..., None] * p + _sinhc(th)[..., None] * v
            return self.project_point(out)
        return self._warped_exp(p, v)[0]

    def log_map(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kind == "euclidean":
            return q - p
        if self.kind == "hyperbolic":
            R = self.scale
            dq = q - p
            chord2 = np.maximum(_ldot(dq, dq), 0.0)
            th = 2.0 * np.arcsinh(np.sqrt(chord2) / (2.0 * R))
            w = dq - (chord2 / (2.0 * R * R))[..., None] * p
            return self.project_tangent(p, w / _sinhc(th)[..., None])
        return self._warped_log(p, q)

    def distance(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kind == "euclidean":
            return np.linalg.norm(q - p, axis=-1)
        if self.kind == "hyperbolic":
            dq = q - p
            chord2 = np.maximum(_ldot(dq, dq), 0.0)
            return 2.0 * self.scale * np.arcsinh(np.sqrt(chord2) / (2.0 * self.scale))
        return self.norm(p, self.log_map(p, q))

    def parallel_transport(self, p, q, v):
        """Transport v from T_p to T_q along the geodesic from p to q."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == "euclidean":
            return np.array(v, dtype=float)
        if self.kind == "hyperbolic":
            stacked = v.ndim > p.ndim
            pe = p[..., None, :] if stacked else p
            qe = q[..., None, :] if stacked else q
            self.check_tangent(pe, v)
            R = self.scale
            ph, qh = pe / R, qe / R
            coef = _ldot(qh, v) / (1.0 - _ldot(ph, qh))
            return self.project_tangent(qe, v + coef[..., None] * (ph + qh))
        return self._warped_transport(p, q, v)

    def exp_with_velocity(self, p, v):
        """Endpoint of the geodesic t -> exp_p(t v) at t = 1 and its velocity there."""
        if self.kind == "warped":
            q, vq, _ = self._warped_exp(p, v)
            return q, vq
        q = self.exp_map(p, v)
        return q, self.parallel_transport(p, q, v)

    def transport_along(self, p, v, w):
        """Parallel transport of w (or a stack of vectors) along t -> exp_p(t v), t in [0, 1]."""
        if self.kind == "warped":
            w = np.asarray(w, dtype=float)
            stacked = w.ndim > np.ndim(p)
            _, _, W = self._warped_exp(p, v, carry=w if stacked else w[..., None, :])
            return W if stacked else W[..., 0, :]
        return self.parallel_transport(p, self.exp_map(p, v), w)

    # ----------------------------------------------------------------- frames
    def orthonormalize(self, p, vectors):
        """Gram-Schmidt in the metric at p; vectors has shape (..., m, dim)."""
        vecs = np.array(vectors, dtype=float)
        pe = np.asarray(p, dtype=float)[..., None, :]
        vecs = self.project_tangent(pe, vecs)
        m = vecs.shape[-2]
        out = np.empty_like(vecs)
        for i in range(m):
            w = vecs[..., i, :]
            for j in range(i):
                e = out[..., j, :]
                w = w - self.inner(p, w, e)[..., None] * e
            nw = self.norm(p, w)
            if np.any(nw < 1e-12):
                raise ValueError("degenerate vectors in orthonormalization")
            out[..., i, :] = w / nw[..., None]
        return out

    def frame(self, p) -> np.ndarray:
        """A smooth orthonormal frame at p, shape (..., n, dim)."""
        p = np.asarray(p, dtype=float)
        if self.kind == "euclidean":
            return np.broadcast_to(np.eye(self.n), p.shape[:-1] + (self.n, self.n)).copy()
        if self.kind == "hyperbolic":
            o = np.broadcast_to(self.origin, p.shape)
            e = np.broadcast_to(self.origin_frame(), p.shape[:-1] + (self.n, self.dim))
            return self.parallel_transport(o, p, e)
        e = np.broadcast_to(np.eye(self.n), p.shape[:-1] + (self.n, self.n))
        return self.orthonormalize(p, e)

    # -------------------------------------------------------------- curvature
    def riemann_tensor(self, p, vectors):
        """R(e_a, e_b, e_c, e_d) for the given tangent vectors at p.

        ``vectors`` has shape (..., m, dim); the result has shape (..., m, m, m, m).
        R[a, b, a, b] = K(e_a, e_b) * (|e_a|^2 |e_b|^2 - <e_a, e_b>^2).
        """
        p = np.asarray(p, dtype=float)
        E = np.asarray(vectors, dtype=float)
        pe = p[..., None, None, :]
        G = self.inner(pe, E[..., :, None, :], E[..., None, :, :])
        base = (np.einsum("...ac,...bd->...abcd", G, G)
                - np.einsum("...ad,...bc->...abcd", G, G))
        if self.kind != "warped":
            return self.k * base
        x = p
        u, r = self._radial_unit(x)
        kr = self.profile.radial_curvature(r)
        kt = self.profile.tangential_curvature(r)
        psi, _, _ = self.profile.chart_terms(r)
        s = np.einsum("...ad,...d->...a", E, u)
        Eperp = E - s[..., None] * u[..., None, :]
        P = psi[..., None, None] ** 2 * np.einsum("...ad,...bd->...ab", Eperp, Eperp)
        mix = (np.einsum("...a,...c,...bd->...abcd", s, s, P)
               - np.einsum("...a,...d,...bc->...abcd", s, s, P)
               - np.einsum("...b,...c,...ad->...abcd", s, s, P)
               + np.einsum("...b,...d,...ac->...abcd", s, s, P))
        return (kt[..., None, None, None, None] * base
                + (kr - kt)[..., None, None, None, None] * mix)

    def sectional_curvature(self, p, u, v):
        p = np.asarray(p, dtype=float)
        E = np.stack([np.asarray(u, float), np.asarray(v, float)], axis=-2)
        R = self.riemann_tensor(p, E)
        area2 = (self.inner(p, E[..., 0, :], E[..., 0, :]) * self.inner(p, E[..., 1, :], E[..., 1, :])
                 - self.inner(p, E[..., 0, :], E[..., 1, :]) ** 2)
        if np.any(area2 <= 1e-14):
            raise ValueError("degenerate plane: u and v are linearly dependent")
        return R[..., 0, 1, 0, 1] / area2

    # ------------------------------------------------------- warped geodesics
    def _accel(self, x, v):
        """Geodesic acceleration in the warped chart."""
        u, r = self._radial_unit(x)
        psi, dpsi, cr = self.profile.chart_terms(r)
        b = psi**2
        db = 2.0 * psi * dpsi
        sig = np.sum(u * v, axis=-1)
        vperp = v - sig[..., None] * u
        vp2 = np.sum(vperp * vperp, axis=-1)
        return (-(db / b * sig)[..., None] * vperp
                - (vp2 * (cr - 0.5 * db))[..., None] * u)

    def _connection(self, x, v, w):
        """Bilinear form B(v, w) with dw/dt = B(v, w) for parallel fields."""
        return 0.5 * (self._accel(x, v + w) - self._accel(x, v) - self._accel(x, w))

    def _warped_exp(self, p, v, carry=None):
        """RK4 geodesic flow with initial velocity v over t in [0, 1].

        ``carry`` is an optional stack (..., m, n) of vectors transported along.
        Returns (endpoint, final velocity, transported carry).
        """
        shape = np.broadcast_shapes(np.shape(p), np.shape(v))
        X = np.ascontiguousarray(np.broadcast_to(p, shape), dtype=float).reshape(-1, self.n)
        V = np.ascontiguousarray(np.broadcast_to(v, shape), dtype=float).reshape(-1, self.n)
        if carry is None:
            W = np.zeros((X.shape[0], 0, self.n))
        else:
            carry = np.asarray(carry, dtype=float)
            W = np.ascontiguousarray(np.broadcast_to(carry, shape[:-1] + carry.shape[-2:]))
            W = W.reshape(X.shape[0], carry.shape[-2], self.n)
        Xe, Ve, We = _warped_ode.integrate(X, V, W, self.profile.r0, self.profile.c, GEODESIC_STEP)
        Wout = None if carry is None else We.reshape(shape[:-1] + carry.shape[-2:])
        return Xe.reshape(shape), Ve.reshape(shape), Wout

    def _warped_log(self, p, q):
        """Shooting with damped Newton on the endpoint residual."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        shape = np.broadcast_shapes(p.shape, q.shape)
        P = np.broadcast_to(p, shape).reshape(-1, self.n)
        Q = np.broadcast_to(q, shape).reshape(-1, self.n)
        V = self._warped_log_flat(P, Q)
        return V.reshape(shape)

    def _warped_log_flat(self, P, Q):
        n = self.n
        V = np.zeros_like(P)
        at_origin = np.linalg.norm(P, axis=-1) == 0.0
        V[at_origin] = Q[at_origin]
        todo = ~at_origin & (np.linalg.norm(Q - P, axis=-1) > 0)
        if not np.any(todo):
            return V
        Pt, Qt = P[todo], Q[todo]
        v = self._hyperbolic_guess(Pt, Qt)
        res = self._warped_exp(Pt, v)[0] - Qt
        rn = np.linalg.norm(res, axis=-1)
        delta = 1e-7
        for _ in range(SHOOTING_MAXITER):
            active = rn > SHOOTING_TOL
            if not np.any(active):
                break
            Pa, va, ra = Pt[active], v[active], res[active]
            eps = delta * (1.0 + np.linalg.norm(va, axis=-1))
            pert = va[:, None, :] + eps[:, None, None] * np.eye(n)[None]
            ends = self._warped_exp(np.repeat(Pa[:, None, :], n, axis=1), pert)[0]
            base = ra + Qt[active]
            J = (ends - base[:, None, :]).transpose(0, 2, 1) / eps[:, None, None]
            step = np.linalg.solve(J, -ra[..., None])[..., 0]
            # trust region: never more than double the current shot
            sn = np.linalg.norm(step, axis=-1)
            cap = 1.0 + 2.0 * np.linalg.norm(va, axis=-1)
            step *= np.minimum(1.0, cap / np.maximum(sn, 1e-300))[:, None]
            t = np.ones(len(va))
            new_v = va + step
            new_r = self._warped_exp(Pa, new_v)[0] - Qt[active]
            new_n = np.linalg.norm(new_r, axis=-1)
            for _half in range(30):
                worse = ~(new_n <= (1.0 - 1e-4 * t) * rn[active])
                if not np.any(worse):
                    break
                t[worse] *= 0.5
                new_v[worse] = va[worse] + t[worse, None] * step[worse]
                new_r[worse] = self._warped_exp(Pa[worse], new_v[worse])[0] - Qt[active][worse]
                new_n[worse] = np.linalg.norm(new_r[worse], axis=-1)
            v[active] = new_v
            res[active] = new_r
            rn[active] = new_n
        worst = float(np.max(rn))
        if worst > SHOOTING_TOL:
            raise ConvergenceError("warped log map shooting did not converge", worst)
        V[todo] = v
        return V

    def _hyperbolic_guess(self, P, Q):
        """Initial shot from the k=-1 space sharing the polar structure.

        The chart is isometric to hyperbolic space on {r <= r0}, so this guess is
        exact there and close beyond.
        """
        def lift(x):
            r = np.linalg.norm(x, axis=-1)
            return np.concatenate([np.cosh(r)[:, None], _sinhc(r)[:, None] * x], axis=-1)

        H = ModelSpace.hyperbolic(self.n)
        w = H.log_map(lift(P), lift(Q))
        u, r = self._radial_unit(P)
        dr = np.concatenate([np.sinh(r)[:, None], np.cosh(r)[:, None] * u], axis=-1)
        sig = _ldot(w, dr) * (r > 0)
        t = (w - sig[:, None] * dr)[:, 1:]
        return sig[:, None] * u + t / _sinhc(r)[:, None]

    def _warped_transport(self, p, q, v):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        stacked = v.ndim > p.ndim
        W = v if stacked else v[..., None, :]
        vel = self.log_map(p, q)
        W = np.broadcast_to(W, vel.shape[:-1] + W.shape[-2:])
        _, _, Wq = self._warped_exp(p, vel, carry=W)
        return Wq if stacked else Wq[..., 0, :]


@dataclass(frozen=True)
class Frame:
    """Orthonormal vectors e_1..e_m at a base point (m = n for a full frame)."""

    space: ModelSpace
    base: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        G = self.gram()
        if not np.allclose(G, np.eye(G.shape[-1]), atol=1e-10, rtol=0):
            raise ValueError("frame vectors are not orthonormal")

    def gram(self):
        b = self.base[..., None, None, :]
        return self.space.inner(b, self.vectors[..., :, None, :], self.vectors[..., None, :, :])


def riemann_component(frame: Frame, i: int, j: int, k: int, l: int):
    m = frame.vectors.shape[-2]
    for idx in (i, j, k, l):
        if not 0 <= idx < m:
            raise IndexError(f"frame index {idx} out of range for {m} vectors")
    R = frame.space.riemann_tensor(frame.base, frame.vectors)
    return R[..., i, j, k, l]


def curvature_operator_matrix(frame: Frame) -> np.ndarray:
    """Matrix of the curvature operator on wedge pairs (i < j), entries R_ijkl."""
    R = frame.space.riemann_tensor(frame.base, frame.vectors)
    pairs = wedge_pairs(frame.vectors.shape[-2])
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    return R[..., a[:, None], b[:, None], a[None, :], b[None, :]]


def mixed_components(frame: Frame) -> np.ndarray:
    """Largest |R_ijkl| with {i, j} != {k, l} for each frame in the batch."""
    M = curvature_operator_matrix(frame)
    off = M - np.einsum("...ii->...i", M)[..., None] * np.eye(M.shape[-1])
    return np.max(np.abs(off), axis=(-2, -1))
