"""Compiled RK4 kernels for geodesics and parallel transport in the warped chart.

The chart metric is g = P + psi(r)^2 (I - P), with P the radial projector and
psi = phi / r.  The geodesic acceleration reduces to

    x'' = -(b'/b) sigma v_perp - |v_perp|^2 ((1 - b)/r - b'/2) u,

with b = psi^2, u = x/r, sigma = <u, v> and v_perp = v - sigma u.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True, error_model="numpy")
def _chart_terms(r, r0, c):
    if r < 0.05:
        r2 = r * r
        psi = 1.0 + r2 / 6.0 + r2 * r2 / 120.0 + r2 * r2 * r2 / 5040.0
        dpsi = r / 3.0 + r * r2 / 30.0 + r * r2 * r2 / 840.0
        cr = -(r / 3.0 + 2.0 * r * r2 / 45.0 + r * r2 * r2 / 315.0)
        return psi, dpsi, cr
    s = r - r0
    if s < 0.0:
        s = 0.0
    e = math.exp(r)
    phi = 0.5 * (e - 1.0 / e) + c * s * s * s
    dphi = 0.5 * (e + 1.0 / e) + 3.0 * c * s * s
    psi = phi / r
    dpsi = (r * dphi - phi) / (r * r)
    cr = (1.0 - psi * psi) / r
    return psi, dpsi, cr


@njit(cache=True, fastmath=True, error_model="numpy")
def _accel(x, v, r0, c, out):
    n = x.shape[0]
    r = 0.0
    for i in range(n):
        r += x[i] * x[i]
    r = math.sqrt(r)
    if r == 0.0:
        for i in range(n):
            out[i] = 0.0
        return
    psi, dpsi, cr = _chart_terms(r, r0, c)
    b = psi * psi
    db = 2.0 * psi * dpsi
    sig = 0.0
    for i in range(n):
        sig += x[i] / r * v[i]
    vp2 = 0.0
    for i in range(n):
        vp = v[i] - sig * x[i] / r
        vp2 += vp * vp
    f = vp2 * (cr - 0.5 * db)
    for i in range(n):
        u = x[i] / r
        out[i] = -(db / b) * sig * (v[i] - sig * u) - f * u


@njit(cache=True, fastmath=True, error_model="numpy")
def _rhs(x, v, W, r0, c, dx, dv, dW, tmp_a, tmp_b, tmp_s):
    n = x.shape[0]
    for i in range(n):
        dx[i] = v[i]
    _accel(x, v, r0, c, dv)
    for a in range(W.shape[0]):
        for i in range(n):
            tmp_s[i] = v[i] + W[a, i]
        _accel(x, tmp_s, r0, c, tmp_a)
        _accel(x, W[a], r0, c, tmp_b)
        for i in range(n):
            dW[a, i] = 0.5 * (tmp_a[i] - dv[i] - tmp_b[i])


@njit(cache=True, fastmath=True, error_model="numpy")
def integrate(X, V, W, r0, c, max_step):
    """Flow (x, v, W) from t=0 to t=1; W holds vectors transported along."""
    N, n = X.shape
    m = W.shape[1]
    Xo = X.copy()
    Vo = V.copy()
    Wo = W.copy()
    k1x = np.empty(n); k2x = np.empty(n); k3x = np.empty(n); k4x = np.empty(n)
    k1v = np.empty(n); k2v = np.empty(n); k3v = np.empty(n); k4v = np.empty(n)
    k1w = np.empty((m, n)); k2w = np.empty((m, n)); k3w = np.empty((m, n)); k4w = np.empty((m, n))
    xs = np.empty(n); vs = np.empty(n); ws = np.empty((m, n))
    ta = np.empty(n); tb = np.empty(n); tsum = np.empty(n)
    for p in range(N):
        x = Xo[p]
        v = Vo[p]
        w = Wo[p]
        r = math.sqrt(np.sum(x * x))
        psi, _, _ = _chart_terms(r, r0, c)
        sig = 0.0
        if r > 0.0:
            sig = np.sum(x * v) / r
        vv = np.sum(v * v)
        length = math.sqrt(max(sig * sig + psi * psi * (vv - sig * sig), 0.0))
        steps = max(1, int(math.ceil(length / max_step)))
        dt = 1.0 / steps
        for _ in range(steps):
            _rhs(x, v, w, r0, c, k1x, k1v, k1w, ta, tb, tsum)
            for i in range(n):
                xs[i] = x[i] + 0.5 * dt * k1x[i]
                vs[i] = v[i] + 0.5 * dt * k1v[i]
            for a in range(m):
                for i in range(n):
                    ws[a, i] = w[a, i] + 0.5 * dt * k1w[a, i]
            _rhs(xs, vs, ws, r0, c, k2x, k2v, k2w, ta, tb, tsum)
            for i in range(n):
                xs[i] = x[i] + 0.5 * dt * k2x[i]
                vs[i] = v[i] + 0.5 * dt * k2v[i]
            for a in range(m):
                for i in range(n):
                    ws[a, i] = w[a, i] + 0.5 * dt * k2w[a, i]
            _rhs(xs, vs, ws, r0, c, k3x, k3v, k3w, ta, tb, tsum)
            for i in range(n):
                xs[i] = x[i] + dt * k3x[i]
                vs[i] = v[i] + dt * k3v[i]
            for a in range(m):
                for i in range(n):
                    ws[a, i] = w[a, i] + dt * k3w[a, i]
            _rhs(xs, vs, ws, r0, c, k4x, k4v, k4w, ta, tb, tsum)
            for i in range(n):
                x[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])
                v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            for a in range(m):
                for i in range(n):
                    w[a, i] += dt / 6.0 * (k1w[a, i] + 2.0 * k2w[a, i] + 2.0 * k3w[a, i] + k4w[a, i])
    return Xo, Vo, Wo
