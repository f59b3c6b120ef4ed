"""Compiled nearest-point search over the faces of a hull.

Faces are padded to a common vertex count.  For hyperbolic hulls the foot on
a face span is the normalized Lorentz-orthogonal projection; for Euclidean
hulls it is the affine orthogonal projection.  A face is admissible when its
foot has nonnegative weights on the face vertices.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def project_points(P, V, M, m, hyperbolic, R, A, b, tol_in, tol_face):
    N, dim = P.shape
    F = V.shape[0]
    foot = np.empty((N, dim))
    dist = np.empty(N)
    face = np.empty(N, dtype=np.int64)
    pw = np.empty(dim)
    coef = np.empty(V.shape[1])
    for i in range(N):
        p = P[i]
        scale = 0.0
        for d in range(dim):
            scale = max(scale, abs(p[d]))
        scale += 1.0
        # inside test against the facet functionals
        inside = True
        for f in range(A.shape[0]):
            s = 0.0
            if hyperbolic:
                for d in range(1, dim):
                    s += A[f, d - 1] * p[d]
                s += b[f] * p[0]
            else:
                for d in range(dim):
                    s += A[f, d] * p[d]
                s += b[f]
            if s > tol_in * scale:
                inside = False
                break
        if inside:
            for d in range(dim):
                foot[i, d] = p[d]
            dist[i] = 0.0
            face[i] = -1
            continue
        best = np.inf
        best_f = -1
        for f in range(F):
            mf = m[f]
            ok = True
            if hyperbolic:
                for a in range(mf):
                    s = 0.0
                    for d in range(dim):
                        s += M[f, a, d] * p[d]
                    if s < -tol_face * scale:
                        ok = False
                        break
                    coef[a] = max(s, 0.0)
                if not ok:
                    continue
                for d in range(dim):
                    s = 0.0
                    for a in range(mf):
                        s += coef[a] * V[f, a, d]
                    pw[d] = s
                nrm = pw[0] * pw[0]
                for d in range(1, dim):
                    nrm -= pw[d] * pw[d]
                if nrm <= 0.0:
                    continue
                c = R / math.sqrt(nrm)
                for d in range(dim):
                    pw[d] *= c
                ch = -(pw[0] - p[0]) * (pw[0] - p[0])
                for d in range(1, dim):
                    ch += (pw[d] - p[d]) * (pw[d] - p[d])
                dd = max(ch, 0.0)  # squared Minkowski chord, monotone in the distance
            else:
                tot = 0.0
                for a in range(mf - 1):
                    s = 0.0
                    for d in range(dim):
                        s += M[f, a, d] * (p[d] - V[f, 0, d])
                    coef[a + 1] = s
                    tot += s
                coef[0] = 1.0 - tot
                for a in range(mf):
                    if coef[a] < -tol_face:
                        ok = False
                        break
                if not ok:
                    continue
                dd = 0.0
                for d in range(dim):
                    s = V[f, 0, d]
                    for a in range(1, mf):
                        s += coef[a] * (V[f, a, d] - V[f, 0, d])
                    pw[d] = s
                    dd += (s - p[d]) * (s - p[d])
            if dd < best:
                best = dd
                best_f = f
                for d in range(dim):
                    foot[i, d] = pw[d]
        if hyperbolic:
            dist[i] = 2.0 * R * math.asinh(math.sqrt(best) / (2.0 * R))
        else:
            dist[i] = math.sqrt(best)
        face[i] = best_f
    return foot, dist, face
