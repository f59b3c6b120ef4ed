import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gklab.model_space import (Frame, ModelSpace, curvature_operator_matrix,
                               mixed_components, riemann_component, unit_sphere_volume, wedge_pairs)

H3 = ModelSpace.hyperbolic(3)
W3 = ModelSpace.warped(3, r0=1.0, c=0.05)
coords = arrays(np.float64, 3, elements=st.floats(-1.5, 1.5))


def _lorentz(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def test_unit_sphere_volume_closed_forms():
    assert unit_sphere_volume(2) == pytest.approx(2 * math.pi)
    assert unit_sphere_volume(3) == pytest.approx(4 * math.pi)
    assert unit_sphere_volume(4) == pytest.approx(2 * math.pi**2)


def test_wedge_pairs_order():
    assert wedge_pairs(3) == [(0, 1), (0, 2), (1, 2)]


@pytest.mark.parametrize("bad", [dict(kind="euclidean", n=1), dict(kind="hyperbolic", n=3, k=0.5),
                                 dict(kind="spherical", n=3)])
def test_invalid_spaces(bad):
    with pytest.raises(ValueError):
        ModelSpace(**bad)


@settings(max_examples=60, deadline=None)
@given(coords, coords)
def test_hyperbolic_exp_log_roundtrip(a, b):
    p, q = H3.lift(a), H3.lift(b)
    v = H3.log_map(p, q)
    assert abs(_lorentz(v, p)) < 1e-9 * (1 + np.abs(p).max() ** 2)
    assert np.allclose(H3.exp_map(p, v), q, atol=1e-8 * (1 + np.abs(q).max()))
    # arccosh form of the distance, independent of the chord form used inside
    d = math.acosh(max(1.0, -_lorentz(p, q)))
    assert H3.distance(p, q) == pytest.approx(d, abs=1e-7)
    assert H3.norm(p, v) == pytest.approx(d, abs=1e-7)


def test_hyperbolic_scale_changes_distances():
    S = ModelSpace.hyperbolic(2, k=-4.0)
    p = S.origin
    q = S.exp_map(p, np.array([0.0, 0.3, 0.0]))
    assert S.distance(p, q) == pytest.approx(0.3)
    assert _lorentz(q, q) == pytest.approx(-0.25)


@settings(max_examples=40, deadline=None)
@given(coords, coords, coords, coords)
def test_parallel_transport_is_an_isometry(a, b, c1, c2):
    p, q = H3.lift(a), H3.lift(b)
    F = H3.frame(p)
    v, w = c1 @ F, c2 @ F
    tv, tw = H3.parallel_transport(p, q, v), H3.parallel_transport(p, q, w)
    assert H3.inner(q, tv, tw) == pytest.approx(H3.inner(p, v, w), abs=1e-8)
    assert abs(_lorentz(tv, q)) < 1e-8 * (1 + np.abs(q).max() ** 2)


def test_transport_along_the_geodesic_keeps_the_velocity():
    p = H3.lift(np.array([0.2, -0.4, 0.1]))
    q = H3.lift(np.array([-0.5, 0.3, 0.7]))
    v = H3.log_map(p, q)
    assert np.allclose(H3.parallel_transport(p, q, v), -H3.log_map(q, p), atol=1e-9)


@pytest.mark.parametrize("S", [ModelSpace.euclidean(3), H3, ModelSpace.hyperbolic(2, -2.0)])
def test_constant_curvature_tensor(S):
    p = S.from_origin(np.full(S.n, 0.3))
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=(2, S.n)) @ S.frame(p)
    assert S.sectional_curvature(p, u, v) == pytest.approx(S.k, abs=1e-10)
    M = curvature_operator_matrix(Frame(S, p, S.frame(p)))
    assert np.allclose(M, S.k * np.eye(len(wedge_pairs(S.n))), atol=1e-12)


def _phi_numeric(r, r0=1.0, c=0.05):
    return math.sinh(r) + c * max(r - r0, 0.0) ** 3


def _curvatures_fd(r, h=1e-4):
    f = _phi_numeric
    d1 = (f(r + h) - f(r - h)) / (2 * h)
    d2 = (f(r + h) - 2 * f(r) + f(r - h)) / h**2
    return -d2 / f(r), (1 - d1**2) / f(r) ** 2


@pytest.mark.parametrize("r", [0.4, 0.9, 1.1, 1.3, 1.6])
def test_warped_radial_and_tangential_curvature(r):
    u = np.array([0.6, 0.0, 0.8])
    p = r * u
    E = W3.orthonormalize(p, np.array([u, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    kr, kt = _curvatures_fd(r)
    assert W3.sectional_curvature(p, E[0], E[1]) == pytest.approx(kr, abs=1e-6)
    assert W3.sectional_curvature(p, E[1], E[2]) == pytest.approx(kt, abs=1e-6)


def test_warped_tensor_symmetries():
    rng = np.random.default_rng(3)
    p = np.array([0.9, 0.5, -0.4])
    E = W3.orthonormalize(p, rng.normal(size=(3, 3)))
    R = W3.riemann_tensor(p, E)
    assert np.allclose(R, -R.transpose(1, 0, 2, 3))
    assert np.allclose(R, R.transpose(2, 3, 0, 1))
    bianchi = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
    assert np.abs(bianchi).max() < 1e-12


def test_mixed_components_vanish_in_space_forms_and_inside_the_core():
    rng = np.random.default_rng(1)
    P = H3.from_origin(rng.normal(size=(20, 3)))
    E = H3.orthonormalize(P, rng.normal(size=(20, 3, 4)))
    assert mixed_components(Frame(H3, P, E)).max() < 1e-10
    Q = rng.normal(size=(20, 3))
    Q *= 0.9 / np.linalg.norm(Q, axis=1, keepdims=True)
    E = W3.orthonormalize(Q, rng.normal(size=(20, 3, 3)))
    assert mixed_components(Frame(W3, Q, E)).max() < 1e-12


def test_mixed_component_at_half_turn_matches_curvature_gap():
    r = 1.2
    p = np.array([r, 0.0, 0.0])
    E = W3.orthonormalize(p, np.eye(3))
    a = 1 / math.sqrt(2)
    F = Frame(W3, p, np.array([a * (E[0] + E[1]), a * (E[1] - E[0]), E[2]]))
    kr, kt = _curvatures_fd(r)
    # R(e1, e3, e2, e3) = (K(e1 e3) - K(e2 e3)) / 2 after the rotation
    assert abs(riemann_component(F, 0, 2, 1, 2)) == pytest.approx(abs(kr - kt) / 2, rel=1e-5)
    assert mixed_components(F) == pytest.approx(abs(kr - kt) / 2, rel=1e-5)


def test_riemann_component_index_check():
    F = Frame(H3, H3.origin, H3.frame(H3.origin))
    with pytest.raises(IndexError):
        riemann_component(F, 0, 1, 0, 3)


def test_frame_rejects_non_orthonormal_vectors():
    with pytest.raises(ValueError):
        Frame(H3, H3.origin, 2 * H3.frame(H3.origin))


def test_warped_radial_distance_and_roundtrip():
    p = np.array([0.3, 0.0, 0.0])
    q = np.array([1.5, 0.0, 0.0])
    assert W3.distance(p, q) == pytest.approx(1.2, abs=1e-8)
    a = np.array([1.2, 0.3, -0.2])
    b = np.array([-0.4, 1.1, 0.5])
    v = W3.log_map(a, b)
    assert np.allclose(W3.exp_map(a, v), b, atol=1e-8)


def test_warped_matches_hyperbolic_inside_the_core():
    a, b = np.array([0.3, 0.1, -0.2]), np.array([-0.2, 0.25, 0.1])
    lift = lambda x: H3.lift(np.sinh(np.linalg.norm(x)) * x / np.linalg.norm(x))  # noqa: E731
    assert W3.distance(a, b) == pytest.approx(H3.distance(lift(a), lift(b)), abs=1e-6)
