import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gklab.comparison import (DistanceField, InterpolantField, adapted_frame, check_nested,
                              cofactors, comparison_identity_report, comparison_integrands,
                              evaluate_interpolant, extract_level_set, f_lambda,
                              grad_norm_derivative, integrand_terms, n3_estimates_report,
                              norm_identity_residual, region_integral, sample_between, sample_outside)
from gklab.convex_body import Ball, Hull
from gklab.model_space import ModelSpace
from gklab.surface import DirectionGrid, total_curvature

H3 = ModelSpace.hyperbolic(3)
E3 = ModelSpace.euclidean(3)
SMALL = DirectionGrid.sphere(16, 32)


def _ball_volume_h3(r):
    return math.pi * (math.sinh(2 * r) - 2 * r)


def _pair():
    D = Ball(H3, H3.from_origin(np.array([0.1, 0.0, 0.0])), 0.3)
    O = Ball(H3, H3.origin, 0.6)
    return D, O


def test_check_nested():
    D, O = _pair()
    check_nested(D, O)
    with pytest.raises(ValueError):
        check_nested(O, D)
    with pytest.raises(ValueError):
        check_nested(Ball(H3, H3.from_origin(np.array([0.5, 0, 0])), 0.3), O)


def test_interpolant_arguments():
    D, O = _pair()
    with pytest.raises(ValueError):
        InterpolantField(D, O, -1.0)
    with pytest.raises(ValueError):
        InterpolantField(D, O, 0.5, lam_max=0.1)
    with pytest.raises(ValueError):
        InterpolantField(O, D, 0.1)
    f = InterpolantField(D, O, 0.1)
    assert f.with_lambda(0.01).lam == 0.01


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-1.5, 1.5)))
def test_interpolant_gradient_and_norm_identity(a):
    D, O = _pair()
    f = InterpolantField(D, O, 0.2)
    p = H3.lift(a)
    if D.distance_to(p) <= 1e-3:
        with pytest.raises(ValueError):
            evaluate_interpolant(f, p[None])
        return
    u, g = evaluate_interpolant(f, p[None])
    assert abs(norm_identity_residual(f, p[None])[0]) < 1e-10
    # directional derivative by central differences
    v = np.array([0.3, -0.5, 0.8]) @ H3.frame(p)
    h = 1e-6
    up = f.value_and_grad(H3.exp_map(p, h * v)[None])[0][0]
    um = f.value_and_grad(H3.exp_map(p, -h * v)[None])[0][0]
    assert (up - um) / (2 * h) == pytest.approx(H3.inner(p, g[0], v), abs=1e-6)


def test_interpolant_between_bodies_is_lambda_d_inner():
    D, O = _pair()
    f = InterpolantField(D, O, 0.05)
    P = sample_between(D, O, D.interior_point(), 200, np.random.default_rng(0))
    assert np.all(D.distance_to(P) > 0) and np.all(O.distance_to(P) == 0)
    u, _ = f.value_and_grad(P)
    assert np.allclose(u, 0.05 * D.distance_to(P))
    assert np.allclose(f.grad_norm(P), 0.05)


def test_extract_level_set_of_a_ball_distance():
    B = Ball(H3, H3.origin, 0.5)
    f = DistanceField(B)
    g = extract_level_set(f, 0.3, grid=SMALL)
    assert np.allclose(g.radii, 0.8, atol=1e-9)
    assert total_curvature(g) == pytest.approx(4 * math.pi * math.cosh(0.8) ** 2, rel=1e-6)
    with pytest.raises(ValueError):
        extract_level_set(f, 0.0)
    with pytest.raises(ValueError):
        extract_level_set(f, 0.3, base=H3.from_origin(np.array([2.0, 0, 0])))


def test_adapted_frame_on_distance_levels():
    B = Ball(H3, H3.origin, 0.5)
    f = DistanceField(B)
    rng = np.random.default_rng(1)
    P = H3.from_origin(rng.normal(size=(10, 3)))
    fr = adapted_frame(f, P)
    assert fr.gram_residual(H3).max() < 1e-8
    r = H3.distance(H3.origin, P)
    assert np.allclose(fr.kappas, (1 / np.tanh(r))[:, None], rtol=1e-5)
    _, g = f.value_and_grad(P)
    assert np.allclose(fr.e_n, g, atol=1e-8)
    with pytest.raises(ValueError):
        adapted_frame(f, H3.origin[None])


def test_grad_norm_derivative_matches_closed_form():
    # Euclidean balls: |grad u| = |lam n1 + 2 (|x - c2| - r2) n2| in closed form
    c1, r1, c2, r2, lam = np.array([0.2, 0.0, 0.0]), 0.3, np.zeros(3), 0.7, 0.1
    D, O = Ball(E3, c1, r1), Ball(E3, c2, r2)
    f = InterpolantField(D, O, lam)

    def gnorm(x):
        n1 = (x - c1) / np.linalg.norm(x - c1)
        d2 = np.linalg.norm(x - c2)
        return np.linalg.norm(lam * n1 + 2 * max(d2 - r2, 0.0) * (x - c2) / d2)

    p = np.array([0.5, 0.6, -0.3])
    fr = adapted_frame(f, p[None])
    one = type(fr)(fr.point[0], fr.e_n[0], fr.e[0], fr.kappas[0], fr.grad_norm[0], fr.step[0])
    h = 1e-6
    for j in range(2):
        e = fr.e[0, j]
        fd = (gnorm(p + h * e) - gnorm(p - h * e)) / (2 * h)
        assert grad_norm_derivative(f, one, j) == pytest.approx(fd, abs=1e-6)
    with pytest.raises(IndexError):
        grad_norm_derivative(f, one, 2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(0.1, 3.0)))
def test_cofactors_are_products_of_the_other_curvatures(k):
    diag, off = cofactors(k)
    assert np.allclose(diag * k, np.prod(k))
    assert off[0, 1] == pytest.approx(k[2])
    assert off[1, 2] == pytest.approx(k[0])
    assert np.allclose(np.diag(off), 0.0)


def test_integrand_terms_in_constant_curvature():
    D, O = _pair()
    f = InterpolantField(D, O, 0.1)
    P = sample_outside(O, D.interior_point(), 50, 0.01, 0.2, np.random.default_rng(2))
    s = comparison_integrands(f, P)
    assert np.allclose(s.term2, 0.0, atol=1e-12)
    # R_inin = k = -1, so term1 = -sum_i GK_i
    assert np.allclose(s.term1, -s.cofactor_diag.sum(axis=-1), rtol=1e-10)
    assert np.allclose(f_lambda(f, P), 0.0, atol=1e-12)


def test_integrand_terms_pick_mixed_components():
    kappas = np.array([1.0, 2.0])
    R = np.zeros((3, 3, 3, 3))
    R[0, 1, 0, 2] = 0.5
    R[1, 0, 1, 2] = -0.25
    t1, t2, _, R_ijin = integrand_terms(kappas, np.array([0.2, 0.4]), R)
    assert t1 == 0.0
    # ordered pairs (i, j) = (0, 1) and (1, 0), cofactor GK_ij = 1 for n - 1 = 2
    assert t2 == pytest.approx(0.4 * 0.5 + 0.2 * -0.25)


def test_f_lambda_requires_three_dimensions():
    S = ModelSpace.hyperbolic(2)
    f = DistanceField(Ball(S, S.origin, 0.5))
    with pytest.raises(ValueError):
        f_lambda(f, S.from_origin(np.array([[1.0, 0.0]])))


def test_region_integral_of_one_is_a_shell_volume():
    B = Ball(H3, H3.origin, 0.4)
    f = DistanceField(B)
    v = region_integral(f, (0.1, 0.5), "one", grid=SMALL, nodes=8)
    assert v == pytest.approx(_ball_volume_h3(0.9) - _ball_volume_h3(0.5), rel=1e-6)
    w = region_integral(f, (0.1, 0.5), lambda P: np.ones(len(P)), grid=SMALL, nodes=8)
    assert w == pytest.approx(v, rel=1e-12)
    assert region_integral(f, (0.5, 0.1), "one", grid=SMALL) == 0.0
    with pytest.raises(ValueError):
        region_integral(f, (0.1, 0.5), "volume")


def test_comparison_identity_between_concentric_spheres_small_grid():
    D, O = Ball(H3, H3.origin, 0.5), Ball(H3, H3.origin, 1.0)
    r = comparison_identity_report(D, O, DistanceField(D), grid=SMALL, nodes=8, refinements=0)
    exact = 4 * math.pi * (math.cosh(1.0) ** 2 - math.cosh(0.5) ** 2)
    assert r.lhs == pytest.approx(exact, rel=1e-5)
    assert r.relative_residual < 1e-4
    assert r.rhs_term2 == pytest.approx(0.0, abs=1e-10)
    assert r.levels == pytest.approx((0.0, 0.5))
    assert set(r.as_dict()) >= {"lhs", "rhs_term1", "residual", "refinement_history"}


def test_comparison_identity_on_interpolant_levels():
    D, O = _pair()
    f = InterpolantField(D, O, 0.05)
    r = comparison_identity_report(0.02, 0.12, f, grid=DirectionGrid.sphere(32, 64), nodes=12,
                                   refinements=0)
    assert r.relative_residual < 2e-3
    assert abs(r.rhs_term2) < 1e-10
    with pytest.raises(ValueError):
        comparison_identity_report(0.12, 0.02, f, grid=SMALL, refinements=0)


def test_sampling_helpers():
    D, O = _pair()
    rng = np.random.default_rng(3)
    P = sample_outside(O, D.interior_point(), 300, 1e-6, 0.05, rng)
    d = O.distance_to(P)
    assert d.min() >= 1e-6 * 0.999 and d.max() <= 0.05 * 1.001


def test_n3_estimates_on_hulls():
    rng = np.random.default_rng(4)
    O = Hull(H3, H3.from_origin(rng.normal(size=(7, 3)) * 0.7))
    D = Ball(H3, O.interior_point(), 0.05)
    eps = 0.05 * O.diameter
    out = sample_outside(O, D.center, 400, 1e-6, eps, np.random.default_rng(5))
    btw = sample_between(D, O, D.center, 100, np.random.default_rng(6))
    r = n3_estimates_report(InterpolantField(D, O, 0.01 * eps), out, btw)
    assert r.pass_inner_product and r.pass_grad_ratio and r.pass_f
    assert r.max_norm_identity < 1e-10
    assert r.count == 400
    with pytest.raises(ValueError):
        n3_estimates_report(InterpolantField(D, O, 0.01), btw)
