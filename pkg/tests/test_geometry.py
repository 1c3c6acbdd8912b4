import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pehopt.errors import BoundsError, DomainError, GeometryError
from pehopt.geometry import (
    DeviceDimensions,
    ShapeParams,
    basis_ders_1d,
    build_patch,
    eval_basis,
    evaluate_geometry,
    expand_shape,
    find_span,
    open_uniform_knots,
    quadrature,
)


@pytest.mark.parametrize("params, expected", [
    ((0.3, 0.5, 0.2), (0.3, 2.0e-4, 6.0e-4, 0.15)),
    ((0.1, 1.0, 0.05), (0.1, 5.0e-5, 9.0e-4, 0.1)),
    ((0.5, 0.1, 0.45), (0.5, 4.5e-4, 1.0e-4, 0.05)),
])
def test_expand_shape(params, expected):
    L, l, H = params
    d = expand_shape(ShapeParams(L=L, l=l, H=H, R=1.0, h=0.001))
    assert np.allclose([d.W, d.h_p, d.h_s, d.L_pzt], expected, rtol=1e-12, atol=0)
    assert d.L == L and d.h == 0.001


@pytest.mark.parametrize("field, kwargs", [
    ("L", dict(L=0.6, l=0.5, H=0.2)),
    ("l", dict(L=0.3, l=0.05, H=0.2)),
    ("H", dict(L=0.3, l=0.5, H=0.5)),
    ("R", dict(L=0.3, l=0.5, H=0.2, R=0.0)),
    ("L", dict(L=float("nan"), l=0.5, H=0.2)),
])
def test_bounds_error_names_field(field, kwargs):
    with pytest.raises(BoundsError) as err:
        ShapeParams(**kwargs)
    assert err.value.field == field
    assert field in str(err.value)


def test_vector_round_trip():
    p = ShapeParams(L=0.25, l=0.7, H=0.1)
    assert ShapeParams.from_vector(p.vector()) == p


def _dims(L=0.3, l=0.5, R=1.0, H=0.2, h=1e-3):
    return expand_shape(ShapeParams(L=L, l=l, H=H, R=R, h=h))


def test_patch_counts():
    # interface at an existing knot with full C2 continuity: 4 spans + 3 = 7
    patch = build_patch(_dims(), (3, 3), (4, 4), interface_continuity=2)
    assert patch.shape == (7, 7)
    # default C1 interface adds one repeated knot in u
    assert build_patch(_dims(), (3, 3), (4, 4)).shape == (8, 7)
    # interface between knots adds a span
    patch = build_patch(_dims(l=0.6), (3, 3), (4, 4), interface_continuity=2)
    assert patch.element_count() == (5, 4)


def test_open_knots():
    k = open_uniform_knots(3, 4)
    assert np.all(k[:4] == 0) and np.all(k[-4:] == 1)
    assert np.all(np.diff(k) >= 0)


def test_interface_on_element_edge():
    for l in (0.1, 0.33, 0.5, 0.77, 0.95):
        d = _dims(l=l)
        patch = build_patch(d, (3, 3), (8, 8))
        assert np.any(np.isclose(patch.knots_u, l, rtol=0, atol=1e-15))
        # no element straddles the interface
        edges = patch.knots_u[patch.spans(0)], patch.knots_u[patch.spans(0) + 1]
        assert not np.any((edges[0] < l - 1e-14) & (edges[1] > l + 1e-14))


def test_full_coverage_has_no_interface():
    assert build_patch(_dims(l=1.0)).interface is None


def test_degree_too_low():
    with pytest.raises(GeometryError):
        build_patch(_dims(), (1, 3))


def test_endpoint_interpolation():
    patch = build_patch(_dims(), (3, 3), (4, 4))
    N = eval_basis(patch, (0.0, 0.0))["N"]
    assert N[0] == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(N[1:], 0.0, atol=1e-15)


def test_domain_error():
    patch = build_patch(_dims())
    for xi in [(-0.1, 0.5), (0.5, 1.01), (np.nan, 0.2)]:
        with pytest.raises(DomainError):
            eval_basis(patch, xi)


def test_partition_of_unity_at_quadrature_points():
    patch = build_patch(_dims(l=0.37), (3, 3), (8, 8))
    q = quadrature(patch)
    assert np.max(np.abs(q.N.sum(-1) - 1.0)) < 1e-12
    for a in (q.N_x, q.N_y, q.N_xx, q.N_yy, q.N_xy):
        assert np.max(np.abs(a.sum(-1))) < 1e-10 * max(1.0, np.abs(a).max())


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 0.99))
def test_partition_of_unity_random(u, v, l):
    patch = build_patch(_dims(l=l), (3, 3), (5, 4))
    b = eval_basis(patch, (u, v))
    assert abs(b["N"].sum() - 1.0) < 1e-12
    assert abs(b["N_x"].sum()) < 1e-9 and abs(b["N_y"].sum()) < 1e-9


def test_geometry_map_is_affine(rng):
    d = _dims(L=0.4, R=0.5, l=0.3)
    patch = build_patch(d, (3, 3), (6, 5))
    for u, v in rng.random((20, 2)):
        assert np.allclose(evaluate_geometry(patch, (u, v)), [u * d.L, v * d.W], atol=1e-14)


def _project(patch, fn):
    """Nodal values reproducing ``fn`` by least squares at many points."""
    pts = np.random.default_rng(0).random((400, 2))
    A = np.array([eval_basis(patch, p, 0)["N"] for p in pts])
    xy = np.array([evaluate_geometry(patch, p) for p in pts])
    c, *_ = np.linalg.lstsq(A, fn(xy[:, 0], xy[:, 1]), rcond=None)
    return c


def test_polynomial_reproduction(rng):
    d = _dims(L=0.3, l=0.45)
    patch = build_patch(d, (3, 3), (4, 4))
    c_lin = _project(patch, lambda x, y: x)
    c_quad = _project(patch, lambda x, y: x ** 2)
    c_cub = _project(patch, lambda x, y: x ** 3 * y ** 3)
    for xi in rng.random((10, 2)):
        b = eval_basis(patch, xi)
        x, y = evaluate_geometry(patch, xi)
        assert b["N"] @ c_lin == pytest.approx(x, abs=1e-10)
        assert abs(b["N_xx"] @ c_lin) < 1e-9
        assert b["N_xx"] @ c_quad == pytest.approx(2.0, abs=1e-8)
        assert b["N_xy"] @ c_cub == pytest.approx(9 * x ** 2 * y ** 2, rel=1e-8, abs=1e-10)


def test_derivatives_against_finite_differences(rng):
    d = _dims(L=0.3, l=1.0, R=0.8)
    patch = build_patch(d, (3, 3), (5, 5))
    h = 1e-6
    for u, v in 0.05 + 0.9 * rng.random((10, 2)):
        b = eval_basis(patch, (u, v))
        du, dv = h / d.L, h / d.W
        bx_p, bx_m = eval_basis(patch, (u + du, v)), eval_basis(patch, (u - du, v))
        by_p, by_m = eval_basis(patch, (u, v + dv)), eval_basis(patch, (u, v - dv))
        checks = [
            (b["N_x"], (bx_p["N"] - bx_m["N"]) / (2 * h)),
            (b["N_y"], (by_p["N"] - by_m["N"]) / (2 * h)),
            (b["N_xx"], (bx_p["N_x"] - bx_m["N_x"]) / (2 * h)),
            (b["N_yy"], (by_p["N_y"] - by_m["N_y"]) / (2 * h)),
            (b["N_xy"], (by_p["N_x"] - by_m["N_x"]) / (2 * h)),
        ]
        for exact, fd in checks:
            assert np.linalg.norm(exact - fd) <= 1e-6 * np.linalg.norm(exact)


def test_basis_ders_match_scalar_span():
    k = open_uniform_knots(3, 5)
    us = np.linspace(0, 1, 17)
    spans = [find_span(k, 3, u) for u in us]
    vec = basis_ders_1d(k, 3, np.array(spans), us)
    for i, (s, u) in enumerate(zip(spans, us)):
        assert np.allclose(vec[i], basis_ders_1d(k, 3, s, u)[0])


def test_patch_is_immutable():
    patch = build_patch(_dims())
    with pytest.raises(ValueError):
        patch.knots_u[0] = 0.5
