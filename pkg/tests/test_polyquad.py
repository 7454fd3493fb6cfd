import math

import numpy as np
import pytest

from hdgplus.mesh import element_geometry_from_coords, random_star_polygon
from hdgplus.polyquad import (
    ElementWorkspace,
    FaceBasis,
    GramFactorizationError,
    build_element_basis,
    build_quadrature,
    default_exactness,
    dim_pk,
    duffy_triangle_rule,
    gauss1d,
    greens_monomial_integral,
    l2_project_element,
    l2_project_face,
    monomial_exponents,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_dim_pk():
    assert [dim_pk(k) for k in range(5)] == [1, 3, 6, 10, 15]
    assert all(len(monomial_exponents(k)) == dim_pk(k) for k in range(5))


def test_default_exactness():
    assert [default_exactness(k) for k in (0, 1, 2)] == [6, 8, 10]


def test_gauss1d():
    x, w = gauss1d(2)
    assert w.sum() == pytest.approx(2.0)
    assert np.sum(w * x**2) == pytest.approx(2.0 / 3.0, rel=1e-15)


def test_duffy_rule_reference_triangle():
    # exact monomial integrals on {u, v >= 0, u + v <= 1}: a! b! / (a+b+2)!
    pts, w = duffy_triangle_rule(6)
    assert (w > 0.0).all()
    assert w.sum() == pytest.approx(0.5, rel=1e-15)
    for a in range(4):
        for b in range(4 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            got = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b)
            assert got == pytest.approx(exact, rel=1e-13), (a, b)


@pytest.mark.parametrize("seed", [0, 3, 11])
@pytest.mark.parametrize("nv", [4, 5, 6])
def test_element_rule_matches_boundary_integral_oracle(nv, seed):
    # cross-check the fan rule against an independent Green's-theorem formula
    coords = random_star_polygon(nv, seed=seed)
    g = element_geometry_from_coords(coords)
    rule = build_quadrature(g, 6)
    for a in range(4):
        for b in range(4 - a):
            exact = greens_monomial_integral(coords, a, b)
            got = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert got == pytest.approx(exact, rel=1e-12, abs=1e-14), (a, b)


def test_greens_oracle_unit_square():
    for a in range(5):
        for b in range(5):
            assert greens_monomial_integral(UNIT_SQUARE, a, b) == pytest.approx(
                1.0 / ((a + 1) * (b + 1)), rel=1e-14
            )


@pytest.mark.parametrize("scale", [1.0, 1e-3])
def test_basis_orthonormal(scale):
    coords = scale * random_star_polygon(6, seed=4)
    g = element_geometry_from_coords(coords)
    rule = build_quadrature(g, default_exactness(2))
    basis = build_element_basis(g, 3, rule=rule)
    V = basis.eval(rule.points)
    G = (V * rule.weights[:, None]).T @ V
    assert np.max(np.abs(G - np.eye(dim_pk(3)))) < 1e-12


def test_gram_failure_is_reported():
    g = element_geometry_from_coords(UNIT_SQUARE)
    with pytest.raises(GramFactorizationError, match="degree-5.*exactness 1.*required 10"):
        build_element_basis(g, 5, q_deg=1)


def test_subbasis_shares_leading_functions():
    g = element_geometry_from_coords(random_star_polygon(5, seed=2))
    rule = build_quadrature(g, 10)
    b3 = build_element_basis(g, 3, rule=rule)
    b1 = b3.subbasis(1)
    pts = rule.points[:7]
    assert np.allclose(b3.eval(pts)[:, : dim_pk(1)], b1.eval(pts), atol=1e-13)
    with pytest.raises(ValueError, match="cannot extract degree 4"):
        b1.subbasis(4)


def test_l2_projection_drops_degree():
    # projection of x^2 onto P_1 over the unit square is x - 1/6
    g = element_geometry_from_coords(UNIT_SQUARE)
    rule = build_quadrature(g, 8)
    basis = build_element_basis(g, 1, rule=rule)
    c = l2_project_element(lambda p: p[:, 0] ** 2, basis, rule)
    pts = np.array([[0.1, 0.3], [0.7, 0.9], [0.5, 0.5]])
    got = basis.eval(pts) @ c
    assert np.allclose(got, pts[:, 0] - 1.0 / 6.0, atol=1e-14)


def test_face_fit_of_cubic():
    # best P_1 fit of t^3 on a unit edge is -0.2 + 0.9 t
    g = element_geometry_from_coords(UNIT_SQUARE)
    rule = build_quadrature(g, 8)
    coeffs = l2_project_face(lambda p: p[:, 0] ** 3, g, 1, rule)
    fb = FaceBasis(g, 1)
    x = rule.face_points[0][:, 0]
    fitted = fb.eval(0, rule.face_s[0]) @ coeffs[0]
    assert np.allclose(fitted, -0.2 + 0.9 * x, atol=1e-13)


def test_face_basis_orthonormal():
    g = element_geometry_from_coords(random_star_polygon(5, seed=9))
    ws = ElementWorkspace(g, 2)
    for L, w in zip(ws.fL, ws.fw):
        G = L.T @ (w[:, None] * L)
        assert np.max(np.abs(G - np.eye(ws.k + 1))) < 1e-13


def test_workspace_mass_matrix_is_identity():
    g = element_geometry_from_coords(random_star_polygon(6, seed=5))
    ws = ElementWorkspace(g, 1)
    M = ws.mass_matrix()
    assert np.max(np.abs(M - np.eye(ws.n1))) < 1e-12
    Mk = ws.mass_matrix(degree=1)
    assert Mk.shape == (dim_pk(1), dim_pk(1))


def test_weighted_mass_matrix():
    g = element_geometry_from_coords(UNIT_SQUARE)
    ws = ElementWorkspace(g, 1, q_deg=12)
    kappa = lambda p: 2.0 + p[:, 0]
    M = ws.mass_matrix(weight=kappa)
    # constant mode is 1/sqrt(area): (kappa psi_0, psi_0) = mean of kappa
    assert M[0, 0] == pytest.approx(2.5, rel=1e-13)
    assert np.max(np.abs(M - M.T)) < 1e-14


def test_scalar_roundtrip():
    g = element_geometry_from_coords(random_star_polygon(5, seed=1))
    ws = ElementWorkspace(g, 2)
    f = lambda p: 1.0 + 2.0 * p[:, 0] - p[:, 1] + 0.5 * p[:, 0] * p[:, 1]
    c = ws.scalar_coeffs(f)
    assert np.max(np.abs(ws.eval_scalar(c) - f(ws.pts))) < 1e-12
    pts = np.array([[0.2, 0.1], [-0.3, 0.4]]) + g.star_center
    assert np.allclose(ws.eval_scalar(c, pts), f(pts), atol=1e-12)


def test_vector_roundtrip():
    g = element_geometry_from_coords(random_star_polygon(6, seed=8))
    ws = ElementWorkspace(g, 2)
    f = lambda p: np.column_stack([p[:, 0] ** 2 - p[:, 1], 3.0 + p[:, 0] * p[:, 1]])
    c = ws.vector_coeffs(f)
    assert c.shape == (2 * ws.nk,)
    assert np.max(np.abs(ws.eval_vector(c) - f(ws.pts))) < 1e-12


def test_face_normal_matrix_satisfies_divergence_theorem():
    # sum_F |F|^(1/2) <chi_0, Phi_i . n>_F equals |K|^(1/2) (div Phi_i, psi_0)
    g = element_geometry_from_coords(random_star_polygon(6, seed=12))
    ws = ElementWorkspace(g, 2)
    Mx, My = ws.grad_inner()
    Fn = ws.face_normal_matrix()
    lhs = sum(
        np.sqrt(f.length) * Fn[i][0] for i, f in enumerate(g.faces)
    )
    rhs = np.sqrt(g.area) * np.concatenate([Mx[: ws.nk, 0], My[: ws.nk, 0]])
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_face_trace_matrix_reproduces_traces():
    # for u in P_{k+1}, the face projection of the trace equals T @ coeffs
    g = element_geometry_from_coords(random_star_polygon(5, seed=3))
    ws = ElementWorkspace(g, 1)
    u = lambda p: 0.3 - p[:, 0] + 0.25 * p[:, 1]  # degree 1 <= k
    c = ws.scalar_coeffs(u)
    T = ws.face_trace_matrix()
    proj = ws.face_scalar_coeffs(u)
    for i in range(len(g.faces)):
        assert np.allclose(T[i] @ c, proj[i], atol=1e-13)


def test_negative_degree_rejected():
    g = element_geometry_from_coords(UNIT_SQUARE)
    with pytest.raises(ValueError, match="nonnegative"):
        ElementWorkspace(g, -1)
