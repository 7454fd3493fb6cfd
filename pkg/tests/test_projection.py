import numpy as np
import pytest

from hdgplus.mesh import (
    element_geometry,
    element_geometry_from_coords,
    random_star_polygon,
    refine_sequence,
)
from hdgplus.polyquad import ElementWorkspace, dim_pk
from hdgplus.projection import (
    build_grad_complement,
    fit_rate,
    project_hdg_plus,
    projection_convergence_study,
    projection_errors,
    verify_projection_identities,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_poly_pair(k, seed):
    """Smooth polynomial data of degree k+2, outside both local spaces."""
    rng = np.random.default_rng(seed)
    deg = k + 2
    exps = [(a, b) for a in range(deg + 1) for b in range(deg + 1 - a)]
    cu = rng.uniform(-1.0, 1.0, len(exps))
    cx = rng.uniform(-1.0, 1.0, len(exps))
    cy = rng.uniform(-1.0, 1.0, len(exps))

    def u(p):
        return sum(c * p[:, 0] ** a * p[:, 1] ** b for c, (a, b) in zip(cu, exps))

    def q(p):
        qx = sum(c * p[:, 0] ** a * p[:, 1] ** b for c, (a, b) in zip(cx, exps))
        qy = sum(c * p[:, 0] ** a * p[:, 1] ** b for c, (a, b) in zip(cy, exps))
        return np.column_stack([qx, qy])

    return q, u


@pytest.mark.parametrize("k,dims", [(0, (2, 0)), (1, (5, 1)), (2, (9, 3))])
def test_split_dimensions(k, dims):
    g = element_geometry_from_coords(UNIT_SQUARE)
    split = build_grad_complement(ElementWorkspace(g, k))
    assert (split.dim_grad, split.dim_comp) == dims
    assert split.dim_grad + split.dim_comp == 2 * dim_pk(k)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_split_matrix_well_conditioned(k, seed):
    g = element_geometry_from_coords(random_star_polygon(5 + seed % 2, seed=seed))
    split = build_grad_complement(ElementWorkspace(g, k))
    assert np.linalg.cond(split.matrix) < 1e6


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("nv,seed", [(4, 0), (5, 7), (6, 13)])
def test_reproduces_in_space_pairs(k, nv, seed):
    g = element_geometry_from_coords(random_star_polygon(nv, seed=seed))
    ws = ElementWorkspace(g, k)
    rng = np.random.default_rng(seed + 100)
    uc_true = rng.uniform(-1.0, 1.0, ws.n1)
    qc_true = rng.uniform(-1.0, 1.0, 2 * ws.nk)
    u = lambda p: ws.eval_scalar(uc_true, p)
    q = lambda p: ws.eval_vector(qc_true, p)
    proj = project_hdg_plus(ws, q, u, tau=1.0 / g.h)
    assert np.max(np.abs(proj.q_coeffs - qc_true)) < 1e-13
    assert np.max(np.abs(proj.u_coeffs - uc_true)) < 1e-13
    assert np.max(np.abs(proj.delta_plus)) < 1e-12
    assert np.max(np.abs(proj.delta_minus)) < 1e-12


def test_flux_projection_oracle_quadratic():
    # for q = (x^2, 0), k = 1, the boundary correction vanishes on the unit
    # square and the result is the plain L2 projection (x - 1/6, 0)
    g = element_geometry_from_coords(UNIT_SQUARE)
    ws = ElementWorkspace(g, 1)
    q = lambda p: np.column_stack([p[:, 0] ** 2, np.zeros(len(p))])
    proj = project_hdg_plus(ws, q, lambda p: np.zeros(len(p)), tau=1.0)
    pts = np.array([[0.15, 0.4], [0.8, 0.2], [0.5, 0.95]])
    Q = ws.eval_vector(proj.q_coeffs, pts)
    assert np.allclose(Q[:, 0], pts[:, 0] - 1.0 / 6.0, atol=1e-13)
    assert np.allclose(Q[:, 1], 0.0, atol=1e-13)


def test_remainder_signs_decouple():
    # u in its space: both remainders collapse to the flux mismatch
    g = element_geometry_from_coords(random_star_polygon(5, seed=21))
    ws = ElementWorkspace(g, 1)
    q_out = lambda p: np.column_stack([p[:, 0] ** 3, p[:, 1] ** 2])
    u_in = lambda p: 0.2 + p[:, 0] - 0.5 * p[:, 1]
    proj = project_hdg_plus(ws, q_out, u_in, tau=2.0)
    assert np.max(np.abs(proj.delta_plus - proj.delta_minus)) < 1e-12
    assert np.max(np.abs(proj.delta_plus + proj.delta_minus)) > 1e-6

    # q in its space: the remainders differ only by the primal drift term
    q_in = lambda p: np.column_stack([1.0 + p[:, 1], p[:, 0] - 2.0 * p[:, 1]])
    u_out = lambda p: p[:, 0] ** 4 - p[:, 1] ** 3
    proj2 = project_hdg_plus(ws, q_in, u_out, tau=2.0)
    assert np.max(np.abs(proj2.delta_plus + proj2.delta_minus)) < 1e-12
    assert np.max(np.abs(proj2.delta_plus - proj2.delta_minus)) > 1e-6


def test_remainders_match_direct_recomputation():
    g = element_geometry_from_coords(random_star_polygon(6, seed=2))
    ws = ElementWorkspace(g, 1)
    q, u = random_poly_pair(1, seed=5)
    tau = 3.0
    proj = project_hdg_plus(ws, q, u, tau)
    pu_proj = ws.face_scalar_coeffs([Vf @ proj.u_coeffs for Vf in ws.fV])
    pu = ws.face_scalar_coeffs([u(p) for p in ws.rule.face_points])
    jump = pu_proj - pu
    assert np.max(np.abs(proj.delta_plus - proj.delta_minus - 2.0 * tau * jump)) < 1e-12


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("seed", [0, 5, 9])
def test_identities_exact_for_polynomial_data(k, seed):
    nv = 4 + seed % 3
    g = element_geometry_from_coords(random_star_polygon(nv, seed=seed))
    ws = ElementWorkspace(g, k, q_deg=2 * (k + 2) + 6)
    q, u = random_poly_pair(k, seed=seed)
    proj = project_hdg_plus(ws, q, u, tau=1.0 / g.h)
    res = verify_projection_identities(ws, proj, q, u)
    assert res.max() < 1e-11


@pytest.mark.parametrize("k", [0, 1, 2])
def test_identities_for_trig_data(k):
    g = element_geometry_from_coords(random_star_polygon(5, seed=31))
    ws = ElementWorkspace(g, k, q_deg=18)
    u = lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    q = lambda p: np.column_stack(
        [
            -np.pi * np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
            -np.pi * np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]),
        ]
    )
    div_q = lambda p: 2.0 * np.pi**2 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    proj = project_hdg_plus(ws, q, u, tau=2.0)
    res = verify_projection_identities(ws, proj, q, u, div_q=div_q)
    assert res.max() < 1e-9


def test_projection_is_scale_invariant():
    # the same element at 1e-3 scale reproduces in-space data equally well
    coords = 1e-3 * random_star_polygon(5, seed=17)
    g = element_geometry_from_coords(coords)
    ws = ElementWorkspace(g, 1)
    rng = np.random.default_rng(0)
    uc = rng.uniform(-1.0, 1.0, ws.n1)
    qc = rng.uniform(-1.0, 1.0, 2 * ws.nk)
    proj = project_hdg_plus(
        ws, lambda p: ws.eval_vector(qc, p), lambda p: ws.eval_scalar(uc, p), tau=1.0 / g.h
    )
    assert np.max(np.abs(proj.q_coeffs - qc)) < 1e-12
    assert np.max(np.abs(proj.u_coeffs - uc)) < 1e-12


def test_tau_must_be_positive():
    g = element_geometry_from_coords(UNIT_SQUARE)
    ws = ElementWorkspace(g, 0)
    f = lambda p: np.zeros(len(p))
    q = lambda p: np.zeros((len(p), 2))
    with pytest.raises(ValueError, match="tau must be positive"):
        project_hdg_plus(ws, q, f, tau=0.0)


def test_projection_errors_vanish_in_space():
    g = element_geometry_from_coords(UNIT_SQUARE)
    ws = ElementWorkspace(g, 1)
    u = lambda p: p[:, 0] ** 2 - p[:, 1]
    q = lambda p: np.column_stack([p[:, 1], -p[:, 0]])
    proj = project_hdg_plus(ws, q, u, tau=1.0)
    eq, eu, ed = projection_errors(ws, proj, q, u)
    assert eq < 1e-26 and eu < 1e-26 and ed < 1e-24


def test_convergence_rates_lowest_order():
    u = lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    q = lambda p: np.column_stack(
        [
            -np.pi * np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
            -np.pi * np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]),
        ]
    )
    meshes = refine_sequence(2, 2, "quad", 3)
    out = projection_convergence_study(q, u, meshes, k=0, q_deg=10, hs=[0.5, 0.25, 0.125])
    assert out["rate_q"] == pytest.approx(1.0, abs=0.3)
    assert out["rate_u"] == pytest.approx(2.0, abs=0.3)
    assert out["rate_delta"] == pytest.approx(1.0, abs=0.35)
    assert np.all(np.diff(out["err_u"]) < 0.0)


def test_study_checks_hs_length():
    meshes = refine_sequence(2, 2, "quad", 2)
    u = lambda p: p[:, 0]
    q = lambda p: np.column_stack([-np.ones(len(p)), np.zeros(len(p))])
    with pytest.raises(ValueError, match="one spacing per mesh"):
        projection_convergence_study(q, u, meshes, k=0, hs=[0.5])


def test_fit_rate_rejects_degenerate_input():
    with pytest.raises(ValueError, match="two distinct mesh sizes"):
        fit_rate([0.5], [1.0])
    with pytest.raises(ValueError, match="positive errors"):
        fit_rate([0.5, 0.25], [1.0, 0.0])
    assert fit_rate([0.5, 0.25, 0.125], [1e-2, 2.5e-3, 6.25e-4]) == pytest.approx(2.0)


def test_split_cached_on_workspace():
    g = element_geometry_from_coords(UNIT_SQUARE)
    ws = ElementWorkspace(g, 1)
    u = lambda p: np.zeros(len(p))
    q = lambda p: np.zeros((len(p), 2))
    project_hdg_plus(ws, q, u, tau=1.0)
    first = ws._hdgplus_grad_split
    project_hdg_plus(ws, q, u, tau=2.0)
    assert ws._hdgplus_grad_split is first
