"""HDG+ projection for the stress-displacement pair of linear elasticity.

Symmetric-tensor fields are carried in an orthonormal component form
(s11, s22, sqrt(2) s12), so Frobenius inner products are Euclidean on
coefficients.  The stress projection prescribes moments against an L2
complement of the symmetric gradients of P_{k+1} vector fields together with
symmetric-gradient moments against a complement of the rigid motions; the
displacement projection is the componentwise L2 projection onto P_{k+1}.
Degree k = 0 is rejected: the rigid rotation is affine, and its consistency
moments only vanish automatically for k >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .polyquad import build_quadrature, dim_pk
from .projection import AssemblyError

_RANK_TOL = 1e-10
_RIGID_TOL = 1e-11
_SQRT2 = np.sqrt(2.0)


def sym_to_mandel(S):
    """(..., 2, 2) symmetric matrices to (..., 3) orthonormal components."""
    return np.stack([S[..., 0, 0], S[..., 1, 1], _SQRT2 * S[..., 0, 1]], axis=-1)


def mandel_to_sym(m):
    S = np.empty(m.shape[:-1] + (2, 2))
    S[..., 0, 0] = m[..., 0]
    S[..., 1, 1] = m[..., 1]
    S[..., 0, 1] = S[..., 1, 0] = m[..., 2] / _SQRT2
    return S


def mandel_normal(m, n):
    """Rows sigma . n for stresses in component form, (m, 3) x (2,) -> (m, 2)."""
    return np.column_stack(
        [m[:, 0] * n[0] + m[:, 2] * n[1] / _SQRT2,
         m[:, 2] * n[0] / _SQRT2 + m[:, 1] * n[1]]
    )


@dataclass(frozen=True)
class SymGradSplit:
    """Split of symmetric-tensor P_k into sym-grad P_{k+1}^2 and its complement.

    ``motion_basis`` spans the rigid motions inside the vector P_{k+1} space
    (dimension 3), ``motion_comp`` its L2-orthogonal complement there;
    ``symgrad_raw[:, j]`` is the symmetric gradient of the j-th complement
    field in tensor coefficients.
    """

    motion_basis: np.ndarray
    motion_comp: np.ndarray
    symgrad_raw: np.ndarray
    symgrad_basis: np.ndarray
    comp_basis: np.ndarray
    matrix: np.ndarray
    lu: tuple

    @property
    def dim_symgrad(self):
        return self.symgrad_basis.shape[1]

    @property
    def dim_comp(self):
        return self.comp_basis.shape[1]


@dataclass(frozen=True)
class ElasticProjection:
    """Projected stress/displacement pair with vector boundary remainders.

    ``sigma_coeffs`` uses the orthonormal tensor basis (three component
    blocks), ``u_coeffs`` the vector P_{k+1} basis (x-block, y-block), and the
    remainders have shape (n_faces, k+1, 2) in the face bases.
    """

    sigma_coeffs: np.ndarray
    u_coeffs: np.ndarray
    delta_plus: np.ndarray
    delta_minus: np.ndarray
    tau_matrix: np.ndarray


@dataclass(frozen=True)
class ElasticResiduals:
    moments: float
    boundary: float
    divergence: float
    rigid: float

    def max(self):
        return max(self.moments, self.boundary, self.divergence)


def _check_tau_matrix(tau_matrix):
    t = np.asarray(tau_matrix, dtype=float)
    if t.shape != (2, 2) or np.abs(t - t.T).max() > 1e-12 * max(1.0, np.abs(t).max()):
        raise ValueError("tau_matrix must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(t).min() <= 0.0:
        raise ValueError("tau_matrix must be positive definite")
    return t


def _symgrad_mandel(gx_x, gy_x, gx_y, gy_y):
    """Component form of eps(v) from the partials of v = (v_x, v_y)."""
    return np.stack([gx_x, gy_y, (gy_x + gx_y) / _SQRT2], axis=-1)


def build_symgrad_split(ws):
    """SymGradSplit on the workspace's element; requires k >= 1."""
    k = ws.k
    if k < 1:
        raise ValueError("the elasticity projection needs k >= 1")
    nk, n1 = ws.nk, ws.n1
    N = 3 * nk
    w = ws.w[:, None]
    Vk = ws.V[:, :nk]

    # rigid motions in vector P_{k+1} coefficients: translations and rotation
    rot = np.concatenate(
        [ws.scalar_coeffs(lambda p: -p[:, 1]), ws.scalar_coeffs(lambda p: p[:, 0])]
    )
    e0 = np.zeros(2 * n1)
    e0[: n1] = ws.scalar_coeffs(lambda p: np.ones(len(p)))
    e1 = np.zeros(2 * n1)
    e1[n1:] = e0[:n1]
    motions = np.column_stack([e0, e1, rot])
    U, s, _ = np.linalg.svd(motions, full_matrices=True)
    if int(np.sum(s > _RANK_TOL * s[0])) != 3:
        raise AssemblyError("rigid motions are rank deficient on this element")
    motion_basis = U[:, :3]
    motion_comp = U[:, 3:]

    # symmetric gradients of the complement fields, in tensor coefficients
    raw = np.empty((N, motion_comp.shape[1]))
    for j in range(motion_comp.shape[1]):
        cx = motion_comp[: n1, j]
        cy = motion_comp[n1:, j]
        eps = _symgrad_mandel(ws.GX @ cx, ws.GX @ cy, ws.GY @ cx, ws.GY @ cy)
        raw[:, j] = np.concatenate([(Vk * w).T @ eps[:, d] for d in range(3)])

    e = 2 * n1 - 3
    U, s, _ = np.linalg.svd(raw, full_matrices=True)
    rank = int(np.sum(s > _RANK_TOL * s[0]))
    if rank != e:
        raise AssemblyError(
            f"sym-grad space has rank {rank}, expected {e}; element too degenerate"
        )
    symgrad_basis = U[:, :e]
    comp_basis = U[:, e:]
    matrix = np.vstack([comp_basis.T, raw.T])
    return SymGradSplit(
        motion_basis=motion_basis,
        motion_comp=motion_comp,
        symgrad_raw=raw,
        symgrad_basis=symgrad_basis,
        comp_basis=comp_basis,
        matrix=matrix,
        lu=lu_factor(matrix),
    )


def _symgrad_split(ws):
    split = getattr(ws, "_hdgplus_symgrad_split", None)
    if split is None:
        split = build_symgrad_split(ws)
        ws._hdgplus_symgrad_split = split
    return split


def _tensor_coeffs(ws, vals_mandel):
    Vk = ws.V[:, : ws.nk]
    return np.concatenate(
        [Vk.T @ (ws.w * vals_mandel[:, d]) for d in range(3)]
    )


def _eval_tensor(ws, coeffs, V=None):
    V = ws.V if V is None else V
    Vk = V[:, : ws.nk]
    nk = ws.nk
    return np.stack([Vk @ coeffs[d * nk : (d + 1) * nk] for d in range(3)], axis=-1)


def _eval_vector1(ws, coeffs, V=None):
    V = ws.V if V is None else V
    n1 = ws.n1
    return np.column_stack([V @ coeffs[:n1], V @ coeffs[n1:]])


def project_elastic(ws, sigma, u, tau_matrix, split=None):
    """HDG+ projection of a stress field sigma and displacement u.

    sigma maps (m, 2) points to (m, 2, 2) symmetric matrices, u to (m, 2).
    ``tau_matrix`` is the symmetric positive-definite face stabilization.
    The rigid-motion consistency moments of the data are checked and must
    vanish; a violation is a hard error, not a warning.
    """
    tau = _check_tau_matrix(tau_matrix)
    split = _symgrad_split(ws) if split is None else split
    nk, n1 = ws.nk, ws.n1

    sc = _tensor_coeffs(ws, sym_to_mandel(sigma(ws.pts)))

    sn_vals = []
    for p, n in zip(ws.rule.face_points, ws.normals):
        sn_vals.append(sym_to_mandel(sigma(p)) @ _normal_rows(n))
    sn_c = ws.face_vector_coeffs(sn_vals)

    # <P_M(sigma n) - sigma n, v> for v over the motion complement, plus the
    # a-posteriori rigid-motion rows which must vanish on their own
    resid_vals = []
    scale = 1.0
    for i, (L, w) in enumerate(zip(ws.fL, ws.fw)):
        r = L @ sn_c[i] - sn_vals[i]
        resid_vals.append(r)
        scale = max(scale, float(np.abs(sn_vals[i]).max(initial=0.0)))
    bt = np.zeros(split.motion_comp.shape[1])
    rigid = np.zeros(3)
    for i, (fV, w) in enumerate(zip(ws.fV, ws.fw)):
        mx = fV.T @ (w * resid_vals[i][:, 0])
        my = fV.T @ (w * resid_vals[i][:, 1])
        stacked = np.concatenate([mx, my])
        bt += split.motion_comp.T @ stacked
        rigid += split.motion_basis.T @ stacked
    rigid_resid = float(np.abs(rigid).max())
    if rigid_resid > _RIGID_TOL * scale:
        raise AssemblyError(
            f"rigid-motion consistency violated: residual {rigid_resid:.3e} "
            f"(tolerance {_RIGID_TOL * scale:.3e})"
        )

    rhs = np.concatenate([split.comp_basis.T @ sc, split.symgrad_raw.T @ sc + bt])
    x = lu_solve(split.lu, rhs)

    uv = u(ws.pts)
    uc = np.concatenate(
        [ws.V.T @ (ws.w * uv[:, 0]), ws.V.T @ (ws.w * uv[:, 1])]
    )

    Sn_c = np.empty_like(sn_c)
    for i, (fV, n) in enumerate(zip(ws.fV, ws.normals)):
        Sf = _eval_tensor(ws, x, fV)
        Sn_c[i] = ws.fL[i].T @ (ws.fw[i][:, None] * (Sf @ _normal_rows(n)))

    pu_proj = ws.face_vector_coeffs([_eval_vector1(ws, uc, fV) for fV in ws.fV])
    pu = ws.face_vector_coeffs([u(p) for p in ws.rule.face_points])

    jump = (pu_proj - pu) @ tau.T
    delta_plus = -(Sn_c - sn_c) + jump
    delta_minus = -(Sn_c - sn_c) - jump
    return ElasticProjection(
        sigma_coeffs=x,
        u_coeffs=uc,
        delta_plus=delta_plus,
        delta_minus=delta_minus,
        tau_matrix=tau,
    )


def _normal_rows(n):
    """Matrix turning component-form stresses into sigma . n."""
    return np.array(
        [[n[0], 0.0], [0.0, n[1]], [n[1] / _SQRT2, n[0] / _SQRT2]]
    )


def verify_elastic_identities(ws, proj, sigma, u, div_sigma=None, q_deg=None):
    """Residuals of the projected pair's moment, face, and divergence identities.

    Mirrors the scalar verifier; note the flux mismatch enters the remainder
    with a leading minus sign, and the divergence identity carries it too.
    """
    geom = ws.geom
    nk, n1 = ws.nk, ws.n1
    tau = proj.tau_matrix
    vrule = build_quadrature(geom, ws.q_deg + 4 if q_deg is None else q_deg)
    V = ws.basis.eval(vrule.points)
    w = vrule.weights

    up = _eval_vector1(ws, proj.u_coeffs, V)
    uv = u(vrule.points)
    dk = dim_pk(ws.k - 1)
    res_a = 0.0
    if dk > 0:
        drift = up - uv
        res_a = max(
            float(np.abs(V[:, :dk].T @ (w * drift[:, 0])).max()),
            float(np.abs(V[:, :dk].T @ (w * drift[:, 1])).max()),
        )

    fV = [ws.basis.eval(p) for p in vrule.face_points]
    fL = [ws.face_basis.eval(i, s) for i, s in enumerate(vrule.face_s)]
    fw = vrule.face_weights

    res_b = 0.0
    bnd_p = np.zeros(2 * n1)
    bnd_m = np.zeros(2 * n1)
    rhs_p = np.zeros(2 * n1)
    rhs_m = np.zeros(2 * n1)
    ibp = np.zeros(2 * n1)
    for i, f in enumerate(geom.faces):
        p, n = vrule.face_points[i], f.normal
        sn = sym_to_mandel(sigma(p)) @ _normal_rows(n)
        Sn = _eval_tensor(ws, proj.sigma_coeffs, fV[i]) @ _normal_rows(n)
        drift = (_eval_vector1(ws, proj.u_coeffs, fV[i]) - u(p)) @ tau.T
        lhs_p = fL[i].T @ (fw[i][:, None] * (-(Sn - sn) + drift))
        lhs_m = fL[i].T @ (fw[i][:, None] * (-(Sn - sn) - drift))
        res_b = max(
            res_b,
            float(np.abs(lhs_p - proj.delta_plus[i]).max()),
            float(np.abs(lhs_m - proj.delta_minus[i]).max()),
        )
        # face values of tau P_M(U - u), recovered from the remainder signs
        pm_drift = fL[i] @ ((proj.delta_plus[i] - proj.delta_minus[i]) / 2.0)
        for block, vals in ((slice(0, n1), 0), (slice(n1, 2 * n1), 1)):
            bnd_p[block] += fV[i].T @ (fw[i] * pm_drift[:, vals])
            bnd_m[block] -= fV[i].T @ (fw[i] * pm_drift[:, vals])
            rhs_p[block] += fV[i].T @ (fw[i] * (fL[i] @ proj.delta_plus[i][:, vals]))
            rhs_m[block] += fV[i].T @ (fw[i] * (fL[i] @ proj.delta_minus[i][:, vals]))
            ibp[block] += fV[i].T @ (fw[i] * sn[:, vals])

    GXv, GYv = ws.basis.eval_grad(vrule.points)
    S = _eval_tensor(ws, proj.sigma_coeffs, V)
    divS = np.column_stack(
        [GXv[:, :nk] @ proj.sigma_coeffs[:nk]
         + (GYv[:, :nk] @ proj.sigma_coeffs[2 * nk :]) / _SQRT2,
         (GXv[:, :nk] @ proj.sigma_coeffs[2 * nk :]) / _SQRT2
         + GYv[:, :nk] @ proj.sigma_coeffs[nk : 2 * nk]]
    )
    if div_sigma is not None:
        ds = div_sigma(vrule.points)
        div_moments = np.concatenate(
            [V.T @ (w * (divS[:, 0] - ds[:, 0])), V.T @ (w * (divS[:, 1] - ds[:, 1]))]
        )
    else:
        sv = sym_to_mandel(sigma(vrule.points))
        sym_w = []
        for block in range(2):
            if block == 0:
                eps = _symgrad_mandel(GXv, np.zeros_like(GXv), GYv, np.zeros_like(GXv))
            else:
                eps = _symgrad_mandel(np.zeros_like(GXv), GXv, np.zeros_like(GXv), GYv)
            sym_w.append(np.einsum("pd,pjd,p->j", sv, eps, w))
        data = ibp - np.concatenate(sym_w)
        div_moments = np.concatenate(
            [V.T @ (w * divS[:, 0]), V.T @ (w * divS[:, 1])]
        ) - data
    res_c = max(
        float(np.abs(-div_moments + bnd_p - rhs_p).max()),
        float(np.abs(-div_moments + bnd_m - rhs_m).max()),
    )

    # rigid-motion face moments of the data, reported for diagnostics
    split = _symgrad_split(ws)
    rigid = np.zeros(3)
    for i in range(len(geom.faces)):
        n = geom.faces[i].normal
        sn = sym_to_mandel(sigma(vrule.face_points[i])) @ _normal_rows(n)
        pm_c = fL[i].T @ (fw[i][:, None] * sn)  # P_M through the elevated rule
        r = fL[i] @ pm_c - sn
        rigid += split.motion_basis.T @ np.concatenate(
            [fV[i].T @ (fw[i] * r[:, 0]), fV[i].T @ (fw[i] * r[:, 1])]
        )
    return ElasticResiduals(
        moments=res_a, boundary=res_b, divergence=res_c, rigid=float(np.abs(rigid).max())
    )


def elastic_errors(ws, proj, sigma, u):
    """Squared element errors (stress, displacement, remainder on the boundary)."""
    sv = sym_to_mandel(sigma(ws.pts))
    S = _eval_tensor(ws, proj.sigma_coeffs)
    es = float(np.sum(ws.w * ((S - sv) ** 2).sum(axis=1)))
    du = _eval_vector1(ws, proj.u_coeffs) - u(ws.pts)
    eu = float(np.sum(ws.w * (du * du).sum(axis=1)))
    ed = float(np.sum(proj.delta_plus**2))
    return es, eu, ed


def elastic_convergence_study(sigma, u, meshes, k, tau_c=1.0, q_deg=None, hs=None):
    """Errors and rates of the elastic projection over a mesh sequence.

    Reports the stress and displacement errors, the boundary remainder in the
    h^{1/2}-weighted norm, and the combined quantity
    (|S - sigma|^2 + h^{-2} |U - u|^2 + h |delta|^2)^{1/2} per level.
    ``hs`` substitutes nominal spacings for the measured h_max when the mesh
    family does not halve its max diameter exactly.
    """
    from .mesh import element_geometry
    from .polyquad import ElementWorkspace
    from .projection import fit_rate

    measured, es_, eu_, ed_, comb = [], [], [], [], []
    for mesh in meshes:
        ss = su = sd = sc = 0.0
        for ci in range(mesh.n_cells):
            geom = element_geometry(mesh, ci)
            ws = ElementWorkspace(geom, k, q_deg)
            tau = (tau_c / geom.h) * np.eye(2)
            proj = project_elastic(ws, sigma, u, tau)
            a, b, c = elastic_errors(ws, proj, sigma, u)
            ss += a
            su += b
            sd += c * geom.h
            sc += a + b / geom.h**2 + c * geom.h
        measured.append(mesh.h_max())
        es_.append(np.sqrt(ss))
        eu_.append(np.sqrt(su))
        ed_.append(np.sqrt(sd))
        comb.append(np.sqrt(sc))
    hs = np.asarray(measured if hs is None else hs, dtype=float)
    if len(hs) != len(meshes):
        raise ValueError("hs must provide one spacing per mesh")
    return {
        "h": hs,
        "h_max": np.array(measured),
        "err_sigma": np.array(es_),
        "err_u": np.array(eu_),
        "err_delta": np.array(ed_),
        "err_combined": np.array(comb),
        "rate_sigma": fit_rate(hs, es_),
        "rate_u": fit_rate(hs, eu_),
        "rate_delta": fit_rate(hs, ed_),
        "rate_combined": fit_rate(hs, comb),
    }
