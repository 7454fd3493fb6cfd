"""The HDG+ projection pair on a single element.

The flux projection maps a vector field into P_k^2 by prescribing its moments
against an L2 complement of grad P_{k+1} together with weak-divergence moments
against the non-constant part of P_{k+1}; the primal projection is the plain
L2 projection onto P_{k+1}.  The boundary remainder delta collects the face
mismatch of the pair and carries the stabilization weight tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .polyquad import build_quadrature, dim_pk

_RANK_TOL = 1e-10


class AssemblyError(RuntimeError):
    """A local space did not have the expected dimension."""


@dataclass(frozen=True)
class GradComplementSplit:
    """Split of the vector space P_k^2 into grad P_{k+1} and its L2 complement.

    Coefficients refer to the orthonormal vector basis, so L2 inner products
    are Euclidean.  ``grad_raw[:, m]`` holds the gradient of the (m+1)-th
    orthonormal scalar basis function; ``grad_basis`` and ``comp_basis`` are
    orthonormal bases of the two summands.
    """

    grad_raw: np.ndarray
    grad_basis: np.ndarray
    comp_basis: np.ndarray
    matrix: np.ndarray
    lu: tuple

    @property
    def dim_grad(self):
        return self.grad_basis.shape[1]

    @property
    def dim_comp(self):
        return self.comp_basis.shape[1]


@dataclass(frozen=True)
class HdgPlusProjection:
    """Projected pair plus its boundary remainder for both signs of tau.

    ``q_coeffs`` lives in the orthonormal vector P_k basis (x-block, y-block),
    ``u_coeffs`` in the orthonormal scalar P_{k+1} basis, and the remainders
    in the per-face orthonormal bases, shape (n_faces, k+1).
    """

    q_coeffs: np.ndarray
    u_coeffs: np.ndarray
    delta_plus: np.ndarray
    delta_minus: np.ndarray
    tau: float


@dataclass(frozen=True)
class ProjectionResiduals:
    moments: float
    boundary: float
    divergence: float

    def max(self):
        return max(self.moments, self.boundary, self.divergence)


def build_grad_complement(ws):
    """GradComplementSplit for the workspace's element and degree."""
    nk, n1 = ws.nk, ws.n1
    w = ws.w[:, None]
    Vk = ws.V[:, :nk]
    # (grad phi_m, Phi_j): gradients of the non-constant P_{k+1} functions
    Ax = (Vk * w).T @ ws.GX[:, 1:n1]
    Ay = (Vk * w).T @ ws.GY[:, 1:n1]
    raw = np.vstack([Ax, Ay])
    g = n1 - 1
    U, s, _ = np.linalg.svd(raw, full_matrices=True)
    rank = int(np.sum(s > _RANK_TOL * s[0]))
    if rank != g:
        raise AssemblyError(
            f"grad P_{ws.k + 1} has rank {rank}, expected {g}; element too degenerate"
        )
    grad_basis = U[:, :g]
    comp_basis = U[:, g:]
    matrix = np.vstack([comp_basis.T, raw.T])
    return GradComplementSplit(
        grad_raw=raw,
        grad_basis=grad_basis,
        comp_basis=comp_basis,
        matrix=matrix,
        lu=lu_factor(matrix),
    )


def _grad_split(ws):
    split = getattr(ws, "_hdgplus_grad_split", None)
    if split is None:
        split = build_grad_complement(ws)
        ws._hdgplus_grad_split = split
    return split


def _face_values(f, face_points):
    return [f(p) for p in face_points]


def project_hdg_plus(ws, q, u, tau, split=None):
    """HDG+ projection of the pair (q, u) with stabilization weight tau > 0.

    q maps (m, 2) points to (m, 2) values, u to (m,).  Returns the projected
    coefficient vectors and the boundary remainders for both signs of tau.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    split = _grad_split(ws) if split is None else split
    nk, n1 = ws.nk, ws.n1

    qc = ws.vector_coeffs(q)
    qn_vals = []
    for p, n in zip(ws.rule.face_points, ws.normals):
        qv = q(p)
        qn_vals.append(qv[:, 0] * n[0] + qv[:, 1] * n[1])
    qn_c = ws.face_scalar_coeffs(qn_vals)

    # <P_M(q.n) - q.n, phi_m> over the non-constant scalar functions
    bt = np.zeros(n1 - 1)
    for i, (L, w, Vf) in enumerate(zip(ws.fL, ws.fw, ws.fV)):
        resid = L @ qn_c[i] - qn_vals[i]
        bt += Vf[:, 1:n1].T @ (w * resid)

    rhs = np.concatenate([split.comp_basis.T @ qc, split.grad_raw.T @ qc + bt])
    x = lu_solve(split.lu, rhs)

    uc = ws.scalar_coeffs(u)

    Qn_c = np.empty_like(qn_c)
    for i, (Vf, n) in enumerate(zip(ws.fV, ws.normals)):
        Qf = np.column_stack([Vf[:, :nk] @ x[:nk], Vf[:, :nk] @ x[nk:]])
        Qn_c[i] = ws.fL[i].T @ (ws.fw[i] * (Qf[:, 0] * n[0] + Qf[:, 1] * n[1]))

    pu_proj = ws.face_scalar_coeffs([Vf @ uc for Vf in ws.fV])
    pu = ws.face_scalar_coeffs(_face_values(u, ws.rule.face_points))

    jump = pu_proj - pu
    delta_plus = Qn_c - qn_c + tau * jump
    delta_minus = Qn_c - qn_c - tau * jump
    return HdgPlusProjection(
        q_coeffs=x, u_coeffs=uc, delta_plus=delta_plus, delta_minus=delta_minus, tau=tau
    )


def verify_projection_identities(ws, proj, q, u, div_q=None, q_deg=None):
    """Residuals of the three identities the projected pair satisfies.

    Checks, for both signs of tau: the interior moments of the primal
    projection against P_{k-1}, the face identity relating the flux and primal
    mismatch to the boundary remainder, and the divergence identity against
    P_{k+1}.  Integrals of the (smooth) data use an elevated rule, by default
    four degrees above the construction rule.  ``div_q`` supplies the exact
    divergence of q; without it the divergence moments fall back to
    integration by parts of the data.
    """
    geom = ws.geom
    nk, n1 = ws.nk, ws.n1
    tau = proj.tau
    vrule = build_quadrature(geom, ws.q_deg + 4 if q_deg is None else q_deg)
    V = ws.basis.eval(vrule.points)
    w = vrule.weights

    uproj = V @ proj.u_coeffs
    uvals = u(vrule.points)
    dk = dim_pk(ws.k - 1)
    res_a = 0.0
    if dk > 0:
        res_a = float(np.abs(V[:, :dk].T @ (w * (uproj - uvals))).max())

    fV = [ws.basis.eval(p) for p in vrule.face_points]
    fL = [ws.face_basis.eval(i, s) for i, s in enumerate(vrule.face_s)]
    fw = vrule.face_weights

    res_b = 0.0
    res_c_bnd_p = np.zeros(n1)
    res_c_bnd_m = np.zeros(n1)
    rhs_c_p = np.zeros(n1)
    rhs_c_m = np.zeros(n1)
    ibp = np.zeros(n1)
    for i, f in enumerate(geom.faces):
        p, n = vrule.face_points[i], f.normal
        qv = q(p)
        qn = qv[:, 0] * n[0] + qv[:, 1] * n[1]
        uf = u(p)
        Qf = np.column_stack(
            [fV[i][:, :nk] @ proj.q_coeffs[:nk], fV[i][:, :nk] @ proj.q_coeffs[nk:]]
        )
        Qn = Qf[:, 0] * n[0] + Qf[:, 1] * n[1]
        upf = fV[i] @ proj.u_coeffs
        mismatch = Qn - qn
        drift = upf - uf
        lhs_p = fL[i].T @ (fw[i] * (mismatch + tau * drift))
        lhs_m = fL[i].T @ (fw[i] * (mismatch - tau * drift))
        res_b = max(
            res_b,
            float(np.abs(lhs_p - proj.delta_plus[i]).max()),
            float(np.abs(lhs_m - proj.delta_minus[i]).max()),
        )
        # face pieces of the divergence identity; the face projection of the
        # primal drift is recovered from the two remainder signs
        pm_drift = fL[i] @ ((proj.delta_plus[i] - proj.delta_minus[i]) / (2.0 * tau))
        res_c_bnd_p += fV[i].T @ (fw[i] * (tau * pm_drift))
        res_c_bnd_m -= fV[i].T @ (fw[i] * (tau * pm_drift))
        rhs_c_p += fV[i].T @ (fw[i] * (fL[i] @ proj.delta_plus[i]))
        rhs_c_m += fV[i].T @ (fw[i] * (fL[i] @ proj.delta_minus[i]))
        ibp += fV[i].T @ (fw[i] * qn)

    GXv, GYv = ws.basis.eval_grad(vrule.points)
    divQ = GXv[:, :nk] @ proj.q_coeffs[:nk] + GYv[:, :nk] @ proj.q_coeffs[nk:]
    if div_q is not None:
        div_moments = V.T @ (w * (divQ - div_q(vrule.points)))
    else:
        qvals = q(vrule.points)
        data = ibp - GXv.T @ (w * qvals[:, 0]) - GYv.T @ (w * qvals[:, 1])
        div_moments = V.T @ (w * divQ) - data
    res_c = max(
        float(np.abs(div_moments + res_c_bnd_p - rhs_c_p).max()),
        float(np.abs(div_moments + res_c_bnd_m - rhs_c_m).max()),
    )
    return ProjectionResiduals(moments=res_a, boundary=res_b, divergence=res_c)


def projection_errors(ws, proj, q, u):
    """Squared element errors of the projected pair and its remainder.

    Returns (|q_proj - q|^2, |u_proj - u|^2, tau^{-1} |delta_+|^2_dK).
    """
    qv = q(ws.pts)
    Q = ws.eval_vector(proj.q_coeffs)
    eq = float(np.sum(ws.w * ((Q[:, 0] - qv[:, 0]) ** 2 + (Q[:, 1] - qv[:, 1]) ** 2)))
    du = ws.V @ proj.u_coeffs - u(ws.pts)
    eu = float(np.sum(ws.w * du * du))
    ed = float(np.sum(proj.delta_plus**2) / proj.tau)
    return eq, eu, ed


def projection_convergence_study(q, u, meshes, k, tau_c=1.0, q_deg=None, hs=None):
    """Projection errors and fitted rates over a mesh sequence.

    tau is tau_c / h_K per element.  Returns a dict with mesh sizes, the
    L2 errors of both projections, the scaled remainder norm, and the
    least-squares slopes of each against h.  ``hs`` substitutes nominal
    spacings for the measured h_max, which keeps slopes unbiased on randomly
    perturbed families where the max diameter does not halve exactly.
    """
    from .mesh import element_geometry
    from .polyquad import ElementWorkspace

    measured, eqs, eus, eds = [], [], [], []
    for mesh in meshes:
        sq = su = sd = 0.0
        for ci in range(mesh.n_cells):
            geom = element_geometry(mesh, ci)
            ws = ElementWorkspace(geom, k, q_deg)
            proj = project_hdg_plus(ws, q, u, tau_c / geom.h)
            a, b, c = projection_errors(ws, proj, q, u)
            sq += a
            su += b
            sd += c
        measured.append(mesh.h_max())
        eqs.append(np.sqrt(sq))
        eus.append(np.sqrt(su))
        eds.append(np.sqrt(sd))
    hs = np.asarray(measured if hs is None else hs, dtype=float)
    if len(hs) != len(meshes):
        raise ValueError("hs must provide one spacing per mesh")
    return {
        "h": hs,
        "h_max": np.array(measured),
        "err_q": np.array(eqs),
        "err_u": np.array(eus),
        "err_delta": np.array(eds),
        "rate_q": fit_rate(hs, eqs),
        "rate_u": fit_rate(hs, eus),
        "rate_delta": fit_rate(hs, eds),
    }


def fit_rate(hs, errs, drop_first=False):
    """Least-squares slope of log(err) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if drop_first:
        hs, errs = hs[1:], errs[1:]
    if len(hs) < 2 or len(np.unique(hs)) < 2:
        raise ValueError("rate fit needs at least two distinct mesh sizes")
    if np.any(errs <= 0.0):
        raise ValueError("rate fit needs positive errors (an error vanished)")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
