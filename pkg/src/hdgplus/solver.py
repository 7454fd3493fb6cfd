"""Hybridized solver for -div(kappa grad u) = f with Dirichlet data.

Each element couples a P_k^2 flux and a P_{k+1} primal unknown to P_k face
traces; the numerical flux is q_h . n + tau P_M(u_h - uhat_h), so the
stabilization only ever sees the face projection of the primal variable.
Static condensation eliminates the element unknowns and leaves one symmetric
positive definite system on the mesh skeleton.

The error report recomputes the flux/primal projection pair on every element
with the solver's own quadrature, which makes the discrete energy identity
hold to roundoff plus the data-integration error of the rule.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lu_factor, lu_solve

from .mesh import element_geometry
from .polyquad import ElementWorkspace
from .projection import fit_rate, project_hdg_plus, projection_errors


class SolverError(RuntimeError):
    """Linear algebra or consistency failure while solving."""


def _element_map(fn, items):
    """Map fn over elements, threaded when HDGPLUS_THREADS > 1.

    Results keep the input order either way, so assembly downstream is
    deterministic.
    """
    try:
        n = int(os.environ.get("HDGPLUS_THREADS", "1"))
    except ValueError:
        n = 1
    items = list(items)
    if n > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# element-local operators


@dataclass
class LocalOperator:
    """Condensation data for one element.

    The inner unknowns x = (flux coeffs, primal coeffs) satisfy
    M x = fbig + bhat c for the element's stacked trace coefficients c, with
    M = [[-A, D1], [D1^T, tau T^T T]] kept in factored form.  The face rows
    of the global system receive schur = tau I - bhat^T M^{-1} bhat and
    rhs = bhat^T M^{-1} fbig.
    """

    cell_id: int
    tau: float
    A: np.ndarray
    D1: np.ndarray
    C: np.ndarray
    T: np.ndarray
    F: np.ndarray
    fbig: np.ndarray
    mlu: tuple
    bhat: np.ndarray
    schur: np.ndarray
    rhs: np.ndarray

    def inner_solution(self, c):
        return lu_solve(self.mlu, self.fbig + self.bhat @ c)


def assemble_local(ws, kappa, f, tau):
    """Build the condensed operator of one element.

    kappa and f are callables on (n, 2) point arrays; tau > 0 is the
    element's stabilization constant.
    """
    if tau <= 0.0:
        raise ValueError("stabilization tau must be positive")
    nk, n1 = ws.nk, ws.n1
    Vk = ws.V[:, :nk]
    wk = ws.w / kappa(ws.pts)
    Mw = Vk.T @ (wk[:, None] * Vk)
    A = np.zeros((2 * nk, 2 * nk))
    A[:nk, :nk] = Mw
    A[nk:, nk:] = Mw

    WV = ws.w[:, None] * ws.V
    D1 = np.vstack([ws.GX[:, :nk].T @ WV, ws.GY[:, :nk].T @ WV])
    T = np.vstack(ws.face_trace_matrix())
    C = np.hstack([fn.T for fn in ws.face_normal_matrix()])
    F = ws.scalar_coeffs(f)

    ni = 2 * nk + n1
    M = np.zeros((ni, ni))
    M[: 2 * nk, : 2 * nk] = -A
    M[: 2 * nk, 2 * nk :] = D1
    M[2 * nk :, : 2 * nk] = D1.T
    M[2 * nk :, 2 * nk :] = tau * (T.T @ T)
    try:
        mlu = lu_factor(M)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular local system on cell {ws.geom.cell_id}") from exc

    bhat = np.vstack([C, tau * T.T])
    fbig = np.concatenate([np.zeros(2 * nk), F])
    S = bhat.T @ lu_solve(mlu, bhat)
    S = 0.5 * (S + S.T)
    schur = tau * np.eye(bhat.shape[1]) - S
    rhs = bhat.T @ lu_solve(mlu, fbig)
    return LocalOperator(
        cell_id=ws.geom.cell_id,
        tau=tau,
        A=A,
        D1=D1,
        C=C,
        T=T,
        F=F,
        fbig=fbig,
        mlu=mlu,
        bhat=bhat,
        schur=schur,
        rhs=rhs,
    )


# ---------------------------------------------------------------------------
# global condensed system


@dataclass
class CondensedSystem:
    """Skeleton system K uhat = b with Dirichlet traces eliminated.

    Global trace dof (face f, mode m) sits at index f * n_modes + m.  The
    ``free``/``fixed`` index arrays partition the dofs; ``fixed_values``
    carries the projected Dirichlet data.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_modes: int

    @property
    def n_dofs(self):
        return self.matrix.shape[0]

    def reduced(self):
        K = self.matrix[self.free][:, self.free]
        b = self.rhs[self.free]
        if len(self.fixed):
            b = b - self.matrix[self.free][:, self.fixed] @ self.fixed_values
        return K, b

    def solve(self, method="direct", rtol=1e-12, maxiter=None):
        """Trace coefficients on every face, boundary rows already filled."""
        K, b = self.reduced()
        if len(self.free) == 0:
            x = np.zeros(0)
        elif method == "direct":
            x = spla.spsolve(K.tocsc(), b)
        elif method == "cg":
            try:
                x, info = spla.cg(K, b, rtol=rtol, atol=0.0, maxiter=maxiter)
            except TypeError:
                x, info = spla.cg(K, b, tol=rtol, atol=0.0, maxiter=maxiter)
            if info != 0:
                raise SolverError(f"cg failed to converge (info={info})")
        else:
            raise ValueError(f"unknown method {method!r}")
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solver produced non-finite trace values")
        full = np.zeros(self.n_dofs)
        full[self.free] = x
        if len(self.fixed):
            full[self.fixed] = self.fixed_values
        res = float(np.linalg.norm(K @ x - b)) if len(self.free) else 0.0
        scale = float(np.linalg.norm(b)) + 1e-300
        return full, res / scale


def condense(mesh, workspaces, locals_, dirichlet_values):
    """Assemble the global Schur complement and split off Dirichlet dofs."""
    nm = workspaces[0].k + 1
    nd = len(mesh.faces) * nm
    rows, cols, vals = [], [], []
    rhs = np.zeros(nd)
    for ci, op in enumerate(locals_):
        gd = np.concatenate(
            [np.arange(fi * nm, (fi + 1) * nm) for fi in mesh.cell_faces[ci]]
        )
        rows.append(np.repeat(gd, len(gd)))
        cols.append(np.tile(gd, len(gd)))
        vals.append(op.schur.ravel())
        np.add.at(rhs, gd, op.rhs)
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nd, nd),
    ).tocsr()

    # dof (f, m) -> f * nm + m, so ascending boundary face order matches the
    # layout _dirichlet_values produces
    fixed_mask = np.repeat(mesh.boundary, nm)
    fixed = np.flatnonzero(fixed_mask)
    free = np.flatnonzero(~fixed_mask)
    return CondensedSystem(
        matrix=K,
        rhs=rhs,
        free=free,
        fixed=fixed,
        fixed_values=dirichlet_values,
        n_modes=nm,
    )


def _dirichlet_values(mesh, workspaces, g):
    """P_k face projection of the Dirichlet data on each boundary face.

    Returned flat, boundary faces in ascending id order, modes innermost --
    the same layout the fixed-dof mask of the condensed system induces.
    """
    nm = workspaces[0].k + 1
    bfaces = np.flatnonzero(mesh.boundary)
    by_cell = {}
    for fi in bfaces:
        ci = int(mesh.face_cells[fi][0])
        if ci < 0:
            ci = int(mesh.face_cells[fi][1])
        by_cell.setdefault(ci, []).append(fi)
    out = {}
    for ci, fis in by_cell.items():
        coeffs = workspaces[ci].face_scalar_coeffs(g)
        local = list(mesh.cell_faces[ci])
        for fi in fis:
            out[fi] = coeffs[local.index(fi)]
    vals = np.zeros(len(bfaces) * nm)
    for j, fi in enumerate(bfaces):
        vals[j * nm : (j + 1) * nm] = out[fi]
    return vals


# ---------------------------------------------------------------------------
# driver


@dataclass
class SolverResult:
    """Discrete solution plus everything needed to audit it."""

    mesh: object
    k: int
    tau_c: float
    taus: np.ndarray
    q: np.ndarray
    u: np.ndarray
    uhat: np.ndarray
    residuals: dict
    system: CondensedSystem
    workspaces: list = field(repr=False)
    locals_: list = field(repr=False)


def solve(mesh, problem, k, *, tau_c=1.0, q_deg=None, method="direct", rtol=1e-12):
    """Solve the hybridized scheme on ``mesh`` at degree ``k``.

    ``problem`` provides callables kappa, f and g (Dirichlet trace of u).
    tau on each element is tau_c / h_K.  Returns a SolverResult whose
    ``residuals`` entries are relative consistency checks of the three
    scheme equations evaluated on the computed solution.
    """
    if k < 0:
        raise ValueError("polynomial degree k must be nonnegative")
    if tau_c <= 0.0:
        raise ValueError("stabilization constant tau_c must be positive")
    nc = len(mesh.cells)
    workspaces = _element_map(
        lambda ci: ElementWorkspace(element_geometry(mesh, ci), k, q_deg), range(nc)
    )
    taus = np.array([tau_c / ws.geom.h for ws in workspaces])
    locals_ = _element_map(
        lambda i: assemble_local(workspaces[i], problem.kappa, problem.f, taus[i]),
        range(nc),
    )
    dvals = _dirichlet_values(mesh, workspaces, problem.g)
    system = condense(mesh, workspaces, locals_, dvals)
    full, lin_res = system.solve(method=method, rtol=rtol)

    nm = k + 1
    uhat = full.reshape(len(mesh.faces), nm)
    nk, n1 = workspaces[0].nk, workspaces[0].n1
    q = np.empty((nc, 2 * nk))
    u = np.empty((nc, n1))
    res_flux = res_primal = 0.0
    qhat = np.zeros((len(mesh.faces), nm))
    qhat_scale = np.zeros(len(mesh.faces))
    for ci, op in enumerate(locals_):
        c = np.concatenate([uhat[fi] for fi in mesh.cell_faces[ci]])
        x = op.inner_solution(c)
        a, b = x[: 2 * nk], x[2 * nk :]
        q[ci], u[ci] = a, b

        r1 = op.A @ a - op.D1 @ b + op.C @ c
        s1 = sum(np.linalg.norm(v) for v in (op.A @ a, op.D1 @ b, op.C @ c))
        res_flux = max(res_flux, np.linalg.norm(r1) / max(s1, 1e-30))
        r2 = op.D1.T @ a + op.tau * (op.T.T @ (op.T @ b)) - op.tau * (op.T.T @ c) - op.F
        s2 = sum(
            np.linalg.norm(v)
            for v in (op.D1.T @ a, op.tau * (op.T.T @ (op.T @ b)), op.tau * (op.T.T @ c), op.F)
        )
        res_primal = max(res_primal, np.linalg.norm(r2) / max(s2, 1e-30))

        flux_c = op.C.T @ a + op.tau * (op.T @ b - c)
        flux_n = op.C.T @ a
        trace_n = op.T @ b
        for j, fi in enumerate(mesh.cell_faces[ci]):
            sl = slice(j * nm, (j + 1) * nm)
            qhat[fi] += flux_c[sl]
            # scale by the ingredients, not the (cancelling) sum
            s = (
                np.linalg.norm(flux_n[sl])
                + op.tau * np.linalg.norm(trace_n[sl])
                + op.tau * np.linalg.norm(c[sl])
            )
            qhat_scale[fi] = max(qhat_scale[fi], s)

    interior = ~mesh.boundary
    res_cont = 0.0
    for fi in np.flatnonzero(interior):
        res_cont = max(
            res_cont, np.linalg.norm(qhat[fi]) / max(qhat_scale[fi], 1e-30)
        )

    residuals = {
        "local_flux": float(res_flux),
        "local_primal": float(res_primal),
        "continuity": float(res_cont),
        "linear": float(lin_res),
    }
    return SolverResult(
        mesh=mesh,
        k=k,
        tau_c=tau_c,
        taus=taus,
        q=q,
        u=u,
        uhat=uhat,
        residuals=residuals,
        system=system,
        workspaces=workspaces,
        locals_=locals_,
    )


# ---------------------------------------------------------------------------
# error measurement


@dataclass
class ErrorReport:
    """Norms of the solver error split into its analytic ingredients.

    err_uhat uses the scaled trace norm with weight h_K per element side;
    energy_lhs/energy_rhs are the two sides of the discrete energy identity
    for the projected errors and energy_rel their mismatch relative to the
    size of the participating terms.  est is the projection-only upper bound
    sqrt(|kappa^{-1/2}(Pq - q)|^2 + |tau^{-1/2} delta|^2) that must dominate
    sqrt(energy_lhs).
    """

    err_q: float
    err_u: float
    err_uhat: float
    eps_q: float
    eps_u: float
    proj_q: float
    proj_u: float
    jump: float
    delta_tau: float
    qk: float
    energy_lhs: float
    energy_rhs: float
    energy_rel: float
    est: float
    h_max: float
    n_cells: int

    def as_dict(self):
        return {
            "err_q": self.err_q,
            "err_u": self.err_u,
            "err_uhat": self.err_uhat,
            "eps_q": self.eps_q,
            "eps_u": self.eps_u,
            "proj_q": self.proj_q,
            "proj_u": self.proj_u,
            "jump": self.jump,
            "delta_tau": self.delta_tau,
            "qk": self.qk,
            "energy_lhs": self.energy_lhs,
            "energy_rhs": self.energy_rhs,
            "energy_rel": self.energy_rel,
            "est": self.est,
            "h_max": self.h_max,
            "n_cells": self.n_cells,
        }


def compute_errors(result, problem):
    """Measure the solution of ``result`` against the manufactured fields.

    Projections are rebuilt with the solver's workspaces so every inner
    product in the energy identity uses the same quadrature the scheme was
    assembled with.
    """
    mesh, k = result.mesh, result.k
    nm = k + 1
    acc = {
        name: 0.0
        for name in (
            "err_q",
            "err_u",
            "err_uhat",
            "eps_q",
            "eps_u",
            "proj_q",
            "proj_u",
            "jump",
            "delta",
            "qk",
        )
    }
    e_lhs_q = e_lhs_j = e_rhs_q = e_rhs_d = 0.0
    est_q = 0.0
    sol_energy = 0.0
    h_max = 0.0
    for ci, ws in enumerate(result.workspaces):
        op = result.locals_[ci]
        tau = result.taus[ci]
        h_max = max(h_max, ws.geom.h)
        proj = project_hdg_plus(ws, problem.q, problem.u, tau)
        pq2, pu2, pd2 = projection_errors(ws, proj, problem.q, problem.u)
        acc["proj_q"] += pq2
        acc["proj_u"] += pu2
        acc["delta"] += pd2

        a, b = result.q[ci], result.u[ci]
        c = np.concatenate([result.uhat[fi] for fi in mesh.cell_faces[ci]])

        qx = problem.q(ws.pts)
        qh = ws.eval_vector(a)
        acc["err_q"] += float(ws.w @ np.sum((qx - qh) ** 2, axis=1))
        ux = problem.u(ws.pts)
        uh = ws.eval_scalar(b)
        acc["err_u"] += float(ws.w @ (ux - uh) ** 2)

        eq = proj.q_coeffs - a
        eu = proj.u_coeffs - b
        acc["eps_q"] += float(eq @ eq)
        acc["eps_u"] += float(eu @ eu)
        sol_energy += float(a @ (op.A @ a))

        pmu = ws.face_scalar_coeffs(problem.u)
        traces = ws.face_trace_matrix()
        kw = ws.w / problem.kappa(ws.pts)
        gq = ws.eval_vector(proj.q_coeffs) - qx
        eqv = ws.eval_vector(eq)
        e_lhs_q += float(eq @ (op.A @ eq))
        e_rhs_q += float(kw @ np.sum(gq * eqv, axis=1))
        est_q += float(kw @ np.sum(gq * gq, axis=1))
        for j, fi in enumerate(mesh.cell_faces[ci]):
            chat = result.uhat[fi]
            ehat = pmu[j] - chat
            z = traces[j] @ eu - ehat
            e_lhs_j += tau * float(z @ z)
            e_rhs_d += float(proj.delta_plus[j] @ z)

            jmp = traces[j] @ b - chat
            acc["jump"] += tau * float(jmp @ jmp)
            acc["err_uhat"] += ws.geom.h * float(ehat @ ehat)

            dq = ws.eval_vector(proj.q_coeffs, ws.rule.face_points[j]) - problem.q(
                ws.rule.face_points[j]
            )
            acc["qk"] += ws.geom.h * float(ws.fw[j] @ np.sum(dq * dq, axis=1))

    energy_lhs = e_lhs_q + e_lhs_j
    energy_rhs = e_rhs_q + e_rhs_d
    # the floor keeps the measure meaningful when the scheme reproduces the
    # data exactly and every error term sits at roundoff
    scale = abs(e_lhs_q) + abs(e_lhs_j) + abs(e_rhs_q) + abs(e_rhs_d)
    scale = max(scale, 1e-14 * (sol_energy + acc["jump"]), 1e-300)
    energy_rel = abs(energy_lhs - energy_rhs) / scale
    est = math.sqrt(max(est_q + acc["delta"], 0.0))
    return ErrorReport(
        err_q=math.sqrt(acc["err_q"]),
        err_u=math.sqrt(acc["err_u"]),
        err_uhat=math.sqrt(acc["err_uhat"]),
        eps_q=math.sqrt(acc["eps_q"]),
        eps_u=math.sqrt(acc["eps_u"]),
        proj_q=math.sqrt(acc["proj_q"]),
        proj_u=math.sqrt(acc["proj_u"]),
        jump=math.sqrt(acc["jump"]),
        delta_tau=math.sqrt(acc["delta"]),
        qk=math.sqrt(acc["qk"]),
        energy_lhs=energy_lhs,
        energy_rhs=energy_rhs,
        energy_rel=energy_rel,
        est=est,
        h_max=h_max,
        n_cells=len(mesh.cells),
    )


def convergence_study(
    problem,
    meshes,
    k,
    *,
    tau_c=1.0,
    q_deg=None,
    method="direct",
    drop_first=True,
    hs=None,
):
    """Solve on a mesh sequence and fit convergence rates.

    Rates come from a least squares fit of log error against log h; the
    coarsest level is excluded from the fit by default.  ``hs`` overrides the
    measured per-level h_max with nominal spacings: on randomly perturbed
    families the max element diameter drifts away from exact halving and
    would bias the fitted slopes.
    """
    reports, residual_max = [], 0.0
    measured, residuals, n_dofs, n_free = [], [], [], []
    for mesh in meshes:
        result = solve(mesh, problem, k, tau_c=tau_c, q_deg=q_deg, method=method)
        residual_max = max(residual_max, max(result.residuals.values()))
        residuals.append(dict(result.residuals))
        n_dofs.append(result.system.n_dofs)
        n_free.append(len(result.system.free))
        rep = compute_errors(result, problem)
        reports.append(rep)
        measured.append(rep.h_max)
    hs = np.asarray(measured if hs is None else hs, dtype=float)
    if len(hs) != len(meshes):
        raise ValueError("hs must provide one spacing per mesh")
    out = {
        "h": hs,
        "h_max": np.asarray(measured),
        "n_cells": np.array([r.n_cells for r in reports]),
        "n_dofs": np.array(n_dofs),
        "n_free": np.array(n_free),
        "residuals": residuals,
        "reports": reports,
        "residual_max": residual_max,
    }
    for name in ("err_q", "err_u", "err_uhat", "eps_q", "eps_u", "delta_tau", "jump"):
        errs = np.array([getattr(r, name) for r in reports])
        out[name] = errs
        drop = drop_first and len(hs) >= 3
        try:
            out["rate_" + name.removeprefix("err_")] = fit_rate(
                hs, errs, drop_first=drop
            )
        except ValueError:
            out["rate_" + name.removeprefix("err_")] = float("nan")
    out["energy_rel"] = np.array([r.energy_rel for r in reports])
    out["qk"] = np.array([r.qk for r in reports])
    return out
