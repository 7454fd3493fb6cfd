"""Quadrature and orthonormal polynomial bases on star-shaped polygons.

Element rules are Duffy-type tensor Gauss rules on the star-center fan, exact
to a requested total degree.  Element bases are scaled monomials
((x - x_K) / h_K)^alpha orthonormalized by a Cholesky factorization of the
Gram matrix; face bases are Legendre polynomials in the arc-length parameter
of each face, orthonormal per face.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander
from scipy.linalg import solve_triangular


class GramFactorizationError(RuntimeError):
    """Gram matrix failed to factor; the quadrature rule is too weak."""


def dim_pk(k):
    """Dimension of total-degree-k polynomials in two variables (0 for k < 0)."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def monomial_exponents(k):
    """Graded ordering (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ..."""
    return np.array([(d - i, i) for d in range(k + 1) for i in range(d + 1)], dtype=int)


@lru_cache(maxsize=None)
def gauss1d(n):
    x, w = leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def duffy_triangle_rule(q_deg):
    """Tensor Gauss rule on the reference triangle, exact to total degree q_deg.

    The square is collapsed onto the triangle by (u, v) = (s, t (1 - s)); the
    Jacobian raises the s-degree by one, so n points per direction suffice
    once 2n - 1 >= q_deg + 1.
    """
    n = max(1, math.ceil((q_deg + 2) / 2))
    x, w = gauss1d(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    u = S
    v = T * (1.0 - S)
    wgt = WS * WT * (1.0 - S)
    return np.column_stack([u.ravel(), v.ravel()]), wgt.ravel()


@dataclass(frozen=True)
class QuadratureRule:
    """Element rule over the fan plus one rule per face.

    Face nodes run along the canonical face direction; ``face_s`` stores the
    corresponding parameter values in [-1, 1].
    """

    q_deg: int
    points: np.ndarray
    weights: np.ndarray
    face_points: tuple[np.ndarray, ...]
    face_weights: tuple[np.ndarray, ...]
    face_s: tuple[np.ndarray, ...]


def default_exactness(k):
    """Covers all products of the degree-(k+1) space plus mildly varying data."""
    return 2 * (k + 2) + 2


def build_quadrature(geom, q_deg):
    ref_pts, ref_w = duffy_triangle_rule(q_deg)
    pts, wts = [], []
    for tri in geom.simplices:
        a, b, c = tri
        jac = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        pts.append(a + np.outer(ref_pts[:, 0], b - a) + np.outer(ref_pts[:, 1], c - a))
        wts.append(ref_w * jac)
    n_face = max(1, math.ceil((q_deg + 1) / 2))
    s, w = gauss1d(n_face)
    fpts, fwts, fss = [], [], []
    for f in geom.faces:
        mid = 0.5 * (f.p0 + f.p1)
        half = 0.5 * (f.p1 - f.p0)
        fpts.append(mid + np.outer(s, half))
        fwts.append(w * (f.length / 2.0))
        fss.append(s)
    return QuadratureRule(
        q_deg=q_deg,
        points=np.vstack(pts),
        weights=np.concatenate(wts),
        face_points=tuple(fpts),
        face_weights=tuple(fwts),
        face_s=tuple(fss),
    )


class ElementBasis:
    """Orthonormal basis of P_k on one element.

    Scaled monomials in graded order are orthonormalized against the element
    quadrature rule; the change of basis is lower triangular, so the leading
    dim_pk(m) functions form the orthonormal basis of P_m for every m <= k.
    """

    def __init__(self, k, center, scale, linv):
        self.k = k
        self.center = center
        self.scale = scale
        self.linv = linv
        self.exponents = monomial_exponents(k)
        self.dim = dim_pk(k)

    @staticmethod
    def build(geom, k, rule):
        exps = monomial_exponents(k)
        V = _monomial_values(exps, geom.star_center, geom.h, rule.points)
        G = (V * rule.weights[:, None]).T @ V
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise GramFactorizationError(
                f"Gram matrix of degree-{k} basis is not positive definite; "
                f"rule exactness {rule.q_deg} is below the required {2 * k}"
            ) from exc
        linv = solve_triangular(L, np.eye(len(G)), lower=True)
        return ElementBasis(k, geom.star_center.copy(), geom.h, linv)

    def subbasis(self, m):
        """Orthonormal basis of P_m sharing this basis's leading functions."""
        if m > self.k:
            raise ValueError(f"cannot extract degree {m} from a degree-{self.k} basis")
        n = dim_pk(m)
        return ElementBasis(m, self.center, self.scale, self.linv[:n, :n])

    def eval(self, pts):
        V = _monomial_values(self.exponents, self.center, self.scale, pts)
        return V @ self.linv.T

    def eval_grad(self, pts):
        GX, GY = _monomial_gradients(self.exponents, self.center, self.scale, pts)
        return GX @ self.linv.T, GY @ self.linv.T


def _monomial_values(exps, center, scale, pts):
    xi = (pts[:, 0] - center[0]) / scale
    eta = (pts[:, 1] - center[1]) / scale
    V = np.empty((len(pts), len(exps)))
    for j, (a, b) in enumerate(exps):
        V[:, j] = xi**a * eta**b
    return V


def _monomial_gradients(exps, center, scale, pts):
    xi = (pts[:, 0] - center[0]) / scale
    eta = (pts[:, 1] - center[1]) / scale
    GX = np.zeros((len(pts), len(exps)))
    GY = np.zeros((len(pts), len(exps)))
    for j, (a, b) in enumerate(exps):
        if a > 0:
            GX[:, j] = (a / scale) * xi ** (a - 1) * eta**b
        if b > 0:
            GY[:, j] = (b / scale) * xi**a * eta ** (b - 1)
    return GX, GY


class FaceBasis:
    """Per-face orthonormal Legendre bases of degree k in the face parameter."""

    def __init__(self, geom, k):
        self.k = k
        self.n_modes = k + 1
        self.n_faces = len(geom.faces)
        self.lengths = np.array([f.length for f in geom.faces])
        self._norms = [
            np.sqrt((2.0 * np.arange(k + 1) + 1.0) / ln) for ln in self.lengths
        ]

    def eval(self, face, s):
        """Values of the face-``face`` basis at parameter values s in [-1, 1]."""
        return legvander(np.asarray(s, dtype=float), self.k) * self._norms[face]


class ElementWorkspace:
    """Everything repeatedly needed on one element for a given degree k.

    Holds the quadrature rule, the orthonormal P_{k+1} basis (its leading
    block is the P_k basis), the face bases, and their evaluations at the
    quadrature nodes.  Scalar coefficient vectors refer to the orthonormal
    basis; vector fields use an x-block then y-block layout of P_k
    coefficients.
    """

    def __init__(self, geom, k, q_deg=None):
        if k < 0:
            raise ValueError("polynomial degree k must be nonnegative")
        self.geom = geom
        self.k = k
        self.q_deg = default_exactness(k) if q_deg is None else q_deg
        self.rule = build_quadrature(geom, self.q_deg)
        self.basis = ElementBasis.build(geom, k + 1, self.rule)
        self.face_basis = FaceBasis(geom, k)
        self.nk = dim_pk(k)
        self.n1 = dim_pk(k + 1)
        self.w = self.rule.weights
        self.pts = self.rule.points
        self.V = self.basis.eval(self.pts)  # (npts, n1)
        self.GX, self.GY = self.basis.eval_grad(self.pts)
        self.fV = [self.basis.eval(p) for p in self.rule.face_points]
        self.fL = [
            self.face_basis.eval(i, s) for i, s in enumerate(self.rule.face_s)
        ]
        self.fw = list(self.rule.face_weights)
        self.normals = [f.normal for f in geom.faces]

    # -- projections ------------------------------------------------------

    def scalar_coeffs(self, f, degree=None):
        """L2 projection of a scalar field onto P_degree (default k+1)."""
        vals = f(self.pts) if callable(f) else np.asarray(f, dtype=float)
        c = self.V.T @ (self.w * vals)
        return c if degree is None else c[: dim_pk(degree)]

    def vector_coeffs(self, f):
        """L2 projection of a vector field onto P_k^2, x-block then y-block."""
        vals = f(self.pts) if callable(f) else np.asarray(f, dtype=float)
        Vk = self.V[:, : self.nk]
        return np.concatenate([Vk.T @ (self.w * vals[:, 0]), Vk.T @ (self.w * vals[:, 1])])

    def face_scalar_coeffs(self, f):
        """Per-face L2 projection onto the face space, shape (n_faces, k+1)."""
        out = np.empty((self.face_basis.n_faces, self.face_basis.n_modes))
        for i, (p, L, w) in enumerate(zip(self.rule.face_points, self.fL, self.fw)):
            vals = f(p) if callable(f) else np.asarray(f[i], dtype=float)
            out[i] = L.T @ (w * vals)
        return out

    def face_vector_coeffs(self, f):
        """Componentwise face projection of a vector field, (n_faces, k+1, 2)."""
        out = np.empty((self.face_basis.n_faces, self.face_basis.n_modes, 2))
        for i, (p, L, w) in enumerate(zip(self.rule.face_points, self.fL, self.fw)):
            vals = f(p) if callable(f) else np.asarray(f[i], dtype=float)
            out[i, :, 0] = L.T @ (w * vals[:, 0])
            out[i, :, 1] = L.T @ (w * vals[:, 1])
        return out

    # -- evaluation -------------------------------------------------------

    def eval_scalar(self, coeffs, pts=None):
        V = self.V if pts is None else self.basis.eval(pts)
        return V[:, : len(coeffs)] @ coeffs

    def eval_vector(self, coeffs, pts=None):
        V = self.V if pts is None else self.basis.eval(pts)
        Vk = V[:, : self.nk]
        return np.column_stack([Vk @ coeffs[: self.nk], Vk @ coeffs[self.nk :]])

    # -- element matrices --------------------------------------------------

    def mass_matrix(self, degree=None, weight=None):
        """Gram matrix of the scalar basis, optionally weighted pointwise."""
        n = self.n1 if degree is None else dim_pk(degree)
        V = self.V[:, :n]
        w = self.w if weight is None else self.w * weight(self.pts)
        return (V * w[:, None]).T @ V

    def grad_inner(self):
        """(d/dx phi_i, psi_m) and (d/dy phi_i, psi_m) for the full basis."""
        Mx = (self.GX * self.w[:, None]).T @ self.V
        My = (self.GY * self.w[:, None]).T @ self.V
        return Mx, My

    def face_trace_matrix(self):
        """Per-face matrices <psi_m, chi_alpha>, list of (k+1, n1)."""
        return [
            L.T @ (w[:, None] * Vf)
            for L, w, Vf in zip(self.fL, self.fw, self.fV)
        ]

    def face_normal_matrix(self):
        """Per-face matrices <chi_alpha, Phi_j . n> over the vector basis.

        Returns a list of (k+1, 2 nk) blocks, x-components first.
        """
        out = []
        for L, w, Vf, n in zip(self.fL, self.fw, self.fV, self.normals):
            T = L.T @ (w[:, None] * Vf[:, : self.nk])
            out.append(np.hstack([n[0] * T, n[1] * T]))
        return out


def build_element_basis(geom, k, rule=None, q_deg=None):
    """Orthonormal P_k basis on an element (builds a rule when not given)."""
    if rule is None:
        rule = build_quadrature(geom, default_exactness(k) if q_deg is None else q_deg)
    return ElementBasis.build(geom, k, rule)


def l2_project_element(f, basis, rule):
    """Coefficients of the L2 projection of f onto the span of ``basis``.

    Scalar fields return (dim,), vector fields (2 dim,) with x-block first.
    """
    vals = f(rule.points) if callable(f) else np.asarray(f, dtype=float)
    V = basis.eval(rule.points)
    if vals.ndim == 1:
        return V.T @ (rule.weights * vals)
    return np.concatenate(
        [V.T @ (rule.weights * vals[:, 0]), V.T @ (rule.weights * vals[:, 1])]
    )


def l2_project_face(f, geom, k, rule):
    """Per-face projection coefficients of a scalar field on each face."""
    fb = FaceBasis(geom, k)
    out = np.empty((len(geom.faces), k + 1))
    for i, (p, s, w) in enumerate(zip(rule.face_points, rule.face_s, rule.face_weights)):
        vals = f(p) if callable(f) else np.asarray(f[i], dtype=float)
        out[i] = fb.eval(i, s).T @ (w * vals)
    return out


def greens_monomial_integral(coords, a, b):
    """Exact integral of x^a y^b over a polygon via a boundary line integral.

    Independent of the fan construction: int_K x^a y^b equals
    (1/(a+1)) times the flux of x^(a+1) y^b through the boundary.
    """
    n = max(1, math.ceil((a + b + 2) / 2) + 1)
    t, w = gauss1d(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    total = 0.0
    nv = len(coords)
    for i in range(nv):
        p, q = coords[i], coords[(i + 1) % nv]
        x = p[0] + t * (q[0] - p[0])
        y = p[1] + t * (q[1] - p[1])
        total += (q[1] - p[1]) * np.sum(w * x ** (a + 1) * y**b)
    return total / (a + 1)
