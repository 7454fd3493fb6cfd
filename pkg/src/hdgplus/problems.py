"""Manufactured solutions with closed-form derivatives.

The diffusion pipeline is u -> q = -kappa grad u -> f = div q, all evaluated
analytically so solver studies measure discretization error only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIFFUSION_PROBLEMS = ("trig", "poly-1", "poly-2", "poly-3", "varkappa")
ELASTICITY_PROBLEMS = ("elastic-trig",)


@dataclass(frozen=True)
class DiffusionProblem:
    name: str
    u: callable
    grad_u: callable
    kappa: callable
    f: callable

    def q(self, p):
        return -self.kappa(p)[:, None] * self.grad_u(p)

    def g(self, p):
        return self.u(p)

    def div_q(self, p):
        return self.f(p)


@dataclass(frozen=True)
class ElasticityProblem:
    name: str
    u: callable
    sigma: callable
    div_sigma: callable


class PolyField2D:
    """Bivariate polynomial with exact derivative manipulation.

    ``coeffs`` maps exponent pairs (a, b) to coefficients.
    """

    def __init__(self, coeffs):
        self.coeffs = {k: float(v) for k, v in coeffs.items() if v != 0.0}

    def __call__(self, p):
        out = np.zeros(len(p))
        for (a, b), c in self.coeffs.items():
            out += c * p[:, 0] ** a * p[:, 1] ** b
        return out

    def dx(self):
        return PolyField2D({(a - 1, b): a * c for (a, b), c in self.coeffs.items() if a})

    def dy(self):
        return PolyField2D({(a, b - 1): b * c for (a, b), c in self.coeffs.items() if b})

    @property
    def degree(self):
        return max((a + b for a, b in self.coeffs), default=0)


def _trig():
    def u(p):
        return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])

    def grad_u(p):
        return np.column_stack(
            [np.pi * np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
             np.pi * np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])]
        )

    def kappa(p):
        return np.ones(len(p))

    def f(p):
        return 2.0 * np.pi**2 * u(p)

    return DiffusionProblem("trig", u, grad_u, kappa, f)


def _poly(p_deg):
    # all monomials up to the requested degree, fixed harmless coefficients
    u_poly = PolyField2D(
        {(a, b): 1.0 / (1 + a + 2 * b) for a in range(p_deg + 1) for b in range(p_deg + 1 - a)}
    )
    ux, uy = u_poly.dx(), u_poly.dy()
    uxx, uyy = ux.dx(), uy.dy()

    def u(p):
        return u_poly(p)

    def grad_u(p):
        return np.column_stack([ux(p), uy(p)])

    def kappa(p):
        return np.ones(len(p))

    def f(p):
        return -(uxx(p) + uyy(p))

    return DiffusionProblem(f"poly-{p_deg}", u, grad_u, kappa, f)


def _varkappa():
    # kappa = 2 + sin(x y) over the trig solution
    base = _trig()

    def kappa(p):
        return 2.0 + np.sin(p[:, 0] * p[:, 1])

    def f(p):
        x, y = p[:, 0], p[:, 1]
        gk = np.column_stack([y * np.cos(x * y), x * np.cos(x * y)])
        gu = base.grad_u(p)
        return -np.sum(gk * gu, axis=1) + kappa(p) * (2.0 * np.pi**2 * base.u(p))

    return DiffusionProblem("varkappa", base.u, base.grad_u, kappa, f)


def diffusion_problem(name):
    """Manufactured diffusion problem from the built-in catalog."""
    if name == "trig":
        return _trig()
    if name == "varkappa":
        return _varkappa()
    if name.startswith("poly-"):
        try:
            deg = int(name.split("-", 1)[1])
        except ValueError:
            deg = -1
        if deg >= 0:
            return _poly(deg)
    raise ValueError(f"unknown problem {name!r}; choose from {DIFFUSION_PROBLEMS}")


def elasticity_problem(name="elastic-trig"):
    """Manufactured elasticity pair: u = (sin pi x sin pi y, x^2 y), sigma = eps(u)."""
    if name != "elastic-trig":
        raise ValueError(f"unknown problem {name!r}; choose from {ELASTICITY_PROBLEMS}")

    def u(p):
        return np.column_stack(
            [np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]), p[:, 0] ** 2 * p[:, 1]]
        )

    def sigma(p):
        x, y = p[:, 0], p[:, 1]
        u1x = np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
        u1y = np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
        u2x = 2.0 * x * y
        u2y = x**2
        S = np.empty((len(p), 2, 2))
        S[:, 0, 0] = u1x
        S[:, 1, 1] = u2y
        S[:, 0, 1] = S[:, 1, 0] = 0.5 * (u1y + u2x)
        return S

    def div_sigma(p):
        x, y = p[:, 0], p[:, 1]
        ss = np.sin(np.pi * x) * np.sin(np.pi * y)
        cc = np.cos(np.pi * x) * np.cos(np.pi * y)
        d1 = -np.pi**2 * ss + 0.5 * (-np.pi**2 * ss + 2.0 * x)
        d2 = 0.5 * (np.pi**2 * cc + 2.0 * y)
        return np.column_stack([d1, d2])

    return ElasticityProblem("elastic-trig", u, sigma, div_sigma)
