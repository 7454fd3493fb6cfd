"""Project a smooth pair (q, u) onto one polygonal element and audit it.

The pair projection couples the flux and primal fields through the element
boundary: the flux part matches q on an L2 complement of gradients and picks
up a face correction, the primal part is the plain L2 projection one degree
higher.  The defining identities hold to machine precision, and the boundary
remainder splits into a flux mismatch and a primal drift that can be switched
off independently by choosing data inside either local space.
"""

import os

import numpy as np

from hdgplus import (
    ElementWorkspace,
    diffusion_problem,
    element_geometry_from_coords,
    project_hdg_plus,
    projection_errors,
    random_star_polygon,
    verify_projection_identities,
)

OUT = os.path.join(os.path.dirname(__file__), "output")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None


def main():
    os.makedirs(OUT, exist_ok=True)
    prob = diffusion_problem("trig")
    coords = random_star_polygon(6, seed=7)
    g = element_geometry_from_coords(coords)
    print(f"element: hexagon with h={g.h:.3f}, rho={g.rho:.3f}")

    print(f"\n{'k':>2} {'|q_proj - q|':>14} {'|u_proj - u|':>14} "
          f"{'|delta|':>12} {'identity max':>13}")
    for k in (0, 1, 2):
        ws = ElementWorkspace(g, k, q_deg=18)
        proj = project_hdg_plus(ws, prob.q, prob.u, tau=1.0 / g.h)
        eq, eu, ed = projection_errors(ws, proj, prob.q, prob.u)
        res = verify_projection_identities(ws, proj, prob.q, prob.u, div_q=prob.div_q)
        print(
            f"{k:>2} {np.sqrt(eq):>14.3e} {np.sqrt(eu):>14.3e} "
            f"{np.sqrt(ed):>12.3e} {res.max():>13.3e}"
        )

    # the two remainder components respond to different parts of the data
    ws = ElementWorkspace(g, 1)
    zero_v = lambda p: np.zeros((len(p), 2))
    zero_s = lambda p: np.zeros(len(p))
    only_u = project_hdg_plus(ws, zero_v, lambda p: p[:, 0] ** 4, tau=2.0)
    only_q = project_hdg_plus(
        ws, lambda p: np.column_stack([p[:, 0] ** 3, p[:, 1] ** 3]), zero_s, tau=2.0
    )
    print("\nboundary remainder split (k=1, tau=2):")
    print(f"  u-only data: |delta+ + delta-| = {np.abs(only_u.delta_plus + only_u.delta_minus).max():.2e}"
          f"  (pure primal drift)")
    print(f"  q-only data: |delta+ - delta-| = {np.abs(only_q.delta_plus - only_q.delta_minus).max():.2e}"
          f"  (pure flux mismatch)")

    if plt is not None:
        ws = ElementWorkspace(g, 1, q_deg=18)
        proj = project_hdg_plus(ws, prob.q, prob.u, tau=1.0 / g.h)
        n = 160
        xs = np.linspace(coords[:, 0].min(), coords[:, 0].max(), n)
        ys = np.linspace(coords[:, 1].min(), coords[:, 1].max(), n)
        X, Y = np.meshgrid(xs, ys)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        U = ws.eval_scalar(proj.u_coeffs, pts).reshape(n, n)
        err = np.abs(U - prob.u(pts).reshape(n, n))
        fig, ax = plt.subplots(figsize=(5, 4.2))
        im = ax.pcolormesh(X, Y, np.log10(err + 1e-18), shading="auto")
        poly = np.vstack([coords, coords[:1]])
        ax.plot(poly[:, 0], poly[:, 1], "k-", lw=1.2)
        ax.set_aspect("equal")
        ax.set_title("log10 primal projection error, k=1")
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        path = os.path.join(OUT, "projection_error.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        print(f"\nfigure saved to {path}")


if __name__ == "__main__":
    main()
