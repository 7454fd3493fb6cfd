"""Build every structured mesh family and report its shape diagnostics.

The solver accepts general star-shaped polygonal cells, so the gallery also
exercises randomly distorted quads and the hexagon-dominant brick family,
where some faces are shared by collinear neighbor pairs.  Run as a script to
print the diagnostics table and save a figure per family.
"""

import os

import numpy as np

from hdgplus import (
    element_geometry,
    element_geometry_from_coords,
    generate_lshape,
    generate_structured,
    mesh_diagnostics,
    random_star_polygon,
)

OUT = os.path.join(os.path.dirname(__file__), "output")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:  # plots are optional, the numbers are not
    plt = None


def draw(mesh, title, path):
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for ci in range(mesh.n_cells):
        geom = element_geometry(mesh, ci)
        poly = np.vstack([geom.coords, geom.coords[:1]])
        ax.plot(poly[:, 0], poly[:, 1], "-", color="tab:blue", lw=0.8)
        ax.plot(*geom.star_center, ".", color="tab:red", ms=3)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main():
    os.makedirs(OUT, exist_ok=True)
    print(f"{'family':>16} {'cells':>6} {'faces<=':>8} {'h_max':>9} {'max gamma':>10}")
    for family in ("quad", "triangle", "distorted-quad", "hexagon-ish"):
        mesh = generate_structured(8, 8, family, seed=3)
        d = mesh_diagnostics(mesh)
        print(
            f"{family:>16} {d['n_cells']:>6} {d['max_face_count']:>8} "
            f"{d['h_max']:>9.4f} {d['max_gamma']:>10.3f}"
        )
        draw(mesh, f"{family} 8x8", os.path.join(OUT, f"mesh_{family}.png"))

    lshape = generate_lshape(6)
    d = mesh_diagnostics(lshape)
    print(
        f"{'lshape':>16} {d['n_cells']:>6} {d['max_face_count']:>8} "
        f"{d['h_max']:>9.4f} {d['max_gamma']:>10.3f}"
    )
    draw(lshape, "L-shaped domain", os.path.join(OUT, "mesh_lshape.png"))

    # single random star polygons, as used by the verification commands
    print("\nrandom star polygons (seed: certified kernel radius rho)")
    for seed in range(4):
        coords = random_star_polygon(6, seed=seed)
        g = element_geometry_from_coords(coords)
        print(f"  seed {seed}: h={g.h:.3f} rho={g.rho:.3f} gamma={g.shape_regularity().gamma:.2f}")
    if plt is not None:
        print(f"\nfigures saved under {OUT}")


if __name__ == "__main__":
    main()
