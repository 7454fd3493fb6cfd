"""Polygonal meshes: construction, structured generators, refinement, diagnostics.

Cells are simple polygons listed counterclockwise.  Every element is certified
star-shaped by a fan of triangles around a star center with strictly positive
areas; the same fan is reused downstream as the quadrature decomposition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

STRUCTURED_FAMILIES = ("quad", "triangle", "distorted-quad", "hexagon-ish")

# fan triangles must have signed area above this fraction of h_K^2
_FAN_AREA_REL_TOL = 1e-12


class MeshFormatError(ValueError):
    """Mesh file does not match the expected schema."""


class MeshValidationError(ValueError):
    """Mesh data violates a structural invariant."""


class StarShapeError(RuntimeError):
    """No admissible star center could be found for an element."""


# ---------------------------------------------------------------------------
# polygon primitives


def polygon_area(coords):
    """Signed area of a polygon given as an (n, 2) vertex array."""
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(coords):
    x, y = coords[:, 0], coords[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([np.sum((x + xn) * cross), np.sum((y + yn) * cross)]) / (6.0 * a)


def polygon_diameter(coords):
    d = coords[:, None, :] - coords[None, :, :]
    return float(np.sqrt((d * d).sum(-1)).max())


def fan_areas(coords, center):
    """Signed areas of the fan triangles (center, v_i, v_{i+1})."""
    u = coords - center
    v = np.roll(coords, -1, axis=0) - center
    return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def _point_segment_distance(p, a, b):
    ab = b - a
    t = float(np.dot(p - a, ab) / np.dot(ab, ab))
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (a + t * ab)))


def find_star_center(coords, grid=48):
    """Point the element is star-shaped with respect to.

    The centroid is tried first.  If any fan triangle around it degenerates,
    a coarse grid search picks the admissible point with the largest clearance
    to the boundary (a Chebyshev-like interior point).  Raises StarShapeError
    when no admissible point exists.
    """
    h = polygon_diameter(coords)
    tol = _FAN_AREA_REL_TOL * h * h
    c = polygon_centroid(coords)
    if np.all(fan_areas(coords, c) > tol):
        return c
    nv = len(coords)
    segs = [(coords[i], coords[(i + 1) % nv]) for i in range(nv)]
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    xs = np.linspace(lo[0], hi[0], grid + 2)[1:-1]
    ys = np.linspace(lo[1], hi[1], grid + 2)[1:-1]
    best, best_score = None, -1.0
    for px in xs:
        for py in ys:
            p = np.array([px, py])
            if not np.all(fan_areas(coords, p) > tol):
                continue
            score = min(_point_segment_distance(p, a, b) for a, b in segs)
            if score > best_score:
                best, best_score = p, score
    if best is None:
        raise StarShapeError("element is not star-shaped: no admissible star center")
    return best


# ---------------------------------------------------------------------------
# element geometry


@dataclass(frozen=True)
class FaceGeometry:
    """One straight face of an element, in canonical orientation.

    The canonical direction (p0 -> p1) is shared by both elements on an
    interior face, so face-based polynomial spaces match across the mesh.
    ``normal`` is the outward unit normal of the owning element.
    """

    p0: np.ndarray
    p1: np.ndarray
    length: float
    normal: np.ndarray
    midpoint: np.ndarray


@dataclass(frozen=True)
class ShapeRegularityReport:
    gamma_chunkiness: float
    gamma_simplex: float
    gamma_faceratio: float
    gamma: float
    n_faces: int


@dataclass(frozen=True)
class ElementGeometry:
    cell_id: int
    coords: np.ndarray
    star_center: np.ndarray
    h: float
    rho: float
    area: float
    simplices: np.ndarray  # (n, 3, 2) fan around the star center
    faces: tuple[FaceGeometry, ...]

    def shape_regularity(self):
        chunk = self.h / self.rho
        gs = 0.0
        for tri in self.simplices:
            a = np.linalg.norm(tri[1] - tri[0])
            b = np.linalg.norm(tri[2] - tri[1])
            c = np.linalg.norm(tri[0] - tri[2])
            area2 = abs(
                (tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
                - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1])
            )
            inradius = area2 / (a + b + c)  # r = 2A / perimeter
            gs = max(gs, max(a, b, c) / inradius)
        lengths = [f.length for f in self.faces]
        fr = max(lengths) / min(lengths)
        return ShapeRegularityReport(
            gamma_chunkiness=chunk,
            gamma_simplex=gs,
            gamma_faceratio=fr,
            gamma=max(chunk, gs, fr),
            n_faces=len(self.faces),
        )


def element_geometry_from_coords(coords, cell_id=-1, canonical_flips=None):
    """Build the geometry record for a single polygon.

    ``canonical_flips[i]`` marks local edge i (v_i -> v_{i+1}) as reversed
    relative to the mesh-wide canonical orientation of that face.
    """
    coords = np.asarray(coords, dtype=float)
    nv = len(coords)
    if canonical_flips is None:
        canonical_flips = [False] * nv
    area = polygon_area(coords)
    if area <= 0.0:
        raise MeshValidationError(f"cell {cell_id} has negative orientation")
    center = find_star_center(coords)
    nxt = np.roll(coords, -1, axis=0)
    simplices = np.stack(
        [np.broadcast_to(center, coords.shape), coords, nxt], axis=1
    ).copy()
    faces = []
    rho = math.inf
    for i in range(nv):
        a, b = coords[i], nxt[i]
        t = b - a
        ln = float(np.linalg.norm(t))
        if ln == 0.0:
            raise MeshValidationError(f"cell {cell_id} has a zero-length edge")
        normal = np.array([t[1], -t[0]]) / ln  # CCW loop -> outward
        p0, p1 = (b, a) if canonical_flips[i] else (a, b)
        faces.append(
            FaceGeometry(
                p0=p0, p1=p1, length=ln, normal=normal, midpoint=0.5 * (a + b)
            )
        )
        rho = min(rho, _point_segment_distance(center, a, b))
    return ElementGeometry(
        cell_id=cell_id,
        coords=coords,
        star_center=center,
        h=polygon_diameter(coords),
        rho=rho,
        area=area,
        simplices=simplices,
        faces=tuple(faces),
    )


# ---------------------------------------------------------------------------
# mesh container


@dataclass(frozen=True)
class PolyMesh:
    """Conforming polygonal mesh.

    ``faces`` holds canonical vertex pairs (lo, hi); ``face_cells[f]`` are the
    ids of the cell traversing the face in canonical direction and the cell
    traversing it reversed (-1 when absent).  Treat all arrays as immutable.
    """

    vertices: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    faces: np.ndarray
    face_cells: np.ndarray
    cell_faces: tuple[tuple[int, ...], ...]
    boundary: np.ndarray
    domain_area: float | None = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_faces(self):
        return len(self.faces)

    def cell_coords(self, ci):
        return self.vertices[list(self.cells[ci])]

    def h_max(self):
        return max(polygon_diameter(self.cell_coords(ci)) for ci in range(self.n_cells))

    @staticmethod
    def build(vertices, cells, domain_area=None):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshValidationError("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(vertices)):
            raise MeshValidationError("vertices contain non-finite coordinates")
        nv = len(vertices)
        norm_cells = []
        for ci, cell in enumerate(cells):
            cell = tuple(int(v) for v in cell)
            if len(cell) < 3:
                raise MeshValidationError(f"cell {ci} has fewer than 3 vertices")
            for v in cell:
                if v < 0 or v >= nv:
                    raise MeshValidationError(
                        f"cell {ci} references vertex {v} out of range (n_vertices = {nv})"
                    )
            if len(set(cell)) != len(cell):
                raise MeshValidationError(f"cell {ci} repeats a vertex")
            area = polygon_area(vertices[list(cell)])
            if area <= 0.0:
                raise MeshValidationError(
                    f"cell {ci} has negative orientation (signed area {area:g})"
                )
            norm_cells.append(cell)

        directed = {}
        for ci, cell in enumerate(norm_cells):
            for j, a in enumerate(cell):
                b = cell[(j + 1) % len(cell)]
                if (a, b) in directed:
                    other = directed[(a, b)][0]
                    raise MeshValidationError(
                        f"directed edge ({a}, {b}) appears in cells {other} and {ci}: "
                        "non-conforming mesh or inconsistent orientation"
                    )
                directed[(a, b)] = (ci, j)

        face_index = {}
        faces, face_cells = [], []
        cell_faces = [[-1] * len(c) for c in norm_cells]
        for ci, cell in enumerate(norm_cells):
            for j, a in enumerate(cell):
                b = cell[(j + 1) % len(cell)]
                key = (a, b) if a < b else (b, a)
                fi = face_index.get(key)
                if fi is None:
                    fi = len(faces)
                    face_index[key] = fi
                    faces.append(key)
                    face_cells.append([-1, -1])
                face_cells[fi][0 if (a, b) == key else 1] = ci
                cell_faces[ci][j] = fi

        face_cells = np.asarray(face_cells, dtype=int)
        boundary = (face_cells == -1).any(axis=1)
        mesh = PolyMesh(
            vertices=vertices,
            cells=tuple(norm_cells),
            faces=np.asarray(faces, dtype=int),
            face_cells=face_cells,
            cell_faces=tuple(tuple(cf) for cf in cell_faces),
            boundary=boundary,
            domain_area=domain_area,
        )
        if domain_area is not None:
            total = math.fsum(polygon_area(mesh.cell_coords(ci)) for ci in range(mesh.n_cells))
            if abs(total - domain_area) > 1e-12 * abs(domain_area):
                raise MeshValidationError(
                    f"cells tile {total:.17g} instead of the domain area {domain_area:.17g}"
                )
        return mesh


def element_geometry(mesh, cell_id):
    """ElementGeometry of one mesh cell, faces in mesh-canonical orientation."""
    cell = mesh.cells[cell_id]
    flips = []
    for j, a in enumerate(cell):
        b = cell[(j + 1) % len(cell)]
        flips.append(a > b)
    return element_geometry_from_coords(mesh.cell_coords(cell_id), cell_id, flips)


# ---------------------------------------------------------------------------
# structured generators


def _quad_vertices(nx, ny, domain):
    x0, y0, x1, y1 = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def _vid(i, j, nx):
    return j * (nx + 1) + i


def _quad_cells(nx, ny):
    return [
        (_vid(i, j, nx), _vid(i + 1, j, nx), _vid(i + 1, j + 1, nx), _vid(i, j + 1, nx))
        for j in range(ny)
        for i in range(nx)
    ]


def _hex_bricks(nx, ny, domain):
    # Running-bond brick layout: odd rows shift by half a brick, so interior
    # bricks become hexagons (two extra midside vertices), rows at the top and
    # bottom become pentagons, and offset rows end with half-width quads.
    x0, y0, x1, y1 = domain
    w = (x1 - x0) / nx
    hh = (y1 - y0) / ny
    verts, vid = [], {}

    def node(hi, j):
        key = (hi, j)
        if key not in vid:
            vid[key] = len(verts)
            verts.append((x0 + 0.5 * w * hi, y0 + hh * j))
        return vid[key]

    def joints(j):
        if j % 2 == 0:
            return list(range(0, 2 * nx + 1, 2))
        return [0] + list(range(1, 2 * nx, 2)) + [2 * nx]

    cells = []
    for j in range(ny):
        bnds = joints(j)
        for a, b in zip(bnds[:-1], bnds[1:]):
            bottom = [a, b] if j == 0 else list(range(a, b + 1))
            top = [a, b] if j + 1 == ny else list(range(a, b + 1))
            loop = [node(h, j) for h in bottom]
            loop += [node(h, j + 1) for h in reversed(top)]
            cells.append(tuple(loop))
    return np.asarray(verts, dtype=float), cells


def generate_structured(nx, ny, family="quad", *, domain=(0.0, 0.0, 1.0, 1.0),
                        seed=0, distortion=0.25):
    """Structured mesh of an axis-aligned rectangle.

    Families: "quad", "triangle" (two triangles per quad), "distorted-quad"
    (interior vertices jittered by a seeded RNG, jitter below half a cell
    width), "hexagon-ish" (staggered bricks, hexagon-dominant).
    """
    if family not in STRUCTURED_FAMILIES:
        raise ValueError(f"unknown mesh family {family!r}; choose from {STRUCTURED_FAMILIES}")
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    x0, y0, x1, y1 = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain must be a non-empty rectangle (x0, y0, x1, y1)")

    if family == "hexagon-ish":
        verts, cells = _hex_bricks(nx, ny, domain)
    else:
        verts = _quad_vertices(nx, ny, domain)
        if family == "triangle":
            cells = []
            for (bl, br, tr, tl) in _quad_cells(nx, ny):
                cells.append((bl, br, tr))
                cells.append((bl, tr, tl))
        else:
            cells = _quad_cells(nx, ny)
        if family == "distorted-quad":
            if not 0.0 <= distortion < 0.5:
                raise ValueError("distortion must lie in [0, 0.5) of a cell width")
            wx = (x1 - x0) / nx
            wy = (y1 - y0) / ny
            rng = np.random.default_rng(seed)
            jitter = rng.uniform(-1.0, 1.0, size=verts.shape)
            jitter[:, 0] *= distortion * wx
            jitter[:, 1] *= distortion * wy
            ii = np.tile(np.arange(nx + 1), ny + 1)
            jj = np.repeat(np.arange(ny + 1), nx + 1)
            interior = (ii > 0) & (ii < nx) & (jj > 0) & (jj < ny)
            verts = verts + jitter * interior[:, None]

    mesh = PolyMesh.build(verts, cells, domain_area=(x1 - x0) * (y1 - y0))
    for ci in range(mesh.n_cells):
        try:
            find_star_center(mesh.cell_coords(ci))
        except StarShapeError as exc:
            raise MeshValidationError(f"generated cell {ci} is degenerate: {exc}") from exc
    return mesh


def refine_sequence(nx, ny, family, levels, *, domain=(0.0, 0.0, 1.0, 1.0),
                    seed=0, distortion=0.25):
    """Meshes at resolutions nx * 2**l for l = 0 .. levels-1.

    Each level is regenerated with the same family, seed policy, and relative
    distortion.  The worst shape-regularity constant must stay within twice
    its level-0 value, otherwise the family is rejected.
    """
    if levels < 2:
        raise ValueError("a refinement sequence needs at least 2 levels")
    meshes = [
        generate_structured(nx * 2 ** lvl, ny * 2 ** lvl, family,
                            domain=domain, seed=seed, distortion=distortion)
        for lvl in range(levels)
    ]
    gammas = [mesh_diagnostics(m)["max_gamma"] for m in meshes]
    if max(gammas) > 2.0 * gammas[0]:
        raise MeshValidationError(
            f"shape regularity degrades under refinement: gamma {gammas[0]:g} -> {max(gammas):g}"
        )
    return meshes


def generate_lshape(n, *, size=1.0):
    """Quad mesh of the L-shaped domain [-s, s]^2 minus the quadrant x>0, y<0.

    Non-convex; used as a diagnostic only.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    nx = ny = 2 * n
    verts = _quad_vertices(nx, ny, (-size, -size, size, size))
    kept = []
    for (bl, br, tr, tl) in _quad_cells(nx, ny):
        c = verts[[bl, br, tr, tl]].mean(axis=0)
        if c[0] > 0.0 and c[1] < 0.0:
            continue
        kept.append((bl, br, tr, tl))
    used = sorted({v for cell in kept for v in cell})
    remap = {v: i for i, v in enumerate(used)}
    cells = [tuple(remap[v] for v in cell) for cell in kept]
    return PolyMesh.build(verts[used], cells, domain_area=3.0 * size * size)


def random_star_polygon(n_vertices, seed=0, *, rng=None, r_min=0.55, r_max=1.0,
                        jitter=0.35, center=(0.0, 0.0), scale=1.0):
    """Random polygon, star-shaped with respect to ``center`` by construction."""
    if n_vertices < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    rng = np.random.default_rng(seed) if rng is None else rng
    i = np.arange(n_vertices)
    theta = 2.0 * np.pi * (i + jitter * rng.uniform(-0.5, 0.5, n_vertices)) / n_vertices
    r = rng.uniform(r_min, r_max, n_vertices)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return np.asarray(center, dtype=float) + scale * pts


def single_cell_mesh(coords):
    coords = np.asarray(coords, dtype=float)
    return PolyMesh.build(coords, [tuple(range(len(coords)))])


def mesh_diagnostics(mesh):
    """Worst-case shape diagnostics over all cells."""
    max_gamma = 0.0
    max_faces = 0
    for ci in range(mesh.n_cells):
        rep = element_geometry(mesh, ci).shape_regularity()
        max_gamma = max(max_gamma, rep.gamma)
        max_faces = max(max_faces, rep.n_faces)
    return {
        "max_gamma": max_gamma,
        "max_face_count": max_faces,
        "h_max": mesh.h_max(),
        "n_cells": mesh.n_cells,
    }


# ---------------------------------------------------------------------------
# file format: {"dim": 2, "vertices": [[x, y], ...], "cells": [[i, ...], ...]}


def write_mesh(mesh, path):
    """Write a mesh as JSON with 17-significant-digit coordinates."""
    out = ["{", '  "dim": 2,', '  "vertices": [']
    nv = mesh.n_vertices
    for i, (x, y) in enumerate(mesh.vertices):
        sep = "," if i + 1 < nv else ""
        out.append(f"    [{x:.17g}, {y:.17g}]{sep}")
    out.append("  ],")
    out.append('  "cells": [')
    nc = mesh.n_cells
    for ci, cell in enumerate(mesh.cells):
        sep = "," if ci + 1 < nc else ""
        out.append("    [" + ", ".join(str(v) for v in cell) + "]" + sep)
    out.append("  ]")
    out.append("}")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def read_mesh(path):
    """Read a mesh written by write_mesh, validating schema and structure."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshFormatError(
                f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(doc, dict):
        raise MeshFormatError("top-level document must be an object")
    for key in ("dim", "vertices", "cells"):
        if key not in doc:
            raise MeshFormatError(f"missing required field {key!r}")
    if doc["dim"] != 2:
        raise MeshFormatError(f"field 'dim' must be 2, got {doc['dim']!r}")
    verts = doc["vertices"]
    if not isinstance(verts, list) or not verts:
        raise MeshFormatError("field 'vertices' must be a non-empty list")
    for i, v in enumerate(verts):
        if (
            not isinstance(v, list)
            or len(v) != 2
            or not all(isinstance(c, (int, float)) for c in v)
        ):
            raise MeshFormatError(f"vertices[{i}] must be a pair of numbers")
    cells = doc["cells"]
    if not isinstance(cells, list) or not cells:
        raise MeshFormatError("field 'cells' must be a non-empty list")
    nv = len(verts)
    for ci, cell in enumerate(cells):
        if not isinstance(cell, list) or len(cell) < 3:
            raise MeshFormatError(f"cells[{ci}] must list at least 3 vertex indices")
        for j, v in enumerate(cell):
            if not isinstance(v, int) or isinstance(v, bool):
                raise MeshFormatError(f"cells[{ci}][{j}] must be an integer index")
            if v < 0 or v >= nv:
                raise MeshFormatError(
                    f"cells[{ci}][{j}] = {v}: vertex index out of range (n_vertices = {nv})"
                )
    return PolyMesh.build(np.asarray(verts, dtype=float), [tuple(c) for c in cells])
