"""Flux/primal projections and a hybridized solver on polygonal meshes.

The package splits into geometry (mesh), element-local tools (polyquad), the
scalar and elastic projection pairs (projection, elasticity), the condensed
solver (solver), manufactured data (problems), and a CSV-emitting command
line front end (cli).
"""

from .elasticity import (
    ElasticProjection,
    ElasticResiduals,
    build_symgrad_split,
    elastic_convergence_study,
    elastic_errors,
    project_elastic,
    verify_elastic_identities,
)
from .mesh import (
    ElementGeometry,
    MeshFormatError,
    MeshValidationError,
    PolyMesh,
    StarShapeError,
    element_geometry,
    element_geometry_from_coords,
    generate_lshape,
    generate_structured,
    mesh_diagnostics,
    random_star_polygon,
    read_mesh,
    refine_sequence,
    single_cell_mesh,
    write_mesh,
)
from .polyquad import (
    ElementBasis,
    ElementWorkspace,
    FaceBasis,
    GramFactorizationError,
    build_quadrature,
    default_exactness,
    dim_pk,
)
from .problems import (
    DiffusionProblem,
    ElasticityProblem,
    PolyField2D,
    diffusion_problem,
    elasticity_problem,
)
from .projection import (
    AssemblyError,
    HdgPlusProjection,
    ProjectionResiduals,
    build_grad_complement,
    fit_rate,
    project_hdg_plus,
    projection_convergence_study,
    projection_errors,
    verify_projection_identities,
)
from .solver import (
    CondensedSystem,
    ErrorReport,
    SolverError,
    SolverResult,
    compute_errors,
    convergence_study,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "CondensedSystem",
    "DiffusionProblem",
    "ElasticProjection",
    "ElasticResiduals",
    "ElasticityProblem",
    "ElementBasis",
    "ElementGeometry",
    "ElementWorkspace",
    "ErrorReport",
    "FaceBasis",
    "GramFactorizationError",
    "HdgPlusProjection",
    "MeshFormatError",
    "MeshValidationError",
    "PolyField2D",
    "PolyMesh",
    "ProjectionResiduals",
    "SolverError",
    "SolverResult",
    "StarShapeError",
    "build_grad_complement",
    "build_quadrature",
    "build_symgrad_split",
    "compute_errors",
    "convergence_study",
    "default_exactness",
    "diffusion_problem",
    "dim_pk",
    "elastic_convergence_study",
    "elastic_errors",
    "elasticity_problem",
    "element_geometry",
    "element_geometry_from_coords",
    "fit_rate",
    "generate_lshape",
    "generate_structured",
    "mesh_diagnostics",
    "project_elastic",
    "project_hdg_plus",
    "projection_convergence_study",
    "projection_errors",
    "random_star_polygon",
    "read_mesh",
    "refine_sequence",
    "single_cell_mesh",
    "solve",
    "verify_elastic_identities",
    "verify_projection_identities",
    "write_mesh",
]
