"""L1 optimal transport on closed triangulated surfaces.

The transport density solves the Dynamic Monge-Kantorovich gradient flow,
discretized with surface P1 finite elements for the potential on a
once-refined mesh and piecewise-constant densities on the coarse mesh.
"""

from .dmk import DmkConfig, DmkResult, run
from .fem import assemble_rhs, assemble_stiffness, lyapunov
from .mesh import NestedMeshPair, SurfaceMesh, build_nested_pair, mesh_quality, refine, validate
from .metrics import convergence_rate, err_bp, err_w1
from .solver import ic0_factorize, pcg_solve
from .sphere import EXACT_W1, sphere_level_mesh, sphere_problem

__version__ = "0.1.0"

__all__ = [
    "DmkConfig",
    "DmkResult",
    "EXACT_W1",
    "NestedMeshPair",
    "SurfaceMesh",
    "assemble_rhs",
    "assemble_stiffness",
    "build_nested_pair",
    "convergence_rate",
    "err_bp",
    "err_w1",
    "ic0_factorize",
    "lyapunov",
    "mesh_quality",
    "pcg_solve",
    "refine",
    "run",
    "sphere_level_mesh",
    "sphere_problem",
    "validate",
]
