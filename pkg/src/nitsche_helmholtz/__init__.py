"""Nitsche-type finite elements for Helmholtz problems with a transmission
impedance on an interior interface."""
from .assembly import (
    AssemblyError,
    ComplexSparseSystem,
    ImpedanceField,
    ProblemSpec,
    ResolutionError,
    StandardMethodError,
    assemble,
    assemble_nitsche,
    assemble_standard,
    check_resolution,
    compute_lambda,
    resolution_limit,
)
from .fespace import Discretization, QkBasis
from .linsolve import DiscreteField, SolverError, eval_field, solve
from .mesh import RectDomain, StructuredQuadMesh, TwoDomainGeometry, build_interface_pairing, build_mesh

__all__ = [
    "AssemblyError", "ComplexSparseSystem", "ImpedanceField", "ProblemSpec", "ResolutionError",
    "StandardMethodError", "assemble", "assemble_nitsche", "assemble_standard", "check_resolution",
    "compute_lambda", "resolution_limit", "Discretization", "QkBasis", "DiscreteField", "SolverError",
    "eval_field", "solve", "RectDomain", "StructuredQuadMesh", "TwoDomainGeometry",
    "build_interface_pairing", "build_mesh",
]
