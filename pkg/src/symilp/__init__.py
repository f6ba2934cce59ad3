"""Symmetry-aware solution prediction for integer linear programs.

Subpackages cover the full pipeline: instance model and generators, an
exact desk-scale oracle, bipartite-graph encoding, a message-passing
predictor trained either classically or with group-aligned labels, metrics,
and repair heuristics that turn predictions into feasible solutions.
"""

from .instance import (
    IlpInstance,
    SchemaError,
    Solution,
    SymmetryDescriptor,
    Variable,
    apply_solution_permutation,
    check_symmetry,
    read_json,
    validate,
    write_json,
)
from .perm import GroupElements, Permutation, enumerate_cyclic, enumerate_dihedral

__version__ = "0.1.0"

__all__ = [
    "IlpInstance",
    "SchemaError",
    "Solution",
    "SymmetryDescriptor",
    "Variable",
    "apply_solution_permutation",
    "check_symmetry",
    "read_json",
    "validate",
    "write_json",
    "GroupElements",
    "Permutation",
    "enumerate_cyclic",
    "enumerate_dihedral",
    "__version__",
]
