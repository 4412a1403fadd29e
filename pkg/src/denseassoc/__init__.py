"""Robust data association via geometric-consistency graphs.

Build an affinity matrix from putative correspondences, then select the
densest fully-connected subgraph with a penalized continuous relaxation
solved by projected gradient ascent.
"""

from .affinity import (AffinityMatrix, ParseError, ScoringConfig,
                       SizeLimitError, ValidationError, load_matrix,
                       save_matrix, score_binary, score_weighted, validate)
from .geometry import (AssociationSet, LineSet, PlaneSet, PointSet,
                       affinity_lines, affinity_planes, affinity_points,
                       all_to_all)
from .oracle import OracleResult, exact_densest, exact_max_clique
from .solver import (Solution, SolverFailure, SolverParams, density_of,
                     penalize, solve)

__all__ = [
    "AffinityMatrix", "AssociationSet", "LineSet", "OracleResult",
    "ParseError", "PlaneSet", "PointSet", "ScoringConfig", "SizeLimitError",
    "Solution", "SolverFailure", "SolverParams", "ValidationError",
    "affinity_lines", "affinity_planes", "affinity_points", "all_to_all",
    "density_of", "exact_densest", "exact_max_clique", "load_matrix",
    "penalize", "save_matrix", "score_binary", "score_weighted", "solve",
    "validate",
]
