"""Numerical verification lab for a planar domain whose second Neumann
eigenfunction has its maximum in the interior.

The pipeline builds the domain D(epsilon), meshes it, computes the low
Neumann spectrum with P1 finite elements and checks every claim of the
construction on the result; a Monte Carlo module estimates the hitting
probabilities of reflected Brownian motion the argument relies on.
"""

version_tuple = (0, 1, 0)

version = '.'.join(map(str, version_tuple))
"""Current version of hotspot_forge."""

from hotspot_forge.errors import (  # noqa: E402
    AmbiguousSignError, ArtifactError, AssemblyError, ConstructionError,
    DegenerateEigenvectorError, DomainError, EvaluationError, HotspotError,
    ParameterError, RefinementError, SolverError)
from hotspot_forge.geometry import DomainSpec, build_domain  # noqa: E402
from hotspot_forge.mesh import MeshPolicy, SizeField, triangulate  # noqa
from hotspot_forge.fem import SolverParams, assemble, \
    smallest_eigenpairs  # noqa: E402
from hotspot_forge.analysis import VerificationReport, solve, \
    verify  # noqa: E402

__all__ = [
    'version', 'version_tuple',

    # Exceptions
    'HotspotError', 'ParameterError', 'DomainError', 'ConstructionError',
    'RefinementError', 'AssemblyError', 'SolverError', 'EvaluationError',
    'DegenerateEigenvectorError', 'AmbiguousSignError', 'ArtifactError',

    # Pipeline
    'DomainSpec', 'build_domain', 'SizeField', 'MeshPolicy', 'triangulate',
    'SolverParams', 'assemble', 'smallest_eigenpairs', 'solve', 'verify',
    'VerificationReport',
]
