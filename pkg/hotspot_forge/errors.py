"""Exceptions raised by hotspot_forge.

Every error derives from :exc:`HotspotError`, so callers that only care
about "the pipeline could not run" can catch that one class. Verification
failures are not exceptions: they are recorded in a
:class:`~hotspot_forge.analysis.VerificationReport`.
"""

__all__ = [
    'HotspotError', 'ParameterError', 'DomainError', 'ConstructionError',
    'RefinementError', 'AssemblyError', 'SolverError', 'EvaluationError',
    'DegenerateEigenvectorError', 'AmbiguousSignError', 'ArtifactError',
]


class HotspotError(Exception):
    """Base class for all hotspot_forge errors."""
    pass


class ParameterError(HotspotError, ValueError):
    """Raised when a parameter is outside its documented range."""
    pass


class DomainError(HotspotError, ValueError):
    """Raised when a point of D is required and the point is not in D."""

    def __init__(self, point, message=None):
        self.point = point
        super(DomainError, self).__init__(
            message or 'point %r is not in the domain' % (tuple(point), ))


class ConstructionError(HotspotError):
    """Raised when a boundary loop is degenerate or self-intersecting."""
    pass


class RefinementError(HotspotError):
    """Raised when the triangulation cannot meet its quality targets.

    :Parameters:
      - `message`: Human-readable summary.
      - `diagnostics`: Optional dict of measured quality statistics.
    """

    def __init__(self, message, diagnostics=None):
        super(RefinementError, self).__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self):
        text = super(RefinementError, self).__str__()
        if self.diagnostics:
            text += ' (%s)' % ', '.join(
                '%s=%s' % item for item in sorted(self.diagnostics.items()))
        return text


class AssemblyError(HotspotError):
    """Raised when a triangle is degenerate during matrix assembly."""
    pass


class SolverError(HotspotError):
    """Raised when the eigensolver does not converge.

    ``residuals`` holds the best relative residuals reached, one per
    requested eigenpair.
    """

    def __init__(self, message, residuals=()):
        super(SolverError, self).__init__(message)
        self.residuals = list(residuals)

    def __str__(self):
        text = super(SolverError, self).__str__()
        if self.residuals:
            text += ' (best residuals: %s)' % ', '.join(
                '%.3g' % r for r in self.residuals)
        return text


class EvaluationError(HotspotError):
    """Raised when a pointwise function is undefined at a mesh node."""
    pass


class DegenerateEigenvectorError(HotspotError):
    """Raised when an eigenvector vanishes identically on a triangle."""
    pass


class AmbiguousSignError(HotspotError):
    """Raised when the sign of phi2 cannot be fixed by its disc integral."""
    pass


class ArtifactError(HotspotError):
    """Raised when a run artifact is missing or unreadable."""
    pass
