"""Exception types shared across the package."""


class JToricError(Exception):
    """Base class for all library errors."""


class NonPrimitiveNormal(JToricError):
    """A facet normal is not a primitive lattice vector."""


class Unbounded(JToricError):
    """The halfspace intersection is unbounded."""


class EmptyInterior(JToricError):
    """The halfspace intersection has no interior point."""


class NotDelzant(JToricError):
    """A vertex violates the Delzant (lattice basis) condition."""


class NormalMismatch(JToricError):
    """Two polytopes do not share the same ordered normal list."""


class BoundaryEvaluation(JToricError):
    """Requested a singular quantity too close to the polytope boundary."""


class NoVertexChart(JToricError):
    """Potential data cannot be evaluated on the closed polytope."""


class NewtonDivergence(JToricError):
    """A damped Newton iteration exceeded its iteration cap."""


class FaceMismatch(JToricError):
    """The transition map sent a face point off the corresponding face."""


class StepFailure(JToricError):
    """A flow step could not preserve convexity/monotonicity."""


class InsufficientHistory(JToricError):
    """Not enough recorded snapshots to form a time difference."""


class NoRoot(JToricError):
    """A bracketing root does not exist for the requested parameters."""
