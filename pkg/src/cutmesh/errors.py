"""Exception types shared across the package."""


class CutmeshError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(CutmeshError, ValueError):
    """An argument violates a documented precondition."""


class SingularPointError(CutmeshError):
    """An analytic level-set function was evaluated at a singular point."""


class RootSearchError(CutmeshError):
    """A Newton root search failed (divergence, degenerate direction, or
    a converged root outside the closed reference domain)."""


class DegenerateGradientError(RootSearchError):
    """The search direction is orthogonal to the level-set gradient."""


class DecompositionError(CutmeshError):
    """A decomposition produced an invalid (folded) sub-element map."""


class ValidityError(CutmeshError):
    """Nodal data violates the cut-topology validity rules."""


class RefinementExhaustedError(CutmeshError):
    """Recursive refinement hit the depth limit without reaching valid data.

    Carries diagnostics about the offending element.
    """

    def __init__(self, message, element=-1, depth=0, lineage=()):
        super().__init__(message)
        self.element = element
        self.depth = depth
        self.lineage = tuple(lineage)


class InsufficientDataError(CutmeshError):
    """Too few usable records to estimate a convergence rate."""


class ConfigError(CutmeshError):
    """A run configuration is malformed or inconsistent."""
