"""Exception types shared across the package."""


class PolygrainError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PolygrainError):
    """Operands do not share the group's matrix dimension."""


class NotOrthogonal(PolygrainError):
    """A matrix fails the orthogonality check at the requested tolerance."""


class GroupTooLarge(PolygrainError):
    """Group closure exceeded max_order; generator set is not a small finite group."""


class SvdFailure(PolygrainError):
    """Singular value decomposition failed on degenerate input."""


class SingularMatrix(PolygrainError):
    """Polar projection undefined: smallest singular value below the floor."""


class ComponentMismatch(PolygrainError):
    """Endpoints lie in different connected components of O(d)."""


class LogBranchFailure(PolygrainError):
    """Principal matrix logarithm is ambiguous (eigenvalue -1)."""


class UnsupportedDimension(PolygrainError):
    """Operation is only defined for a specific matrix dimension."""


class DomainError(PolygrainError):
    """Scalar argument outside the admissible domain."""


class GridMismatch(PolygrainError):
    """Fields live on different grids."""


class NonConvergence(PolygrainError):
    """Solver did not reach the gradient tolerance (value still usable)."""


class LineSearchFailure(PolygrainError):
    """Backtracking line search could not decrease the energy."""


class DomainTooSmall(PolygrainError):
    """Margin domain violates the 2-sigma safety band around probes."""
