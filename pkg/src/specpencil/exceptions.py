"""Exception types raised across the package."""

import numpy as np


class NotSymmetricError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class BothSingularError(np.linalg.LinAlgError):
    """Neither matrix of the pencil is definite.

    The spectrum of such a pencil may be empty or fill the whole real line,
    so no eigenvalues are returned.
    """

    def __init__(self, common_kernel_dim: int):
        self.common_kernel_dim = int(common_kernel_dim)
        super().__init__(
            "neither matrix is positive definite "
            f"(common kernel dimension {self.common_kernel_dim})"
        )


class NotDiagonalError(ValueError):
    pass


class ZeroRowError(ValueError):
    def __init__(self, index: int):
        self.index = int(index)
        super().__init__(f"all four diagonal entries vanish at index {index}")


class TooFewPointsError(ValueError):
    pass


class NonPositiveValueError(ValueError):
    pass


class SweepPointError(RuntimeError):
    """A solve failed at one grid point of a sweep."""

    def __init__(self, alpha: float, beta: float, cause: Exception):
        self.alpha = alpha
        self.beta = beta
        self.cause = cause
        super().__init__(f"solve failed at alpha={alpha!r}, beta={beta!r}: {cause}")


class DegenerateSeedsError(ValueError):
    pass


class MalformedMeshError(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class MeshParseError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NonStarShapedError(ValueError):
    pass


class SingularConstraintError(np.linalg.LinAlgError):
    pass


class SingularMassError(np.linalg.LinAlgError):
    pass


class ConfigError(ValueError):
    """Invalid experiment or command-line configuration."""
