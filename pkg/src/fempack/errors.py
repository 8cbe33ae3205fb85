"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """A user-supplied configuration value is invalid."""


class InvertedElementError(RuntimeError):
    """An element Jacobian determinant is zero or negative.

    Carries the offending element index and Gauss point so callers can
    locate the bad cell in the mesh.
    """

    def __init__(self, element: int, gauss_point: int, det: float):
        self.element = element
        self.gauss_point = gauss_point
        self.det = det
        super().__init__(
            f"non-positive Jacobian det={det:.6e} in element {element} "
            f"at Gauss point {gauss_point}"
        )


class MeshParseError(ValueError):
    """A mesh file failed to parse; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ScatterPatternError(RuntimeError):
    """An element node pair has no slot in the CSR pattern."""


class SolverBreakdownError(RuntimeError):
    """Conjugate gradient hit a non-positive curvature direction."""


class StepFailureError(RuntimeError):
    """A time step produced NaN/Inf state or the pressure solve failed.

    When the pressure solve is at fault, `stats` holds its SolverStats.
    """

    def __init__(self, message: str, stats=None):
        super().__init__(message)
        self.stats = stats


class ChecksumMismatchError(RuntimeError):
    """Scalar and packed assembly paths disagree beyond tolerance."""
