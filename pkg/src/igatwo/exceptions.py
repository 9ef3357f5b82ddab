class ParameterError(ValueError):
    """Invalid degree, mesh, index or configuration value."""


class GeometryError(ValueError):
    """Degenerate geometry: non-positive weights or a singular Jacobian."""


class NumericalError(ArithmeticError):
    """A factorization or sweep met a singular or non-finite quantity."""
