"""Exception types shared across the engine."""


class DegenerateClassError(ValueError):
    """A class has (near) zero mass, so centroid/spread/ratios are undefined."""


class SpecError(ValueError):
    """Invalid constraint spec or run configuration."""


class NumericalError(FloatingPointError):
    """A non-finite value appeared where a finite one is required."""


class FormatError(ValueError):
    """Malformed input file."""
