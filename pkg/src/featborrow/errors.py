"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have inconsistent shapes; the message names both shapes."""


class ValidationError(ValueError):
    """An input value violates a documented precondition or invariant."""


class FormatError(ValueError):
    """A file could not be parsed into the expected structure."""


class GeometryError(ValueError):
    """A layer-geometry combination is outside the supported envelope."""
