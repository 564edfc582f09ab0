"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Image/grid dimensions violate a divisibility or tiling requirement."""


class EmptyExampleError(ValueError):
    """A prompt was requested with zero task examples."""


class ConfigurationError(ValueError):
    """An enum value, palette, ratio, or config field is out of range."""


class NoDetectionError(RuntimeError):
    """Post-processing found no foreground component to box."""
