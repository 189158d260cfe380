class BasePlaceError(Exception):
    """Root of the package's exception hierarchy."""


class InputError(BasePlaceError, ValueError):
    """Malformed argument: wrong shape, out-of-range value, empty input."""


class SizingError(BasePlaceError):
    """A reachability map would exceed the configured record cap."""


class ConfigError(BasePlaceError):
    """Missing or invalid scenario, scene or robot file."""


class NoPlacementsError(BasePlaceError):
    """Filtering left no favoured base placement to optimize over."""


class MapMismatchError(BasePlaceError):
    """A stored reachability map was built for a different robot or grid."""
