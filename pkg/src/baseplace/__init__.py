"""Pareto-optimal mobile base placement for surface coverage tasks."""

from baseplace.errors import (
    BasePlaceError,
    ConfigError,
    InputError,
    MapMismatchError,
    NoPlacementsError,
    SizingError,
)

__version__ = "0.1.0"

__all__ = [
    "BasePlaceError",
    "ConfigError",
    "InputError",
    "MapMismatchError",
    "NoPlacementsError",
    "SizingError",
    "__version__",
]
