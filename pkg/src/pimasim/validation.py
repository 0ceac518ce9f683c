"""Input validation helpers shared by the library, the harness and the CLI."""

import math
import numbers

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration value is missing or out of range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def check_int(value, field, *, min_value=None, max_value=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    value = int(value)
    if min_value is not None and value < min_value:
        raise ConfigError(field, f"must be >= {min_value}, got {value}")
    if max_value is not None and value > max_value:
        raise ConfigError(field, f"must be <= {max_value}, got {value}")
    return value


def check_real(value, field, *, min_value=None, strict=False, max_value=None):
    """Validate a finite real number; ``strict`` makes the lower bound exclusive."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(field, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(field, f"must be finite, got {value}")
    if min_value is not None:
        if strict and value <= min_value:
            raise ConfigError(field, f"must be > {min_value}, got {value}")
        if not strict and value < min_value:
            raise ConfigError(field, f"must be >= {min_value}, got {value}")
    if max_value is not None and value > max_value:
        raise ConfigError(field, f"must be <= {max_value}, got {value}")
    return value


def check_probability(value, field):
    """Open-interval probability check, as needed by tail inversions."""
    value = check_real(value, field)
    if not 0.0 < value < 1.0:
        raise ConfigError(field, f"must lie in (0, 1), got {value}")
    return value


def check_rng(rng):
    """Turn ``None``, an int seed or a Generator into a ``numpy.random.Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a Generator from {type(rng).__name__}")
