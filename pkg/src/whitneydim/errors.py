"""Exception hierarchy and resource limits.

Every error carries the process exit code the CLI maps it to:
1 suite failure, 2 configuration/input problems, 3 resource limits.
"""

import os


class WhitneyDimError(Exception):
    exit_code = 1


class ConfigError(WhitneyDimError):
    exit_code = 2


class FormatError(ConfigError):
    pass


class EmptySetError(ConfigError):
    pass


class InvalidParamsError(ConfigError):
    pass


class ResourceLimitError(WhitneyDimError):
    exit_code = 3


class InsufficientDataError(WhitneyDimError):
    pass


class ScaleTooFineError(WhitneyDimError):
    pass


class CenterNotInSetError(WhitneyDimError):
    pass


class NoOverlapError(WhitneyDimError):
    pass


DEFAULT_MAX_CELLS = 1 << 25


def max_cells():
    """Upper bound on grid nodes / cubes / boxes a single call may allocate."""
    raw = os.environ.get("WHITNEYDIM_MAX_CELLS")
    if raw is None:
        return DEFAULT_MAX_CELLS
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"WHITNEYDIM_MAX_CELLS must be an integer, got {raw!r}")
    if value <= 0:
        raise ConfigError("WHITNEYDIM_MAX_CELLS must be positive")
    return value


def check_cells(n, what):
    limit = max_cells()
    if n > limit:
        raise ResourceLimitError(f"{what}: {n} exceeds the configured cap of {limit} (WHITNEYDIM_MAX_CELLS)")
