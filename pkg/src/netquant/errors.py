"""Exception types shared across the package.

Each class maps to a distinct CLI exit code (see ``netquant.cli``), so
callers can tell configuration mistakes apart from data problems,
overlap/positivity failures, and solver breakdowns.
"""


class NetquantError(Exception):
    """Base class for all package-specific errors."""


class ArgumentError(NetquantError, ValueError):
    """Invalid argument passed to a library function."""


class ConfigError(NetquantError):
    """Malformed or inconsistent run configuration."""


class CapacityError(NetquantError):
    """Cluster size exceeds the enumeration cap."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(
            f"cluster size {size} exceeds the 2^M enumeration cap of {cap}; "
            f"raise max_cluster_size if this is intentional"
        )


class DatasetValidationError(NetquantError):
    """Raised when raw clusters violate dataset invariants.

    ``report`` holds one human-readable line per violation, each naming the
    offending cluster and field.
    """

    def __init__(self, report):
        self.report = list(report)
        super().__init__(
            "dataset validation failed:\n" + "\n".join(f"  - {r}" for r in self.report)
        )


class PositivityError(NetquantError):
    """Propensity or policy mass too close to 0/1 for a required division."""


class OverlapError(NetquantError):
    """No usable support for the requested policy on the given data."""


class FitError(NetquantError):
    """Nuisance model fitting failed (degenerate labels, non-finite loss, ...)."""


class SolverError(NetquantError):
    """Estimating-equation root finding failed."""


class VarianceError(NetquantError):
    """Variance/derivative estimate is degenerate (e.g. C-hat <= 0)."""


class DegenerateOutcomeError(NetquantError):
    """Outcome has zero variance, so no bandwidth can be formed."""
