"""Exception types raised across the package.

Each exception carries a short ``category`` string so that the command-line
front end can report a machine-readable failure class.
"""


class PulseForgeError(Exception):
    category = "error"


class OutsideFamily(PulseForgeError):
    category = "outside_family"


class NegativeRate(PulseForgeError):
    category = "negative_rate"


class UnphysicalState(PulseForgeError):
    category = "unphysical"


class InfeasibleTarget(PulseForgeError):
    """A target cannot be reached with bounded, physical drives.

    ``reason`` is one of ``"constraint"``, ``"cap"``, ``"unphysical"``,
    ``"collapse"`` or ``"tracking"``.
    """

    category = "infeasible"

    def __init__(self, message, reason="constraint"):
        super().__init__(message)
        self.reason = reason


class DenominatorCollapse(InfeasibleTarget):
    category = "denominator_collapse"

    def __init__(self, message):
        super().__init__(message, reason="collapse")


class SingularMatrix(PulseForgeError):
    category = "singular_matrix"


class ColumnSumMismatch(PulseForgeError):
    category = "column_sum_mismatch"


class ConfigError(PulseForgeError):
    category = "config"
