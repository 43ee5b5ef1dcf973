"""Exception hierarchy shared by every gwperc module."""


class GWPercError(Exception):
    """Base class for all gwperc errors."""


class InvalidParameter(GWPercError, ValueError):
    """A distribution parameter is outside its valid range."""


class InvalidPmf(GWPercError, ValueError):
    """An explicit pmf has mass at 0, negative mass, or does not sum to one."""


class InvalidScenario(GWPercError, ValueError):
    """Scenario fields violate their invariants."""


class SupercriticalInfinite(GWPercError, ArithmeticError):
    """Requested an infinite-tree moment with mu * p >= 1 (the moment is infinite)."""


class NearCritical(GWPercError, ArithmeticError):
    """An infinite-tree quantity was requested within tolerance of mu * p = 1."""


class InvalidThreshold(GWPercError, ValueError):
    """Tail threshold is not above the mean cluster size."""


class InvalidRange(GWPercError, ValueError):
    """Tail index is outside the range where the bound holds."""


class BudgetExceeded(GWPercError, ValueError):
    """Explicit tree too large for exhaustive enumeration."""


class EmptyCluster(GWPercError, ValueError):
    """Diameter requested for an empty vertex set."""


class ScenarioMismatch(GWPercError, ValueError):
    """Exact report and experiment result describe different scenarios."""
