"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class MdpError(Exception):
    """Base class for all errors raised by mdpdec."""


class UnknownState(MdpError, KeyError):
    pass


class DisabledAction(MdpError, ValueError):
    pass


class ParseError(MdpError, ValueError):
    pass


class SchemaError(MdpError, ValueError):
    pass


class ProbabilityError(MdpError, ValueError):
    pass


class SchedulerGap(MdpError, LookupError):
    """The scheduler has no decision for a visited non-absorbing state."""


class TrivialZero(MdpError):
    """The initial state is certified to avoid the goal: the value is 0."""


class BranchingExplosion(MdpError):
    """An exploration layer exceeded the configured state cap."""


class MissingValue(MdpError, KeyError):
    pass


class IterationBudgetExceeded(MdpError):
    pass


class EnumerationTooLarge(MdpError):
    pass


class InapplicableRule(MdpError, ValueError):
    pass


class ScenarioUnknown(MdpError, KeyError):
    pass
