"""Exception types raised across the toolkit."""


class LevyHJBError(Exception):
    """Base class for all toolkit errors."""


class NumericalError(LevyHJBError):
    """Raised for numerical failures (the CLI maps these to exit status 3)."""


# levy model
class NonPositiveRate(LevyHJBError, ValueError):
    pass


class ZeroAtom(LevyHJBError, ValueError):
    pass


class UnboundedRho(LevyHJBError, ValueError):
    pass


# geometry / problem
class BadParams(LevyHJBError, ValueError):
    pass


class DeltaTooLarge(LevyHJBError, ValueError):
    pass


class NotOnBoundary(LevyHJBError, ValueError):
    pass


class UnknownFamily(LevyHJBError, KeyError):
    pass


# simulation
class NonFiniteState(NumericalError):
    pass


class BadWindow(LevyHJBError, ValueError):
    pass


class IncompatibleSpecs(LevyHJBError, ValueError):
    pass


# solver
class CflViolation(NumericalError):
    pass


class NonMonotoneDiffusion(NumericalError):
    pass


class EmptyControlSet(LevyHJBError, ValueError):
    pass


class OutsideDomain(LevyHJBError, ValueError):
    pass


# policy / barrier / verification
class IncompatibleGrids(LevyHJBError, ValueError):
    pass


class NoStrictMonotonicity(NumericalError):
    pass


class EmptyAnchors(LevyHJBError, ValueError):
    pass


class BadStoppingRule(LevyHJBError, ValueError):
    pass


class ConfigError(LevyHJBError):
    """Malformed or incomplete experiment config (CLI exit status 2)."""
