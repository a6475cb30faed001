"""Exception hierarchy shared by the library and the command line."""


class KinoRRTError(Exception):
    """Base class for all errors raised by kinorrt."""


class ConfigurationError(KinoRRTError, ValueError):
    """Invalid user input: malformed scenario, infeasible start/goal, bad flags."""


class BackendError(KinoRRTError, ValueError):
    """A steering backend was asked to do something it cannot (e.g. closed form on a non-nilpotent A)."""


class NumericalError(KinoRRTError, ArithmeticError):
    """Base class for numerical failures during steering."""


class NotControllableError(NumericalError):
    """The (A, B) pair is not controllable, so the Gramian is singular."""


class IllConditionedError(NumericalError):
    """The Gramian is too ill-conditioned to solve against reliably."""


class NoConnectionError(NumericalError):
    """No positive optimal arrival time could be found between two states."""


class BlockedEnvironmentError(KinoRRTError):
    """Rejection sampling could not find a free state within the draw budget."""
