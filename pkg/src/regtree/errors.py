"""Exception hierarchy shared by all modules."""


class RegTreeError(Exception):
    """Base class for every domain error raised by the package."""


class InvalidSequence(RegTreeError, ValueError):
    pass


class OutOfRange(RegTreeError, ValueError):
    pass


class MultiplicityOverflow(RegTreeError, OverflowError):
    pass


class NotDiscrete(RegTreeError):
    """The requested operator has non-empty essential spectrum; counting is meaningless."""


class NotApplicable(RegTreeError):
    """A check was requested outside the regime where its target formula holds."""


class BadTruncation(RegTreeError):
    pass


class EigenvalueAtThreshold(RegTreeError):
    """The counting threshold sits on an eigenvalue (to working precision).

    Callers are expected to perturb the threshold and retry.
    """

    def __init__(self, message, lam=None, lower=None, upper=None):
        super().__init__(message)
        self.lam = lam
        self.lower = lower
        self.upper = upper


class MeshTooCoarse(RegTreeError):
    pass


class ParseError(RegTreeError, ValueError):
    pass


class ValidationError(RegTreeError, ValueError):
    pass
