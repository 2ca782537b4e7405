"""Exception hierarchy shared by all qmsr modules."""


class QMSRError(Exception):
    """Base class for errors raised by qmsr."""


class ValidationError(QMSRError, ValueError):
    """Input failed a shape, finiteness or invariant check."""


class RankDeficientError(QMSRError, ArithmeticError):
    """The sampled basis ``P @ V`` lost full column rank.

    Attributes
    ----------
    rank : int
        Numerical rank that was detected.
    r : int
        Rank that was required.
    """

    def __init__(self, rank, r, message=None):
        self.rank = int(rank)
        self.r = int(r)
        if message is None:
            message = f"sampled basis has numerical rank {self.rank} < {self.r}"
        super().__init__(message)
