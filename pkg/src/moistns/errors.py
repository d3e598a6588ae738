"""Exception hierarchy shared by all modules."""


class MoistNSError(Exception):
    """Base class for every error raised by the package."""


class ParseError(MoistNSError):
    """Configuration text could not be parsed."""


class ValidationError(MoistNSError):
    """A parameter set violates one of its invariants.

    The violated invariant is kept on ``self.invariant`` so callers can
    report it without parsing the message.
    """

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DomainError(MoistNSError):
    """A pointwise formula was evaluated outside its domain."""


class SolverDiverged(MoistNSError):
    """An implicit solve failed to reach its tolerance."""


class StateInvalid(MoistNSError):
    """The prognostic state left the admissible set (rho_d <= 0, NaN, ...)."""

    def __init__(self, reason: str, t: float | None = None):
        self.reason = reason
        self.t = t
        where = "" if t is None else f" at t={t:.6g}"
        super().__init__(f"StateInvalid{where}: {reason}")


class MapDegenerate(MoistNSError):
    """The Lagrangian flow map drifted too far from the identity."""
