"""Exception types shared across the solver stack."""


class SplitviError(Exception):
    """Base class for all library errors."""


class NonConvergence(SplitviError):
    """An iterative dual maximization failed to bracket or refine a maximizer.

    Usually signals a Hamiltonian that violates the coercivity requirement.
    """


class WindowTooSmall(SplitviError):
    """The backward-operator minimizer saturated the search window.

    Signals that the effective control bound was underestimated; the caller
    should enlarge ``q_max`` and retry.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NonFinite(SplitviError):
    """A sampled function produced a NaN or infinity."""


class OutOfRange(SplitviError):
    """A query point lies outside the domain of definition."""


class UnsupportedProblem(SplitviError):
    """The problem does not satisfy a reference solver's preconditions."""


class PolicyIterationDiverged(SplitviError):
    """Finite-difference policy iteration exceeded its iteration cap."""


class FixedPointDiverged(SplitviError):
    """The switching-system component sweep exceeded its iteration cap."""


class OracleUnavailable(SplitviError):
    """No reference solver is configured or applicable for the problem."""


class ConfigError(SplitviError):
    """An experiment configuration is malformed or violates a constraint."""
