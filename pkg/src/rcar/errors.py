"""Exception hierarchy shared across the package."""


class RcarError(Exception):
    """Base class for all package errors."""


class PreconditionError(RcarError, ValueError):
    """A law or input violates a hypothesis an operation depends on.

    ``hypothesis`` names the violated condition so the CLI can report it.
    """

    def __init__(self, message, hypothesis=None):
        super().__init__(message)
        self.hypothesis = hypothesis


class NonIntegrableError(RcarError, ArithmeticError):
    """A log-moment integral diverged."""


class SimulationOverflowError(RcarError, FloatingPointError):
    """A simulated path left the finite floats.

    ``step`` is the 1-based index of the first non-finite state; ``chain``
    is filled in by the ensemble runner.
    """

    def __init__(self, step, chain=None):
        self.step = step
        self.chain = chain
        where = f"step {step}" if chain is None else f"chain {chain}, step {step}"
        super().__init__(f"state became non-finite at {where}")


class MissingDrivingError(RcarError, ValueError):
    """The trajectory was simulated without retaining (rho, eps) pairs."""


class TooFewCyclesError(RcarError, ValueError):
    pass


class RegenerationIdentityError(RcarError, AssertionError):
    """X at a regeneration time differs from the noise drawn at that time.

    This can only happen through an implementation bug.
    """


class ZeroVarianceError(RcarError, ValueError):
    pass


class AllInvalidError(RcarError, ValueError):
    """Every entry of a ratio estimate fell below the denominator floor."""


class ConfigError(RcarError, ValueError):
    pass
