"""Exception hierarchy shared by the scheduler modules."""


class SchedulerError(Exception):
    """Base class for all errors raised by lossy_sched."""


class DomainError(SchedulerError, ValueError):
    """An argument lies outside the domain of a distribution function."""


class InfeasiblePolicyError(SchedulerError, ValueError):
    """A policy violates the per-row probability budget."""


class ReducibleChainError(SchedulerError):
    """The transition matrix has more than one closed communicating class.

    Attributes
    ----------
    closed_classes : list of tuple of int
        The state indices of every closed class found.
    """

    def __init__(self, closed_classes):
        self.closed_classes = [tuple(int(s) for s in c) for c in closed_classes]
        super().__init__(
            "chain is decomposable; closed classes: "
            + ", ".join(str(list(c)) for c in self.closed_classes)
        )


class NumericalError(SchedulerError, ArithmeticError):
    """A linear solve or quadrature failed its residual check."""


class DegenerateDistributionError(SchedulerError, ValueError):
    """A policy never schedules, so the virtual-user distribution is empty."""


class DivergentEnergyError(SchedulerError, ArithmeticError):
    """The channel distribution puts mass at zero gain."""


class ConfigError(SchedulerError, ValueError):
    """An experiment or simulation configuration is inconsistent."""
