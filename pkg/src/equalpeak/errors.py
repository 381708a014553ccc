"""Exception hierarchy for equalpeak."""


class EqualPeakError(Exception):
    """Base class for every error raised by this package."""


class InvalidModelError(EqualPeakError, ValueError):
    pass


class SingularHostError(EqualPeakError, ArithmeticError):
    """The undamped host dynamic stiffness is singular at the requested frequency."""

    def __init__(self, mode_index, omega):
        self.mode_index = mode_index
        self.omega = omega
        super().__init__(
            f"host dynamic stiffness is singular at omega={omega!r} "
            f"(undamped mode {mode_index})"
        )


class AbsorberSingularityError(EqualPeakError, ArithmeticError):
    pass


class IllConditionedUpdateError(EqualPeakError, ArithmeticError):
    pass


class GradientUndefinedError(EqualPeakError, ArithmeticError):
    pass


class KernelUncoupledError(EqualPeakError, ArithmeticError):
    """No absorber couples to the resonant host mode, so the controlled
    dynamic stiffness is itself singular."""


class OracleSingularError(EqualPeakError, ArithmeticError):
    pass


class NodalAttachmentError(EqualPeakError, ValueError):
    def __init__(self, mode_index, amplitude):
        self.mode_index = mode_index
        self.amplitude = amplitude
        super().__init__(
            f"absorber sits on a nodal point of mode {mode_index} "
            f"(modal amplitude {amplitude:.3e})"
        )


class NoPeaksError(EqualPeakError):
    pass


class StalePeaksError(EqualPeakError):
    pass


class InfeasibleStartError(EqualPeakError, ValueError):
    pass


class ConfigError(EqualPeakError, ValueError):
    """Scenario configuration failed validation.

    ``problems`` lists every violated field, one message each.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(f"invalid scenario configuration:\n{lines}")


class UnsupportedParameterError(EqualPeakError, ValueError):
    pass
