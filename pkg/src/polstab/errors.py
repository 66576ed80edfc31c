"""Exception hierarchy shared by every module."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class AmbiguousAxisError(ValidationError):
    """Antipodal rotation request without a tie-break axis."""


class DegenerateReferencesError(ValidationError):
    """Reference SOPs are (close to) collinear on the Poincare sphere.

    Two references lying on one axis of the sphere leave the rotation about
    that axis unobservable, so the compensator cannot be determined.
    """


class ExtrapolationError(ValidationError):
    """Lookup outside the tabulated domain."""


class UndefinedRateError(ArithmeticError):
    """A rate was requested with an empty denominator (no sifted events)."""


class ConfigError(ValidationError):
    """One or more configuration problems, reported together."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
