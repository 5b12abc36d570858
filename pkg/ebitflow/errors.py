class EbitflowError(ValueError):
    """Base class for every error raised by ebitflow."""


class UnknownLabel(EbitflowError):
    pass


class InvalidPermutation(EbitflowError):
    pass


class DimensionMismatch(EbitflowError):
    pass


class InvalidBipartition(EbitflowError):
    pass


class LayoutMismatch(EbitflowError):
    pass


class WrongShape(EbitflowError):
    pass


class BadParam(EbitflowError):
    pass


class NotUnitary(EbitflowError):
    pass


class NotTracePreserving(EbitflowError):
    pass


class ValidationError(EbitflowError):
    """A state failed one of its invariants."""


class NotNormalized(ValidationError):
    pass


class NotHermitian(ValidationError):
    pass


class NotPositive(ValidationError):
    pass


class BadTrace(ValidationError):
    pass


class ParseError(EbitflowError):
    pass


class ConfigError(EbitflowError):
    def __init__(self, diagnostics: list[str]) -> None:
        self.diagnostics = tuple(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class BoundViolation(EbitflowError):
    def __init__(self, regime: str, margins: dict[str, float]) -> None:
        self.regime = regime
        self.margins = dict(margins)
        rendered = ", ".join(f"{name}={value:.3e}" for name, value in margins.items())
        super().__init__(f"{regime} bound violated: {rendered}")
