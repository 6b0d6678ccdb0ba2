"""Exception hierarchy shared by every stage of the pipeline."""


class SynthAugError(Exception):
    """Base class; ``kind`` is the machine-readable name used by the CLI."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class ParseError(SynthAugError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SynthAugError, ValueError):
    pass


class ConfigError(SynthAugError, ValueError):
    pass


# composer
class TooFewUtterances(SynthAugError, ValueError):
    pass


class OverlapError(SynthAugError, ValueError):
    pass


class InsufficientSpeakers(SynthAugError, ValueError):
    pass


# gateway
class EmptyInput(SynthAugError, ValueError):
    pass


class PoolTooSmall(SynthAugError, ValueError):
    pass


class ServiceUnavailable(SynthAugError, RuntimeError):
    pass


# metrics
class EmptyReference(SynthAugError, ValueError):
    pass


class DimensionMismatch(SynthAugError, ValueError):
    pass


class ZeroVector(SynthAugError, ValueError):
    pass


class UnbalancedRuns(SynthAugError, ValueError):
    pass


class TooFewScores(SynthAugError, ValueError):
    pass


# toy world / model
class CalibrationFailure(SynthAugError, RuntimeError):
    pass


class UnknownSpeaker(SynthAugError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class DivergenceDetected(SynthAugError, RuntimeError):
    pass


# projection
class PerplexityTooHigh(SynthAugError, ValueError):
    pass


class DegenerateInput(SynthAugError, ValueError):
    pass


# cli
class StaleUpstream(SynthAugError, RuntimeError):
    pass
