"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from collections.abc import Sequence


class SubtoriError(Exception):
    """Base class for every error raised by subtori."""

    exit_code = 1


class DimensionMismatchError(SubtoriError, ValueError):
    """Two objects built on different ``Dims`` were combined."""

    exit_code = 3


class ConfigError(SubtoriError, ValueError):
    """Invalid run configuration."""

    exit_code = 3


class ScenarioFormatError(SubtoriError, ValueError):
    """A scenario file could not be parsed."""

    exit_code = 3

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None) -> None:
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SeriesFormatError(SubtoriError, ValueError):
    """A series or chain text dump could not be parsed."""

    exit_code = 3

    def __init__(self, message: str, *, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ChartDomainError(SubtoriError, ValueError):
    """A parameter point lies outside (or too close to the edge of) a chart domain."""

    exit_code = 3


class ConditionError(SubtoriError):
    """A non-degeneracy condition required by an operation does not hold."""


class SingularNormalFormError(SubtoriError):
    """M or the principal minor of A is numerically singular."""


class ResonantDivisorError(SubtoriError):
    """A small divisor fell below its guard floor."""

    exit_code = 2

    def __init__(
        self,
        k: Sequence[int],
        kind: str,
        margin: float,
        threshold: float,
    ) -> None:
        self.k = tuple(int(v) for v in k)
        self.kind = kind
        self.margin = margin
        self.threshold = threshold
        super().__init__(
            f"resonant {kind} divisor at k={self.k}: margin {margin:.3e} <= floor {threshold:.3e}"
        )


class HypothesisError(SubtoriError):
    """A step hypothesis (H1-H4, first-order image, contraction) failed with measured sides."""

    def __init__(
        self, name: str, lhs: float, rhs: float, detail: str = "", *, report: Any = None
    ) -> None:
        self.name = name
        self.report = report
        self.lhs = lhs
        self.rhs = rhs
        msg = f"hypothesis {name} failed: {lhs:.3e} vs {rhs:.3e}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class LieSeriesDivergenceError(HypothesisError):
    """Lie series terms stopped decreasing before reaching the tolerance."""


class ResonanceExit(SubtoriError):
    """The parameter point was expelled from the surviving set during iteration."""

    exit_code = 2

    def __init__(self, step: int, certificate: Any, *, partial: Any = None) -> None:
        self.step = step
        self.certificate = certificate
        self.partial = partial
        super().__init__(f"parameter expelled from the non-resonant set at step {step}")


class IntegrationError(SubtoriError):
    """The integrator could not cover the requested horizon."""

    def __init__(self, message: str, sample: Any = None) -> None:
        self.sample = sample
        super().__init__(message)
