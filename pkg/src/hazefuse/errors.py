"""Exception hierarchy shared by every hazefuse module.

Every error derives from :class:`HazeError` so callers (the CLI in
particular) can separate data problems from programming errors. Most also
derive from the closest builtin so plain ``except ValueError`` keeps working.
"""

from __future__ import annotations


class HazeError(Exception):
    """Base class for all hazefuse errors."""


class IoFailure(HazeError, OSError):
    pass


# observation store
class InvariantViolation(HazeError, ValueError):
    pass


class DuplicateId(HazeError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "duplicate id"


class MalformedQuery(HazeError, ValueError):
    pass


class MalformedRecord(HazeError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
        self.line = line
        self.path = path


class UnsupportedPhenomenon(HazeError, ValueError):
    pass


# numerics / geometry
class DomainError(HazeError, ValueError):
    pass


class OutOfRange(HazeError, ValueError):
    pass


class DimensionMismatch(HazeError, ValueError):
    pass


class LengthMismatch(HazeError, ValueError):
    pass


# sky classifier
class DegenerateData(HazeError, ValueError):
    pass


class UntrainedModel(HazeError, RuntimeError):
    pass


# Table RG
class MalformedTable(HazeError, ValueError):
    pass


class NonMonotoneRow(MalformedTable):
    def __init__(self, sza: float, message: str = ""):
        super().__init__(message or f"rg row at sza={sza:g} is not strictly monotone in aod")
        self.sza = sza


class OutOfArea(HazeError, ValueError):
    pass


class TableRangeError(HazeError, ValueError):
    pass


# filter photos
class DegenerateFit(HazeError, ValueError):
    pass


class UntrainedCurve(HazeError, RuntimeError):
    pass


# ingestion
class MalformedDocument(HazeError, ValueError):
    pass


class RuleCompileError(HazeError, ValueError):
    pass


class CatalogUnreadable(HazeError, OSError):
    pass


# fusion
class MixedPhenomena(HazeError, ValueError):
    pass


class TooFewPoints(HazeError, ValueError):
    pass


class InsufficientBins(HazeError, ValueError):
    pass


class SingularSystem(HazeError, ArithmeticError):
    def __init__(self, message: str, condition: float | None = None):
        if condition is not None:
            message = f"{message} (condition number ~ {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class OutOfExtent(HazeError, ValueError):
    pass
