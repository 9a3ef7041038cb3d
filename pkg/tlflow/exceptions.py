"""Custom exceptions used within the package."""

from typing import Iterable, Optional, Sequence


class TlflowError(Exception):
    """Base class of every diagnostic the compiler or simulator reports."""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        *args,
    ) -> None:
        super().__init__(message, *args)
        self.message = message
        self.line = line
        self.column = column
        self.path: Optional[str] = None

    def location(self, path: str = "<input>") -> str:
        """Render `file:line:column` (or as much of it as is known)."""
        if self.line is None:
            return path
        if self.column is None:
            return f"{path}:{self.line}"
        return f"{path}:{self.line}:{self.column}"

    def __str__(self) -> str:
        return self.message


class TlvSyntaxError(TlflowError):
    """Indicates source text the frontend could not tokenize or parse."""


class ElaborationError(TlflowError):
    """Indicates an illegal scope fusion or component instantiation."""


class UnknownComponentError(ElaborationError):
    """Indicates an instantiation of a component the library does not have."""

    def __init__(
        self, name: str, known: Iterable[str], line=None, column=None
    ) -> None:
        super().__init__(
            f"unknown component '{name}'; the library provides: "
            f"{', '.join(sorted(known))}",
            line,
            column,
        )
        self.name = name


class ArityMismatchError(ElaborationError):
    """Indicates an instantiation with the wrong number of arguments."""

    def __init__(
        self, name: str, expected: int, got: int, line=None, column=None
    ) -> None:
        super().__init__(
            f"component '{name}' takes {expected} arguments, got {got}",
            line,
            column,
        )
        self.expected = expected
        self.got = got


class ReferenceResolutionError(TlflowError):
    """Indicates a signal, child-scope or index reference that cannot bind."""


class FlowError(TlflowError):
    """Indicates an illegal flow expression or an inconsistent flow graph."""


class UnresolvedFieldError(FlowError):
    """Indicates a consumed field with no producer on some upstream path."""

    def __init__(
        self, field: str, path: Sequence[str], line=None, column=None
    ) -> None:
        super().__init__(
            f"unresolved field ${field}: no producer upstream along "
            f"{' <- '.join(path)}",
            line,
            column,
        )
        self.field = field
        self.flow_path = tuple(path)


class MultiplyDrivenFieldError(FlowError):
    """Indicates a field produced twice along one directed flow path."""

    def __init__(self, field: str, first: str, second: str) -> None:
        super().__init__(
            f"field ${field} is multiply driven: produced at {first} "
            f"and again downstream at {second}"
        )
        self.field = field


class FieldWidthError(FlowError):
    """Indicates a bit-select reaching beyond a field's declared width."""

    def __init__(
        self, field: str, width: int, hi: int, line=None, column=None
    ) -> None:
        super().__init__(
            f"bit-select [{hi}:...] of ${field} exceeds its declared "
            f"width of {width} bits",
            line,
            column,
        )
        self.field = field


class StagingError(TlflowError):
    """Indicates a flow that cannot be turned into registers and logic."""


class CombinationalCycleError(StagingError):
    """Indicates a register-free feedback loop in the netlist."""

    def __init__(self, names: Sequence[str]) -> None:
        super().__init__(
            "combinational cycle: " + " -> ".join(list(names) + [names[0]])
        )
        self.names = tuple(names)


class SimulationError(TlflowError):
    """Indicates a failed simulation run or a failed end-of-run check."""


class DrainTimeoutError(SimulationError):
    """Indicates transactions still in flight after the drain phase."""

    def __init__(self, timeout: int, stuck: Sequence[str]) -> None:
        super().__init__(
            f"drain did not complete within {timeout} cycles (likely "
            f"deadlock); {len(stuck)} locations still occupied: "
            f"{', '.join(stuck[:8])}{' ...' if len(stuck) > 8 else ''}"
        )
        self.stuck = tuple(stuck)


class InterfaceMismatchError(SimulationError):
    """Indicates two netlists that cannot be compared transaction-wise."""


class ConfigError(TlflowError):
    """Indicates an invalid configuration value or configuration file."""
