"""Exception hierarchy. Every error raised by the toolkit derives from JudgecalError."""

from __future__ import annotations


class JudgecalError(Exception):
    """Base class for toolkit errors."""


class UnknownModel(JudgecalError, LookupError):
    def __init__(self, model_id: str, where: str = "") -> None:
        self.model_id = model_id
        suffix = f" ({where})" if where else ""
        super().__init__(f"unknown model id {model_id!r}{suffix}")


class ParseError(JudgecalError, ValueError):
    """Malformed input; carries the 1-based line number when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None) -> None:
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            loc = f"line {line}: "
        super().__init__(f"{loc}{message}")


class RangeError(ParseError):
    """A value outside its permitted range."""


class DuplicateError(ParseError):
    pass


class SelfPair(ParseError):
    pass


class EmptyInput(JudgecalError, ValueError):
    pass


class Infeasible(JudgecalError):
    """The preference constraints admit no point on the (epsilon-bounded) simplex."""

    def __init__(self, margin: float, violating: list | None = None) -> None:
        self.margin = margin
        self.violating = list(violating or [])
        msg = f"constraint set is infeasible (margin {margin:.3e})"
        if self.violating:
            msg += "; infeasible subset: " + ", ".join(str(c) for c in self.violating)
        super().__init__(msg)


class NonConvergence(JudgecalError):
    def __init__(self, message: str, iterate=None, residuals: dict | None = None) -> None:
        self.iterate = iterate
        self.residuals = dict(residuals or {})
        super().__init__(message)


class Undefined(JudgecalError, ValueError):
    """A correlation is undefined, e.g. because one ranking is fully tied."""


class MissingPrediction(JudgecalError, LookupError):
    def __init__(self, key) -> None:
        self.key = key
        super().__init__(f"no predicted contest for human judgment {key!r}")


class ParseFailure(JudgecalError, ValueError):
    """Judge completion did not contain recognisable scores."""


class EndpointError(JudgecalError):
    pass
