"""Exception types raised across the package.

Each class carries an ``exit_code`` used by the command-line front end:
1 usage, 2 validation, 3 numerical abort, 4 I/O.
"""

from __future__ import annotations


class RobosyncError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    kind = "Error"

    def fields(self) -> dict[str, str]:
        return {"detail": str(self)}


# -- validation (exit code 2) -------------------------------------------------


class ValidationError(RobosyncError, ValueError):
    """A configuration value or structural assumption is violated.

    Args:
        rule: Name of the violated rule or field (e.g. ``"Assumption 2"``).
        detail: Human-readable explanation.
    """

    exit_code = 2
    kind = "ValidationError"

    def __init__(self, rule: str, detail: str = ""):
        self.rule = rule
        self.detail = detail
        super().__init__(f"{rule}: {detail}" if detail else rule)

    def fields(self) -> dict[str, str]:
        return {"rule": self.rule, "detail": self.detail}


class InvalidEdge(ValidationError):
    kind = "InvalidEdge"

    def __init__(self, detail: str):
        super().__init__("topology.edges", detail)


class DuplicateEdge(ValidationError):
    kind = "DuplicateEdge"

    def __init__(self, parent: int, child: int):
        self.parent, self.child = parent, child
        super().__init__("topology.edges", f"duplicate edge ({parent}, {child})")


class NotSquare(ValidationError):
    kind = "NotSquare"

    def __init__(self, shape):
        super().__init__("leader.A0", f"matrix of shape {tuple(shape)} is not square")


class AssumptionViolated(ValidationError):
    """The leader matrix has an eigenvalue off the imaginary axis."""

    kind = "AssumptionViolated"

    def __init__(self, eigenvalue: complex, tol: float):
        self.eigenvalue = complex(eigenvalue)
        self.tol = tol
        super().__init__(
            "Assumption 1",
            f"eigenvalue {self.eigenvalue:.6g} of A0 has |Re| > {tol:g}",
        )


class DimensionMismatch(ValidationError):
    kind = "DimensionMismatch"

    def __init__(self, detail: str):
        super().__init__("dimensions", detail)


class DegenerateRange(ValidationError):
    kind = "DegenerateRange"

    def __init__(self, detail: str):
        super().__init__("rbf.ranges", detail)


class ParseError(RobosyncError):
    """The configuration document could not be read as structured text."""

    exit_code = 2
    kind = "ParseError"

    def __init__(self, detail: str, line: int | None = None):
        self.line = line
        self.detail = detail
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + detail)

    def fields(self) -> dict[str, str]:
        return {"line": "" if self.line is None else str(self.line), "detail": self.detail}


# -- numerical (exit code 3) --------------------------------------------------


class NumericalError(RobosyncError):
    exit_code = 3
    kind = "NumericalError"


class SingularMass(NumericalError):
    kind = "SingularMass"


class NumericalBlowup(NumericalError):
    """A non-finite value or a safety cap breach was detected mid-run."""

    kind = "NumericalBlowup"

    def __init__(self, t: float, agent: int | None, detail: str):
        self.t = t
        self.agent = agent
        self.detail = detail
        who = f"agent {agent}" if agent is not None else "network"
        super().__init__(f"t={t:.6g} s, {who}: {detail}")

    def fields(self) -> dict[str, str]:
        return {
            "t": repr(self.t),
            "agent": "" if self.agent is None else str(self.agent),
            "detail": self.detail,
        }


class TorqueCapExceeded(NumericalBlowup):
    kind = "TorqueCapExceeded"


class EmptyWindow(NumericalError, ValueError):
    kind = "EmptyWindow"


class EmptyLog(NumericalError, ValueError):
    kind = "EmptyLog"


# -- I/O (exit code 4) --------------------------------------------------------


class IoError(RobosyncError, OSError):
    exit_code = 4
    kind = "IoError"
