"""Exception hierarchy shared by the numerical services."""

from typing import Any, Optional


class GMsFEMError(Exception):
    """Base class for every error raised by kinetic-gmsfem."""


class InvalidArgumentError(GMsFEMError, ValueError):
    """A caller passed arguments outside an operation's preconditions."""


class NumericalFailureError(GMsFEMError, RuntimeError):
    """A linear algebra step failed (singular system, non-convergent eigensolve)."""

    def __init__(
        self,
        message: str,
        stage: str,
        block: Optional[int] = None,
        diagnostics: Optional[dict[str, Any]] = None,
    ):
        self.stage = stage
        self.block = block
        self.diagnostics = diagnostics or {}
        where = f"stage={stage}" + (f", block={block}" if block is not None else "")
        extra = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"{message} [{where}{', ' + extra if extra else ''}]")
