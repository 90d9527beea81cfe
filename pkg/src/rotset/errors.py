"""Shared exception types for enumeration caps and certification failures."""

from __future__ import annotations


class CapExceeded(RuntimeError):
    """An enumeration or grid exceeded its configured cap.

    Caps fail closed: no partial result is returned.  ``required`` carries
    the cap value (or a lower bound on it) that would have been needed.
    """

    def __init__(self, what: str, cap: int, required: int | None = None):
        self.what = what
        self.cap = cap
        self.required = required
        extra = f", requires >= {required}" if required is not None else ""
        super().__init__(f"{what}: cap exceeded (cap={cap}{extra})")


class NotCertified(RuntimeError):
    """A semi-decision procedure ran out of budget without a certificate.

    The caller cannot distinguish a genuine failure (boundary point, gap)
    from slow convergence.
    """


class EnclosureTooWide(RuntimeError):
    """A certified enclosure is too wide to satisfy a downstream invariant;
    retry with a smaller tolerance."""


class ConstructionViolated(RuntimeError):
    """A structural certificate check failed; names the failing step."""

    def __init__(self, step: str, detail: str = ""):
        self.step = step
        msg = f"construction violated at {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
