"""Host-side values crossing the method-call boundary."""

from __future__ import annotations

from .errors import ArityOrTypeMismatch
from .ir import FunctionDecl


class Out:
    """Caller-owned cell for a by-pointer (out) parameter.

    Both executors read ``value`` on entry and write the final value back
    only when the call completes (for transactions: after commit).
    """

    __slots__ = ("value",)

    def __init__(self, value=None):
        self.value = value

    def __repr__(self):
        return f"Out({self.value!r})"


def check_args(fn: FunctionDecl, args: tuple) -> list:
    """Validate host arguments against ``fn``; returns initial variable values."""
    if len(args) != len(fn.params):
        raise ArityOrTypeMismatch(f"{fn.name} takes {len(fn.params)} arguments, got {len(args)}")
    out = []
    for p, a in zip(fn.params, args):
        if p.by_ptr:
            if not isinstance(a, Out):
                raise ArityOrTypeMismatch(f"{fn.name}: parameter {p.name} needs an Out cell")
            a = p.type.default() if a.value is None else a.value
        if p.type.tag == "f64" and isinstance(a, int) and not isinstance(a, bool):
            a = float(a)
        if not p.type.accepts(a):
            raise ArityOrTypeMismatch(f"{fn.name}: {a!r} is not a valid {p.type} for {p.name}")
        out.append(a)
    return out
