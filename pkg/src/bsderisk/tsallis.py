"""Deformed exponential/logarithm pair used by the generalized-entropy measures.

For deformation index q != 1,

    exp_q(x) = (1 + (1-q)*x)^(1/(1-q))      ln_q(x) = (x^(1-q) - 1)/(1-q)

and the classical exp/ln are recovered as q -> 1.  Both maps are strictly
increasing on their domains and mutually inverse where defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["QIndex", "DomainError", "exp_q", "ln_q"]

# Below this distance from q = 1 the classical branch is used; the deformed
# formula cancels catastrophically as 1-q -> 0.
_Q_ONE_TOL = 1e-8


class DomainError(ValueError):
    """Argument outside the domain of exp_q / ln_q."""

    def __init__(self, func: str, x: float, q: float, bound: str):
        self.func = func
        self.x = x
        self.q = q
        self.bound = bound
        super().__init__(f"{func}: x={x!r} outside domain for q={q} (requires {bound})")


@dataclass(frozen=True)
class QIndex:
    """Deformation index q > 0 with its coefficient 1-q kept consistent."""

    q: float
    one_minus_q: float = field(init=False)

    def __post_init__(self):
        if not (self.q > 0.0 and np.isfinite(self.q)):
            raise ValueError(f"q must be a positive finite real, got {self.q}")
        object.__setattr__(self, "one_minus_q", 1.0 - self.q)

    @property
    def is_classical(self) -> bool:
        return abs(self.one_minus_q) < _Q_ONE_TOL


def _as_qindex(q) -> QIndex:
    return q if isinstance(q, QIndex) else QIndex(float(q))


def exp_q(x, q):
    """Deformed exponential, elementwise on scalars or arrays.

    Domain: for q in (0,1) requires x >= 1/(q-1) (boundary included, value 0);
    for q > 1 requires x < 1/(q-1); any x for q = 1.
    """
    qi = _as_qindex(q)
    x = np.asarray(x, dtype=float)
    if qi.is_classical:
        out = np.exp(x)
        return out if out.ndim else float(out)
    omq = qi.one_minus_q
    base = 1.0 + omq * x
    if qi.q < 1.0:
        bad = base < 0.0
        if np.any(bad):
            xb = float(np.min(x)) if x.ndim else float(x)
            raise DomainError("exp_q", xb, qi.q, f"x >= {1.0 / (qi.q - 1.0)}")
    else:
        bad = base <= 0.0
        if np.any(bad):
            xb = float(np.max(x)) if x.ndim else float(x)
            raise DomainError("exp_q", xb, qi.q, f"x < {1.0 / (qi.q - 1.0)}")
    out = base ** (1.0 / omq)
    return out if out.ndim else float(out)


def ln_q(x, q):
    """Deformed logarithm, inverse of exp_q on the shared domain.

    Domain: x >= 0 for q in (0,1); x > 0 for q >= 1.
    """
    qi = _as_qindex(q)
    x = np.asarray(x, dtype=float)
    if qi.is_classical:
        if np.any(x <= 0.0):
            raise DomainError("ln_q", float(np.min(x)), qi.q, "x > 0")
        out = np.log(x)
        return out if out.ndim else float(out)
    if qi.q < 1.0:
        if np.any(x < 0.0):
            raise DomainError("ln_q", float(np.min(x)), qi.q, "x >= 0")
    else:
        if np.any(x <= 0.0):
            raise DomainError("ln_q", float(np.min(x)), qi.q, "x > 0")
    omq = qi.one_minus_q
    out = (x**omq - 1.0) / omq
    return out if out.ndim else float(out)
