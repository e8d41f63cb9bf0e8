"""Fully-dynamic risk measure constructions.

A measure maps (t-index, maturity-index, claim) to a RandomField at t.  Five
constructions are provided: from a single driver, from a maturity-indexed
driver family, closed forms (entropic, deformed-entropic on losses, and its
translated variant), and discount-wrapping of a cash-additive base measure.

Claims measurable before the requested maturity are handled by the terminal
extension built into the solver (value held, Z = 0 on the tail), so a measure
can be evaluated at any maturity >= the claim's measurability index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import tsallis
from .bsde import (
    EPS_DOM,
    Driver,
    DriverFamily,
    SolveOptions,
    NonFiniteError,
    driver_from_label,
    family_from_label,
    g_expectation,
)
from .stochastic import Claim, DiscountCurve, LsmcContext, RandomField, TimeGrid
from .tsallis import DomainError

__all__ = [
    "RiskMeasure",
    "DriverMeasure",
    "FamilyMeasure",
    "MeanMeasure",
    "EntropicMeasure",
    "QEntropicClosed",
    "QEntropicOnLosses",
    "QEntropicOnLossesBSDE",
    "TranslatedQEntropic",
    "DiscountedMeasure",
    "measure_from_label",
    "rho_from_driver",
    "rho_from_family",
    "q_entropic_closed",
    "q_entropic_on_losses",
    "translated_q_entropic",
    "entropic",
    "discounted_wrap",
]

ClaimLike = Union[Claim, RandomField]


def _terminal(ctx: LsmcContext, claim: ClaimLike) -> RandomField:
    if isinstance(claim, Claim):
        return claim.evaluate(ctx.ensemble)
    return claim


def _positive_part_of_loss(values: np.ndarray, beta: float) -> np.ndarray:
    """(X + beta)^- : the loss exceeding the acceptable level beta."""
    return np.maximum(-(values + beta), 0.0)


def _safe_ln_q(field: RandomField, q: float) -> RandomField:
    vals = field.values
    if np.any(vals <= 0.0) and (q >= 1.0 or np.any(vals < 0.0)):
        raise NonFiniteError(
            "conditional expectation left the deformed-log domain "
            f"(min fitted value {float(np.min(vals))}); enlarge the basis or path count"
        )
    return RandomField(field.index, np.asarray(tsallis.ln_q(vals, q)))


class RiskMeasure:
    """Base class: evaluation is a pure function of immutable inputs."""

    label: str = ""
    is_cash_additive: bool = False

    def evaluate(
        self,
        ctx: LsmcContext,
        t_index: int,
        claim: ClaimLike,
        maturity: Optional[int] = None,
        aux: Optional[np.ndarray] = None,
    ) -> RandomField:
        field = _terminal(ctx, claim)
        m = field.index if maturity is None else maturity
        if not (0 <= t_index <= m <= ctx.grid.n_steps):
            raise ValueError(f"need 0 <= t={t_index} <= u={m} <= {ctx.grid.n_steps}")
        if field.index > m:
            raise ValueError(f"claim measurable at {field.index} but maturity {m}")
        return self._evaluate(ctx, t_index, field, m, aux)

    def _evaluate(self, ctx, t_index, field, maturity, aux) -> RandomField:
        raise NotImplementedError


@dataclass
class DriverMeasure(RiskMeasure):
    """rho_{tu}(X) = Y_t of the backward solve with terminal -X and generator g."""

    driver: Driver
    options: SolveOptions = SolveOptions()

    def __post_init__(self):
        self.label = f"driver:{self.driver.label}"
        self.is_cash_additive = not self.driver.depends_on_y

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        return g_expectation(
            self.driver, -field, t_index, ctx, maturity=maturity, options=self.options, aux=aux
        )


@dataclass
class FamilyMeasure(RiskMeasure):
    """As DriverMeasure but the generator is selected by the maturity time.

    With on_losses_beta set, the terminal is (X+beta)^- instead of -X: the
    losses composition keeps quadratic-generator members inside their domain
    guard for unbounded claims.
    """

    family: DriverFamily
    options: SolveOptions = SolveOptions()
    on_losses_beta: Optional[float] = None

    def __post_init__(self):
        prefix = "family_losses" if self.on_losses_beta is not None else "family"
        self.label = f"{prefix}:{self.family.label}"
        self.is_cash_additive = False

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        driver = self.family.at(maturity * ctx.grid.dt)
        if self.on_losses_beta is None:
            terminal = -field
        else:
            terminal = RandomField(
                field.index, _positive_part_of_loss(field.values, self.on_losses_beta)
            )
        return g_expectation(
            driver, terminal, t_index, ctx, maturity=maturity, options=self.options, aux=aux
        )


class MeanMeasure(RiskMeasure):
    """Negative conditional expectation, the simplest cash-additive base."""

    label = "mean"
    is_cash_additive = True

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        return ctx.cond_expect(-field, t_index, aux=aux)


class EntropicMeasure(RiskMeasure):
    """Classical closed form: log E[exp(-X) | F_t]."""

    label = "entropic"
    is_cash_additive = True

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        ef = RandomField(field.index, np.exp(-field.values))
        return _safe_ln_q(ctx.cond_expect(ef, t_index, aux=aux, clip=True), 1.0)


@dataclass
class QEntropicClosed(RiskMeasure):
    """Deformed closed form ln_q E[exp_q(-X)|F_t] on its restricted domain.

    Requires -X >= 1/(q-1) + eps pathwise; the DomainError raised otherwise
    is the reason the losses variant below exists.
    """

    q: float
    eps: float = EPS_DOM

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0,1), got {self.q}")
        self.label = f"qent_closed:{self.q:g}"
        self.is_cash_additive = False

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        neg_x = -field.values
        bound = 1.0 / (self.q - 1.0) + self.eps
        if np.any(neg_x < bound):
            raise DomainError("exp_q", float(np.min(neg_x)), self.q, f"-X >= {bound}")
        eq = RandomField(field.index, np.asarray(tsallis.exp_q(neg_x, self.q)))
        return _safe_ln_q(ctx.cond_expect(eq, t_index, aux=aux, clip=True), self.q)


@dataclass
class QEntropicOnLosses(RiskMeasure):
    """ln_q E[exp_q((X+beta)^-) | F_t]: defined for every claim, always >= 0.

    q = 1 is admitted and selects the classical branch (entropic on losses).
    """

    q: float
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0,1], got {self.q}")
        if self.beta < 0.0:
            raise ValueError(f"acceptable loss level beta must be >= 0, got {self.beta}")
        self.label = f"qent:{self.q:g},{self.beta:g}"
        self.is_cash_additive = False

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        loss = _positive_part_of_loss(field.values, self.beta)
        eq = RandomField(field.index, np.asarray(tsallis.exp_q(loss, self.q)))
        return _safe_ln_q(ctx.cond_expect(eq, t_index, aux=aux, clip=True), self.q)


@dataclass
class QEntropicOnLossesBSDE(RiskMeasure):
    """Backward-solver route to the losses measure: the g-expectation of
    (X+beta)^- under the deformed quadratic generator.

    Cross-validates the closed form QEntropicOnLosses; the nonnegative
    terminal keeps the solve inside the generator's domain guard.
    """

    q: float
    beta: float = 0.0
    options: SolveOptions = SolveOptions()

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0,1], got {self.q}")
        self.label = f"qent_bsde:{self.q:g},{self.beta:g}"
        self.is_cash_additive = False

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        loss = RandomField(field.index, _positive_part_of_loss(field.values, self.beta))
        driver = driver_from_label(f"q_entropic:{self.q:g}")
        return g_expectation(
            driver, loss, t_index, ctx, maturity=maturity, options=self.options, aux=aux
        )


@dataclass
class TranslatedQEntropic(RiskMeasure):
    """Losses variant with a deterministic nonnegative translation rate a(t):

        ln_q E[exp_q((X+beta)^- + integral_t^u a(s) ds) | F_t]

    Reduces to QEntropicOnLosses for a = 0; the maturity enters through the
    integral bound, so longer horizons carry a nonnegative premium.
    """

    q: float
    beta: float = 0.0
    a: Union[float, Callable[[float], float]] = 0.0

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0,1], got {self.q}")
        a_repr = f"{self.a:g}" if not callable(self.a) else "a(t)"
        self.label = f"qent_tr:{self.q:g},{self.beta:g},{a_repr}"
        self.is_cash_additive = False

    def rate(self, t: float) -> float:
        r = self.a(t) if callable(self.a) else float(self.a)
        if r < 0.0:
            raise ValueError(f"translation rate must be >= 0, got a({t}) = {r}")
        return r

    def integral(self, ctx: LsmcContext, t_index: int, u_index: int) -> float:
        dt = ctx.grid.dt
        return sum(self.rate(k * dt) for k in range(t_index, u_index)) * dt

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        loss = _positive_part_of_loss(field.values, self.beta)
        arg = loss + self.integral(ctx, t_index, maturity)
        eq = RandomField(field.index, np.asarray(tsallis.exp_q(arg, self.q)))
        return _safe_ln_q(ctx.cond_expect(eq, t_index, aux=aux, clip=True), self.q)


@dataclass
class DiscountedMeasure(RiskMeasure):
    """Wrap a cash-additive base: rho_{tu}(X) = base_{tu}(D(t,u) X).

    The construction yields cash subadditivity from D <= 1; it refuses
    non-cash-additive bases because the subadditivity argument needs exact
    translation invariance of the base.
    """

    base: RiskMeasure
    curve: DiscountCurve

    def __post_init__(self):
        if not self.base.is_cash_additive:
            raise ValueError(f"discounted wrapper requires a cash-additive base, got {self.base.label}")
        rates = np.asarray(self.curve.rates)
        tag = f"{rates[0]:g}" if np.all(rates == rates[0]) else "curve"
        self.label = f"discounted:{self.base.label},{tag}"
        self.is_cash_additive = False

    def _evaluate(self, ctx, t_index, field, maturity, aux):
        d = self.curve.factor(t_index, maturity)
        scaled = RandomField(field.index, d * field.values)
        return self.base._evaluate(ctx, t_index, scaled, maturity, aux)


def measure_from_label(label: str, grid: TimeGrid) -> RiskMeasure:
    """Construction strings:

    mean | entropic | qent:q,beta | qent_tr:q,beta,a | qent_closed:q
    | qent_bsde:q,beta | driver:<driver label> | family:<family label>
    | family_losses:<family label> | discounted:<base>,r
    """
    if label == "mean":
        return MeanMeasure()
    if label == "entropic":
        return EntropicMeasure()
    name, _, arg = label.partition(":")
    if name == "qent":
        qs, bs = arg.split(",")
        return QEntropicOnLosses(float(qs), float(bs))
    if name == "qent_tr":
        qs, bs, a_s = arg.split(",")
        return TranslatedQEntropic(float(qs), float(bs), float(a_s))
    if name == "qent_closed":
        return QEntropicClosed(float(arg))
    if name == "qent_bsde":
        qs, bs = arg.split(",")
        return QEntropicOnLossesBSDE(float(qs), float(bs))
    if name == "driver":
        return DriverMeasure(driver_from_label(arg))
    if name == "family":
        return FamilyMeasure(family_from_label(arg))
    if name == "family_losses":
        return FamilyMeasure(family_from_label(arg), on_losses_beta=0.0)
    if name == "discounted":
        base_label, r_s = arg.rsplit(",", 1)
        base = measure_from_label(base_label, grid)
        return DiscountedMeasure(base, DiscountCurve.flat(grid, float(r_s)))
    raise KeyError(f"unknown measure label {label!r}")


# ---------------------------------------------------------------------------
# Functional forms of the operations
# ---------------------------------------------------------------------------

def rho_from_driver(ctx, driver: Driver, claim: ClaimLike, t_index: int, maturity=None, **kw):
    return DriverMeasure(driver, **kw).evaluate(ctx, t_index, claim, maturity)


def rho_from_family(ctx, family: DriverFamily, claim: ClaimLike, t_index: int, maturity=None, **kw):
    return FamilyMeasure(family, **kw).evaluate(ctx, t_index, claim, maturity)


def q_entropic_closed(ctx, q: float, claim: ClaimLike, t_index: int, maturity=None):
    return QEntropicClosed(q).evaluate(ctx, t_index, claim, maturity)


def q_entropic_on_losses(ctx, q: float, beta: float, claim: ClaimLike, t_index: int, maturity=None):
    return QEntropicOnLosses(q, beta).evaluate(ctx, t_index, claim, maturity)


def translated_q_entropic(ctx, q: float, beta: float, a, claim: ClaimLike, t_index: int, maturity=None):
    return TranslatedQEntropic(q, beta, a).evaluate(ctx, t_index, claim, maturity)


def entropic(ctx, claim: ClaimLike, t_index: int, maturity=None):
    return EntropicMeasure().evaluate(ctx, t_index, claim, maturity)


def discounted_wrap(ctx, base: RiskMeasure, curve: DiscountCurve, claim: ClaimLike, t_index: int, maturity=None):
    return DiscountedMeasure(base, curve).evaluate(ctx, t_index, claim, maturity)
