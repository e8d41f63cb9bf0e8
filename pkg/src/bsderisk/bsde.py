"""BSDE drivers, horizon-indexed driver families and the backward solver.

The solver runs an explicit backward Euler scheme with optional Picard
refinement of the y-argument.  At each step i (maturity m down to `stop`):

    Z_i   = (1/dt) * Pi_i[(Y_{i+1} - Pi_i[Y_{i+1}]) * dB_i]   componentwise
    Yhat  = Pi_i[Y_{i+1}]
    Y_i   = Yhat + g(t_i, y*, Z_i) * dt

where Pi_i is the least-squares projection at node i, y* starts at Yhat and
is refined by fixed-point passes when the driver depends on y, and |Z_i| is
clipped componentwise before driver evaluation (tail guard for the quadratic
drivers, inactive for Lipschitz ones at desk scale).

Centering the Z-regressand on Pi_i[Y_{i+1}] estimates the same conditional
expectation (the centering term has zero conditional mean) and makes the
solution exactly invariant under constant terminal shifts, which the cash
additivity contract for y-free drivers requires at the 1e-8 level.

Terminal conditions measurable before maturity (field.index < maturity) are
propagated through the tail (index >= field.index) with Z = 0 and the
pathwise backward ODE step Y_i = Y_{i+1} + g(t_i, y*, 0) dt: conditioning an
already-measurable quantity is the identity, and the true Z vanishes there.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from typing import Callable, Optional, Sequence

import numpy as np

from .stochastic import LsmcContext, RandomField

__all__ = [
    "Driver",
    "DriverFamily",
    "SolveOptions",
    "BSDESolution",
    "DomainGuardViolation",
    "NonFiniteError",
    "solve",
    "g_expectation",
    "check_increasing",
    "driver_from_label",
    "family_from_label",
    "shifted",
    "default_registry_labels",
    "EPS_DOM",
]

# Domain-guard margin for the quadratic generator: 1 + (1-q) y >= EPS_DOM.
EPS_DOM = 1e-3


class DomainGuardViolation(RuntimeError):
    def __init__(self, path: int, index: int, y: float, label: str):
        self.path, self.index, self.y = path, index, y
        super().__init__(
            f"driver {label!r}: domain guard violated on path {path} at node {index} (y={y})"
        )


class NonFiniteError(RuntimeError):
    pass


@dataclass(frozen=True)
class Driver:
    """BSDE generator g(t, y, z) evaluated pathwise.

    fn maps (t: float, y: (n,), z: (n, d)) -> (n,).  The z=0 flags are
    declarative metadata; `verify_flags` spot-checks them on a sample grid.
    """

    fn: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    label: str
    depends_on_y: bool = False
    domain_guard: Optional[Callable[[np.ndarray], np.ndarray]] = None
    nonneg_at_z0: bool = False
    zero_at_z0: bool = False

    def __call__(self, t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(t, y, z), dtype=float)

    def guard_ok(self, y: np.ndarray) -> np.ndarray:
        if self.domain_guard is None:
            return np.ones(y.shape, dtype=bool)
        return np.asarray(self.domain_guard(y), dtype=bool)

    def verify_flags(self, ts: Sequence[float], ys: Sequence[float], dim: int = 1) -> None:
        """Spot-check the z=0 flags on a (t, y) sample grid."""
        z0 = np.zeros((1, dim))
        for t in ts:
            for y in ys:
                ya = np.array([float(y)])
                if not bool(self.guard_ok(ya)[0]):
                    continue
                g0 = float(self(t, ya, z0)[0])
                if self.zero_at_z0 and abs(g0) > 1e-12:
                    raise AssertionError(f"{self.label}: g({t},{y},0)={g0} but flagged zero at z=0")
                if self.nonneg_at_z0 and g0 < -1e-12:
                    raise AssertionError(f"{self.label}: g({t},{y},0)={g0} but flagged nonneg at z=0")


@dataclass(frozen=True)
class DriverFamily:
    """Maturity-indexed generators u -> g_u (maturity passed as a grid time)."""

    member: Callable[[float], Driver]
    label: str

    def at(self, u_time: float) -> Driver:
        return self.member(u_time)


def shifted(driver: Driver, a: float, label: Optional[str] = None) -> Driver:
    """Driver with a constant added to the generator."""
    return Driver(
        fn=lambda t, y, z: driver.fn(t, y, z) + a,
        label=label or f"{driver.label}+{a:g}",
        depends_on_y=driver.depends_on_y,
        domain_guard=driver.domain_guard,
        nonneg_at_z0=driver.nonneg_at_z0 and a >= 0.0,
        zero_at_z0=driver.zero_at_z0 and a == 0.0,
    )


@dataclass(frozen=True)
class SolveOptions:
    picard_iters: int = 3
    z_clip: float = 10.0


@dataclass
class BSDESolution:
    """Backward solution on indices [stop, maturity].

    Y has shape (maturity+1, n_paths) with rows < stop unset; Z has shape
    (maturity, n_paths, d).  Y at maturity equals the terminal condition
    exactly, and an accepted solution has zero domain-guard violations.
    """

    Y: np.ndarray
    Z: np.ndarray
    stop: int
    maturity: int
    diagnostics: dict = dfield(default_factory=dict)

    def field_at(self, i: int) -> RandomField:
        if not (self.stop <= i <= self.maturity):
            raise IndexError(f"index {i} outside solved range [{self.stop}, {self.maturity}]")
        return RandomField(i, self.Y[i])

    def z_at(self, i: int) -> np.ndarray:
        if not (self.stop <= i < self.maturity):
            raise IndexError(f"z index {i} outside [{self.stop}, {self.maturity})")
        return self.Z[i]


def solve(
    driver: Driver,
    terminal: RandomField,
    maturity: int,
    ctx: LsmcContext,
    options: SolveOptions = SolveOptions(),
    stop: int = 0,
    aux: Optional[np.ndarray] = None,
) -> BSDESolution:
    """Backward solve with terminal condition `terminal` at index `maturity`.

    `aux` supplies extra adapted regressors (e.g. earlier-time state a claim
    depends on) appended to the Brownian basis at every regression node.
    Raises DomainGuardViolation / NonFiniteError on unacceptable states.
    """
    grid, ens = ctx.grid, ctx.ensemble
    n, d, dt = ens.n_paths, ens.dim, grid.dt
    if terminal.index > maturity:
        raise ValueError(f"terminal measurable at {terminal.index} > maturity {maturity}")
    if maturity > grid.n_steps:
        raise IndexError(f"maturity {maturity} beyond grid end {grid.n_steps}")
    if terminal.n_paths != n:
        raise ValueError("terminal field defined on a different ensemble")

    meas = terminal.index
    Y = np.empty((maturity + 1, n))
    Z = np.zeros((maturity, n, d))
    Y[maturity] = terminal.values
    fallbacks_before = ctx.fallback_count
    picard_total = 0
    # range-clamp the continuation fit only when a domain guard is present:
    # guarded generators must not see polynomial tail overshoot, while
    # unguarded ones keep the exact linearity of raw least squares
    clip_fit = driver.domain_guard is not None

    def drive(t: float, y: np.ndarray, z: np.ndarray, i: int) -> np.ndarray:
        bad = ~driver.guard_ok(y)
        if np.any(bad):
            p = int(np.argmax(bad))
            raise DomainGuardViolation(p, i, float(y[p]), driver.label)
        return driver(t, y, z)

    for i in range(maturity - 1, stop - 1, -1):
        t_i = i * dt
        if i >= meas:
            # terminal already measurable here: identity projection, Z = 0
            yhat = Y[i + 1]
            z_i = np.zeros((n, d))
        else:
            proj = ctx.projector(i, aux)
            yhat = proj.fitted(Y[i + 1], clip=clip_fit)
            resid = Y[i + 1] - yhat
            z_i = proj.fitted(resid[:, None] * ens.increments[:, i, :]) / dt
            Z[i] = z_i
        zc = np.clip(z_i, -options.z_clip, options.z_clip)
        ystar = yhat
        if driver.depends_on_y:
            for _ in range(options.picard_iters):
                ystar = yhat + drive(t_i, ystar, zc, i) * dt
                picard_total += 1
        Y[i] = yhat + drive(t_i, ystar, zc, i) * dt
        if not np.all(np.isfinite(Y[i])):
            raise NonFiniteError(f"driver {driver.label!r}: non-finite Y at node {i}")

    return BSDESolution(
        Y=Y,
        Z=Z,
        stop=stop,
        maturity=maturity,
        diagnostics={
            "picard_evals": picard_total,
            "guard_violations": 0,
            "regression_fallbacks": ctx.fallback_count - fallbacks_before,
        },
    )


def g_expectation(
    driver: Driver,
    terminal: RandomField,
    t_index: int,
    ctx: LsmcContext,
    maturity: Optional[int] = None,
    options: SolveOptions = SolveOptions(),
    aux: Optional[np.ndarray] = None,
) -> RandomField:
    """Nonlinear conditional expectation: the Y-component at t_index of the
    backward solution with the given terminal condition."""
    m = terminal.index if maturity is None else maturity
    sol = solve(driver, terminal, m, ctx, options=options, stop=t_index, aux=aux)
    return sol.field_at(t_index)


def check_increasing(
    family: DriverFamily,
    maturities: Sequence[float],
    ts: Sequence[float],
    ys: Sequence[float],
    zs: Sequence[float],
    dim: int = 1,
):
    """Sampled check that g_t(v,y,z) <= g_u(v,y,z) for t <= u, v <= t.

    Returns (ok, witness); witness is the violating (t, u, v, y, z) tuple.
    """
    mats = sorted(maturities)
    if len(mats) < 2:
        raise ValueError("need at least two maturities")
    for a_idx in range(len(mats) - 1):
        for b_idx in range(a_idx + 1, len(mats)):
            u1, u2 = mats[a_idx], mats[b_idx]
            g1, g2 = family.at(u1), family.at(u2)
            for v in ts:
                if v > u1:
                    continue
                for y in ys:
                    ya = np.array([float(y)])
                    if not (g1.guard_ok(ya)[0] and g2.guard_ok(ya)[0]):
                        continue
                    for z in zs:
                        za = np.full((1, dim), float(z))
                        lo = float(g1(v, ya, za)[0])
                        hi = float(g2(v, ya, za)[0])
                        if lo > hi + 1e-12:
                            return False, (u1, u2, v, float(y), float(z), lo, hi)
    return True, None


# ---------------------------------------------------------------------------
# Driver registry
# ---------------------------------------------------------------------------

def _q_entropic_fn(q: float):
    omq = 1.0 - q

    def fn(t, y, z):
        denom = 1.0 + omq * y
        return 0.5 * q * np.sum(z * z, axis=1) / denom

    return fn


def _q_entropic_guard(q: float):
    omq = 1.0 - q
    if abs(omq) < 1e-12:
        return None
    return lambda y: 1.0 + omq * y >= EPS_DOM


def driver_from_label(label: str) -> Driver:
    """Driver registry.

    zero | linear_y:r | abs_z | quad_z | csa_example[:r] | csa_example_shift[:r]
    | q_entropic:q | q_entropic_translated:q,a
    """
    name, _, arg = label.partition(":")
    if name == "zero":
        return Driver(lambda t, y, z: np.zeros(y.shape), "zero", nonneg_at_z0=True, zero_at_z0=True)
    if name == "linear_y":
        r = float(arg)
        return Driver(lambda t, y, z: -r * y, label, depends_on_y=True)
    if name == "abs_z":
        return Driver(
            lambda t, y, z: np.sqrt(np.sum(z * z, axis=1)),
            "abs_z",
            nonneg_at_z0=True,
            zero_at_z0=True,
        )
    if name == "quad_z":
        return Driver(
            lambda t, y, z: 0.5 * np.sum(z * z, axis=1),
            "quad_z",
            nonneg_at_z0=True,
            zero_at_z0=True,
        )
    if name in ("csa_example", "csa_example_shift"):
        r = float(arg) if arg else 0.1
        shift = 1.0 if name == "csa_example_shift" else 0.0
        return Driver(
            lambda t, y, z, r=r, s=shift: r * np.maximum(-y, 0.0) + np.sum(z, axis=1) + s,
            label if arg else name,
            depends_on_y=True,
            nonneg_at_z0=True,
            zero_at_z0=(shift == 0.0 and r == 0.0),
        )
    if name == "q_entropic":
        q = float(arg)
        return Driver(
            _q_entropic_fn(q),
            label,
            depends_on_y=abs(1.0 - q) > 1e-12,
            domain_guard=_q_entropic_guard(q),
            nonneg_at_z0=True,
            zero_at_z0=True,
        )
    if name == "q_entropic_translated":
        qs, a_s = arg.split(",")
        q, a = float(qs), float(a_s)
        base = _q_entropic_fn(q)
        return Driver(
            lambda t, y, z: base(t, y, z) + a,
            label,
            depends_on_y=abs(1.0 - q) > 1e-12,
            domain_guard=_q_entropic_guard(q),
            nonneg_at_z0=a >= 0.0,
            zero_at_z0=a == 0.0,
        )
    raise KeyError(f"unknown driver label {label!r}")


def family_from_label(label: str) -> DriverFamily:
    """Family registry: translated_family:q,alpha with g_u = g_q + alpha * u."""
    name, _, arg = label.partition(":")
    if name == "translated_family":
        qs, al = arg.split(",")
        q, alpha = float(qs), float(al)

        def member(u_time: float, q=q, alpha=alpha) -> Driver:
            base = _q_entropic_fn(q)
            a_u = alpha * u_time
            return Driver(
                lambda t, y, z: base(t, y, z) + a_u,
                f"translated_family:{q:g},{alpha:g}@u={u_time:g}",
                depends_on_y=abs(1.0 - q) > 1e-12,
                domain_guard=_q_entropic_guard(q),
                nonneg_at_z0=alpha >= 0.0,
                zero_at_z0=alpha == 0.0,
            )

        return DriverFamily(member, label)
    raise KeyError(f"unknown family label {label!r}")


def default_registry_labels() -> list[str]:
    """Standard driver parametrizations exercised by the verification harness."""
    return [
        "zero",
        "abs_z",
        "quad_z",
        "linear_y:0.1",
        "csa_example",
        "csa_example_shift",
        "q_entropic:0.5",
        "q_entropic_translated:0.5,0.1",
    ]
