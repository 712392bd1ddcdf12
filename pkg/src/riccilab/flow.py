"""Ricci flow of diagonal left-invariant metrics as a 3-component ODE.

The unnormalized flow is dg/dt = -2 Ric(g); in the Milnor frame this closes
on (A, B, C).  The normalized flow adds the volume-preserving term
(2/3) R g, with R the scalar curvature (spatially constant here, so the
average is the pointwise value).

Integration uses an embedded Dormand-Prince 4(5) pair with PI step-size
control, written in-house so that singularity events can be bisected, every
accepted step is recorded with its derivative (for dense Hermite output),
and a fixed-step mode is available for order-convergence checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError, NumericalFailureError
from .homogeneous import DiagonalMetric, MilnorSignature, ricci_diagonal

# Dormand-Prince 5(4) tableau; the propagated solution is 5th order.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


@dataclass
class IntegratorConfig:
    t_end: float = 1.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 1e-2
    # Stop when min(A,B,C) drops below this; None means 1e-8 * min(g0).
    singularity_floor: Optional[float] = None
    # Stop when max |sectional curvature| exceeds this.
    curvature_ceiling: float = 1e8
    # Fixed-step mode (no error control) for convergence studies.
    fixed_step: Optional[float] = None

    def __post_init__(self):
        if self.t_end <= 0:
            raise InvalidInputError("t_end must be positive")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise InvalidInputError("tolerances must be positive")


@dataclass(frozen=True)
class FlowEvent:
    time: float
    reason: str  # "floor" or "ceiling"


@dataclass
class FlowTrajectory:
    """Accepted integration samples plus derivatives for dense output."""

    sig: MilnorSignature
    mode: str
    times: np.ndarray  # (n,)
    states: np.ndarray  # (n, 3) rows (A, B, C)
    derivs: np.ndarray  # (n, 3) flow right-hand side at each sample
    event: Optional[FlowEvent] = None

    @property
    def t_final(self):
        return float(self.times[-1])

    def metric_at_index(self, i):
        return DiagonalMetric(*self.states[i])

    def state_at(self, t):
        """Cubic Hermite interpolation of (A, B, C) at time t."""
        t = float(t)
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise InvalidInputError(
                "t=%g outside trajectory span [%g, %g]" % (t, ts[0], ts[-1])
            )
        t = min(max(t, ts[0]), ts[-1])
        k = int(np.searchsorted(ts, t, side="right") - 1)
        k = min(max(k, 0), len(ts) - 2)
        h = ts[k + 1] - ts[k]
        if h <= 0:
            return self.states[k].copy()
        s = (t - ts[k]) / h
        y0, y1 = self.states[k], self.states[k + 1]
        d0, d1 = self.derivs[k] * h, self.derivs[k + 1] * h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1

    def volume_density(self):
        return np.sqrt(np.prod(self.states, axis=1))

    def scalar_curvature(self):
        out = np.empty(len(self.times))
        for i, y in enumerate(self.states):
            out[i] = ricci_diagonal(self.sig, DiagonalMetric(*y)).scalar
        return out


def flow_rhs(sig, y, mode="unnormalized"):
    """d(A,B,C)/dt for the (un)normalized Ricci flow at state y = (A,B,C)."""
    cd = ricci_diagonal(sig, DiagonalMetric(*y))
    ric = np.array(cd.ricci)
    dy = -2.0 * ric
    if mode == "normalized":
        dy = dy + (2.0 / 3.0) * cd.scalar * np.asarray(y, dtype=float)
    elif mode != "unnormalized":
        raise InvalidInputError("mode must be 'unnormalized' or 'normalized'")
    return dy


def _dp_step(f, y, h):
    """One Dormand-Prince step: returns (y5, err_vec, k_stages)."""
    k = np.empty((7, y.size))
    k[0] = f(y)
    for i in range(1, 7):
        yi = y + h * sum(a * k[j] for j, a in enumerate(_DP_A[i]))
        if np.any(yi <= 0) or not np.all(np.isfinite(yi)):
            return None, None, None
        k[i] = f(yi)
    y5 = y + h * (_DP_B5 @ k)
    y4 = y + h * (_DP_B4 @ k)
    if np.any(y5 <= 0) or not np.all(np.isfinite(y5)):
        return None, None, None
    return y5, y5 - y4, k


def _max_sectional(sig, y):
    return max(abs(s) for s in ricci_diagonal(sig, DiagonalMetric(*y)).sectional)


def integrate(sig, g0, config=None, mode="unnormalized"):
    """Integrate the flow from g0; returns a FlowTrajectory.

    Stops at config.t_end, or earlier when a metric coefficient falls below
    the singularity floor or a sectional curvature exceeds the ceiling; the
    crossing time is bisected to within abs_tol and reported as an event.
    Raises NumericalFailureError (with the last good state) on step-size
    underflow.
    """
    if config is None:
        config = IntegratorConfig()
    y = g0.as_array()
    floor = config.singularity_floor
    if floor is None:
        floor = 1e-8 * float(y.min())
    ceiling = config.curvature_ceiling

    def f(state):
        return flow_rhs(sig, state, mode)

    def triggered(state):
        if state.min() < floor:
            return "floor"
        if _max_sectional(sig, state) > ceiling:
            return "ceiling"
        return None

    if triggered(y):
        raise InvalidInputError("initial metric already violates a stop threshold")

    times = [0.0]
    states = [y.copy()]
    derivs = [f(y)]
    t = 0.0
    h = config.fixed_step if config.fixed_step else min(config.max_step, config.t_end)
    err_prev = 1.0
    event = None

    while t < config.t_end - 1e-15:
        h = min(h, config.t_end - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise NumericalFailureError(
                "step size underflow at t=%g" % t, t=t, last_state=y.copy()
            )
        y_new, err_vec, _ = _dp_step(f, y, h)
        if config.fixed_step:
            if y_new is None:
                raise NumericalFailureError(
                    "state left the positive cone at t=%g" % t, t=t, last_state=y.copy()
                )
            accept = True
        else:
            if y_new is None:
                h *= 0.5
                continue
            scale = config.abs_tol + config.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            accept = err <= 1.0
            # PI controller (orders 5/4): exponents 0.7/5 and 0.4/5.
            err = max(err, 1e-10)
            fac = 0.9 * err ** (-0.14) * err_prev ** 0.08
            fac = min(5.0, max(0.2, fac))
            h_next = min(config.max_step, h * fac)
            if not accept:
                h = min(h * max(0.2, min(1.0, fac)), 0.5 * h)
                continue
            err_prev = err

        reason = triggered(y_new)
        if reason is not None:
            t_cross, y_cross = _bisect_event(f, y, t, h, triggered, config.abs_tol)
            times.append(t_cross)
            states.append(y_cross)
            derivs.append(f(y_cross))
            event = FlowEvent(time=t_cross, reason=reason)
            break

        t += h
        y = y_new
        times.append(t)
        states.append(y.copy())
        derivs.append(f(y))
        if not config.fixed_step:
            h = h_next

    return FlowTrajectory(
        sig=sig,
        mode=mode,
        times=np.array(times),
        states=np.array(states),
        derivs=np.array(derivs),
        event=event,
    )


def _bisect_event(f, y0, t0, h, triggered, tol):
    """Bisect the step fraction at which a stop condition first triggers."""
    lo, hi = 0.0, h
    y_hi = None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        y_mid, _, _ = _dp_step(f, y0, mid)
        if y_mid is None or triggered(y_mid):
            hi = mid
            y_hi = y_mid
        else:
            lo = mid
    if y_hi is None:
        y_hi, _, _ = _dp_step(f, y0, hi)
    if y_hi is None:
        # The trial step left the positive cone; fall back to the last
        # admissible state inside the bracket.
        y_hi, _, _ = _dp_step(f, y0, lo)
        if y_hi is None:
            y_hi = y0.copy()
    return t0 + hi, y_hi


def nil_closed_form(g0, t):
    """Exact Heisenberg-flow solution at time(s) t from g0 = (A0, B0, C0).

    A grows^-1 and B, C grow like the cube root of (12 t + B0 C0 / A0):
        A = A0^(2/3) B0^(1/3) C0^(1/3) (12 t + B0 C0/A0)^(-1/3)
        B = A0^(1/3) B0^(2/3) C0^(-1/3) (12 t + B0 C0/A0)^(1/3)
        C = A0^(1/3) B0^(-1/3) C0^(2/3) (12 t + B0 C0/A0)^(1/3)
    """
    A0, B0, C0 = g0.A, g0.B, g0.C
    t = np.asarray(t, dtype=float)
    w = 12.0 * t + B0 * C0 / A0
    A = A0 ** (2 / 3) * B0 ** (1 / 3) * C0 ** (1 / 3) * w ** (-1 / 3)
    B = A0 ** (1 / 3) * B0 ** (2 / 3) * C0 ** (-1 / 3) * w ** (1 / 3)
    C = A0 ** (1 / 3) * B0 ** (-1 / 3) * C0 ** (2 / 3) * w ** (1 / 3)
    return np.stack(np.broadcast_arrays(A, B, C), axis=-1)


def einstein_closed_form(g0, lam, t, sig=None):
    """Homothetic solution g(t) = (1 - 2 lam t) g0 for an Einstein metric.

    When sig is given, Ric(g0) = lam * g0 is asserted (relative tolerance
    1e-10); otherwise the caller vouches for the Einstein property.
    """
    if sig is not None:
        cd = ricci_diagonal(sig, g0)
        gv = g0.as_array()
        resid = max(abs(cd.ricci[i] - lam * gv[i]) for i in range(3))
        scale = max(1.0, abs(lam) * float(gv.max()))
        if resid > 1e-10 * scale:
            raise InvalidInputError(
                "metric is not Einstein with constant %g (residual %g)" % (lam, resid)
            )
    t = np.asarray(t, dtype=float)
    fac = 1.0 - 2.0 * lam * t
    if np.any(fac <= 0):
        raise InvalidInputError("requested time at or beyond the extinction time")
    return np.stack(
        np.broadcast_arrays(fac * g0.A, fac * g0.B, fac * g0.C), axis=-1
    )


def rescale_to_normalized(traj):
    """Convert an unnormalized trajectory to unit-volume scale.

    Each sample is multiplied by psi = (A B C)^(-1/3) and the time is
    re-parametrized by t~ = integral of psi dt (cumulative trapezoid).
    Returns a FlowTrajectory in the rescaled variables whose derivative
    samples are taken with respect to t~, so Hermite interpolation works.
    """
    if traj.mode != "unnormalized":
        raise InvalidInputError("rescaling applies to unnormalized trajectories")
    y = traj.states
    dy = traj.derivs
    psi = np.prod(y, axis=1) ** (-1.0 / 3.0)
    # d(psi)/dt = -(1/3) psi * sum_i y_i'/y_i
    dpsi = -psi / 3.0 * np.sum(dy / y, axis=1)
    t_tilde = np.concatenate(
        [[0.0], np.cumsum(0.5 * (psi[1:] + psi[:-1]) * np.diff(traj.times))]
    )
    states = psi[:, None] * y
    # d(psi y)/dt~ = (psi' y + psi y') / psi
    derivs = (dpsi[:, None] * y + psi[:, None] * dy) / psi[:, None]
    return FlowTrajectory(
        sig=traj.sig,
        mode="normalized",
        times=t_tilde,
        states=states,
        derivs=derivs,
        event=traj.event,
    )


@dataclass(frozen=True)
class CollapseSeries:
    times: np.ndarray
    E: np.ndarray  # B + C
    F: np.ndarray  # (B - C) / eps_split, log-stabilized once B - C underflows


def collapse_observables(traj, eps_split):
    """Berger-collapse observables E = B + C and F = (B - C)/eps.

    The gap B - C decays like exp(-c t / eps), which underflows the direct
    difference long before it reaches zero.  Along the flow the exact
    identity d/dt log(B - C) = 4 (A^2 - (B+C)^2) / (A B C) holds, so once
    the direct difference drops below the cancellation floor the series
    switches to the cumulative integral of that rate (trapezoid over the
    accepted steps), keeping F positive, resolved, and monotone-comparable.
    """
    if eps_split <= 0:
        raise InvalidInputError("eps_split must be positive")
    A = traj.states[:, 0]
    B = traj.states[:, 1]
    C = traj.states[:, 2]
    gap = B - C
    F = gap / eps_split
    if gap[0] > 0:
        rate = 4.0 * (A ** 2 - (B + C) ** 2) / (A * B * C)
        w = np.log(gap[0]) + np.concatenate(
            [[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(traj.times))]
        )
        floor = 1e-7 * np.maximum(B, C)
        unstable = gap < floor
        F = np.where(unstable, np.exp(w) / eps_split, F)
    return CollapseSeries(times=traj.times.copy(), E=B + C, F=F)


@dataclass(frozen=True)
class SolReducedReport:
    times: np.ndarray
    B: np.ndarray
    G: np.ndarray  # A / C
    ac_drift_max: float  # max |A C - A0 C0|


def sol_reduced(traj):
    """Reduced Sol-flow variables (B, G = A/C) and the A*C conservation drift."""
    if traj.sig.as_tuple() != (-1, 0, 1):
        raise InvalidInputError("reduced variables are specific to the sol signature")
    A = traj.states[:, 0]
    B = traj.states[:, 1]
    C = traj.states[:, 2]
    ac = A * C
    return SolReducedReport(
        times=traj.times.copy(),
        B=B.copy(),
        G=A / C,
        ac_drift_max=float(np.abs(ac - ac[0]).max()),
    )
