"""Comparison solutions and curvature-eigenvalue algebra for pinching checks.

Two independent tools live here:

* scalar comparison: the closed-form solution of phi' = phi (phi - r),
  which bounds the extremes of scalar curvature along normalized flows,
  and a verifier that checks a sampled extremal series against it;

* eigenvalue algebra: the symmetric functions and contracted polynomials
  (R, S, T, C, P, Q) of a curvature-eigenvalue triple, the polynomial
  identity expressing P in factored form, the two inequalities used in
  3-D pinching arguments, and a pinching-ratio monitor along homogeneous
  trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InapplicableError, InvalidInputError


@dataclass(frozen=True)
class ComparisonSolution:
    """Solution of the Riccati equation phi' = phi (phi - r), phi(0) = c0.

    For r != 0:  phi(t) = r c0 / (c0 - (c0 - r) e^{r t});
    for r == 0:  phi(t) = c0 / (1 - c0 t).
    blow_up_time is the first positive time where the denominator vanishes
    (None when the solution is global forward in time).
    """

    r: float
    c0: float

    @property
    def blow_up_time(self) -> Optional[float]:
        r, c0 = self.r, self.c0
        if r == 0.0:
            return 1.0 / c0 if c0 > 0 else None
        if c0 == 0.0 or c0 == r:
            return None
        # denominator zero when e^{r t} = c0 / (c0 - r)
        ratio = c0 / (c0 - r)
        if ratio <= 0:
            return None
        t = math.log(ratio) / r
        return t if t > 0 else None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        T = self.blow_up_time
        if T is not None and np.any(t >= T):
            raise InapplicableError(
                "comparison solution blows up at t=%g" % T
            )
        if self.r == 0.0:
            return self.c0 / (1.0 - self.c0 * t)
        return self.r * self.c0 / (self.c0 - (self.c0 - self.r) * np.exp(self.r * t))


def logistic_comparison(r, c0):
    """Comparison solution of phi' = phi (phi - r) with phi(0) = c0."""
    return ComparisonSolution(r=float(r), c0=float(c0))


@dataclass(frozen=True)
class BoundReport:
    passed: bool
    worst_violation: float  # most negative margin (0 when no violation)
    truncated_at: Optional[float]  # time span cut short by comparison blow-up


def verify_scalar_bound(times, extremal_series, comparison, direction):
    """Check a sampled extremal series against a comparison solution.

    direction = "upper": series(t_i) <= comparison(t_i) + slack expected
    (use with the running maximum started at c0 = max of the initial field);
    direction = "lower": series(t_i) >= comparison(t_i) likewise.  Returns a
    BoundReport with the worst signed margin (negative = violation).  Times
    at or past the comparison blow-up are skipped and reported as truncated.
    """
    if direction not in ("upper", "lower"):
        raise InvalidInputError("direction must be 'upper' or 'lower'")
    times = np.asarray(times, dtype=float)
    series = np.asarray(extremal_series, dtype=float)
    if times.shape != series.shape:
        raise InvalidInputError("times and series must have matching shapes")
    T = comparison.blow_up_time
    truncated_at = None
    if T is not None and times[-1] >= T:
        truncated_at = T
        keep = times < T * (1 - 1e-12)
        times, series = times[keep], series[keep]
    ref = comparison(times)
    margin = ref - series if direction == "upper" else series - ref
    worst = float(margin.min()) if margin.size else 0.0
    return BoundReport(
        passed=worst >= 0.0, worst_violation=min(worst, 0.0), truncated_at=truncated_at
    )


# ---------------------------------------------------------------------------
# Eigenvalue algebra


@dataclass(frozen=True)
class EigenInvariants:
    R: float  # lam + mu + nu
    S: float  # sum of squares
    T: float  # sum of cubes
    C: float  # (R^3 - 5 R S + 6 T) / 2
    P: float  # S^2 + R (C - T)
    Q: tuple  # reaction-term eigenvalues 3 R lam_i - 6 lam_i^2 + (2 S - R^2)


def eigen_invariants(lam, mu, nu):
    """Symmetric polynomials and contracted invariants of an eigenvalue triple."""
    R = lam + mu + nu
    S = lam * lam + mu * mu + nu * nu
    T = lam ** 3 + mu ** 3 + nu ** 3
    C = 0.5 * (R ** 3 - 5.0 * R * S + 6.0 * T)
    P = S * S + R * (C - T)
    Q = tuple(3.0 * R * x - 6.0 * x * x + (2.0 * S - R * R) for x in (lam, mu, nu))
    return EigenInvariants(R=R, S=S, T=T, C=C, P=P, Q=Q)


def p_factored(lam, mu, nu):
    """The factored form of P: sum_i lam_i^2 prod_{j != i}(lam_i - lam_j)."""
    return (
        lam * lam * (lam - mu) * (lam - nu)
        + mu * mu * (mu - lam) * (mu - nu)
        + nu * nu * (nu - lam) * (nu - mu)
    )


def p_identity_residual(triples):
    """max |P - factored P| over an (n, 3) array of eigenvalue triples."""
    a = np.asarray(triples, dtype=float)
    lam, mu, nu = a[..., 0], a[..., 1], a[..., 2]
    R = lam + mu + nu
    S = lam ** 2 + mu ** 2 + nu ** 2
    T = lam ** 3 + mu ** 3 + nu ** 3
    C = 0.5 * (R ** 3 - 5 * R * S + 6 * T)
    P = S ** 2 + R * (C - T)
    fac = (
        lam ** 2 * (lam - mu) * (lam - nu)
        + mu ** 2 * (mu - lam) * (mu - nu)
        + nu ** 2 * (nu - lam) * (nu - mu)
    )
    return float(np.abs(P - fac).max())


def p_lower_bound_margin(triples, eps):
    """Margins of P >= eps^2 S (S - R^2/3) for triples with min >= eps R > 0.

    Input rows violating the precondition raise; returns the array of
    margins (nonnegative means the inequality holds).
    """
    a = np.asarray(triples, dtype=float)
    lam = a.min(axis=-1)
    R = a.sum(axis=-1)
    if np.any(R <= 0) or np.any(lam < eps * R - 1e-12 * np.abs(R)):
        raise InvalidInputError("triples must satisfy min eigenvalue >= eps * R > 0")
    S = (a ** 2).sum(axis=-1)
    T = (a ** 3).sum(axis=-1)
    C = 0.5 * (R ** 3 - 5 * R * S + 6 * T)
    P = S ** 2 + R * (C - T)
    return P - eps ** 2 * S * (S - R ** 2 / 3.0)


def null_vector_margin(mu_nu, eps):
    """Margins of the boundary reaction-term inequality for null directions.

    For triples on the pinching-cone boundary the smallest eigenvalue is
    pinned to lam = eps (lam + mu + nu); given rows (mu, nu) with
    mu, nu > 0 and mu + nu >= 2 lam, returns the margin of

        (lam+mu+nu) [lam (mu+nu) + (mu-nu)^2] - 2 lam (lam^2+mu^2+nu^2) >= 0.
    """
    if not (0 < eps <= 1.0 / 3.0):
        raise InvalidInputError("eps must lie in (0, 1/3]")
    a = np.asarray(mu_nu, dtype=float)
    mu, nu = a[..., 0], a[..., 1]
    if np.any(mu <= 0) or np.any(nu <= 0):
        raise InvalidInputError("mu and nu must be positive")
    lam = eps * (mu + nu) / (1.0 - eps)
    R = lam + mu + nu
    margin = R * (lam * (mu + nu) + (mu - nu) ** 2) - 2 * lam * (
        lam ** 2 + mu ** 2 + nu ** 2
    )
    return margin


@dataclass(frozen=True)
class PinchingSeries:
    times: np.ndarray
    values: np.ndarray  # (S - R^2/3) / R^(2 - delta)
    delta: float
    eps0: float  # initial smallest-eigenvalue fraction nu(0)/R(0)
    passed: bool  # max over the run <= initial value * (1 + 1e-6)


def pinching_monitor(traj, delta=None):
    """Pinching-ratio monitor (S - R^2/3)/R^(2-delta) along a flow trajectory.

    Eigenvalues are those of the Ricci endomorphism, Ric(F_i,F_i)/g_ii.
    Requires R > 0 along the whole trajectory.  delta defaults to
    min(2 eps0^2, 1) with eps0 the initial smallest eigenvalue over R.
    """
    from .homogeneous import DiagonalMetric, ricci_diagonal

    n = len(traj.times)
    eigs = np.empty((n, 3))
    for i in range(n):
        g = DiagonalMetric(*traj.states[i])
        cd = ricci_diagonal(traj.sig, g)
        eigs[i] = np.array(cd.ricci) / traj.states[i]
    R = eigs.sum(axis=1)
    if np.any(R <= 0):
        raise InapplicableError("pinching monitor requires positive scalar curvature")
    S = (eigs ** 2).sum(axis=1)
    eps0 = float(eigs[0].min() / R[0])
    if delta is None:
        delta = min(2.0 * eps0 * eps0, 1.0)
    values = (S - R ** 2 / 3.0) / R ** (2.0 - delta)
    passed = bool(values.max() <= values[0] * (1 + 1e-6) + 1e-300)
    return PinchingSeries(
        times=traj.times.copy(),
        values=values,
        delta=float(delta),
        eps0=eps0,
        passed=passed,
    )
