"""Normalized Ricci flow on surfaces as a conformal-factor PDE.

The metric is g = e^{2v} h over a fixed background h: either the flat
square torus [0, 2pi)^2 (spectral derivatives) or the round unit sphere
restricted to zonal (colatitude-only) conformal factors on a staggered
grid theta_i = (i + 1/2) pi / N (conservative finite differences, no node
at either pole).  Scalar curvature follows the conformal rule

    R = e^{-2v} (R_h - 2 Lap_h v),

and the normalized flow is dv/dt = (r - R)/2 with r = 4 pi chi / Area.

Sphere quadrature uses the exact per-cell weights
w_i = 4 pi sin(dtheta/2) sin(theta_i), which integrate constants exactly
and make the discrete Gauss-Bonnet identity hold to rounding (the
conservative Laplacian telescopes against these weights).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    InapplicableError,
    InconsistentStateError,
    InvalidInputError,
    NumericalFailureError,
)


class Background:
    """Fixed background surface: flat torus or round sphere (zonal)."""

    def __init__(self, kind, N):
        if kind not in ("flat_torus", "round_sphere_zonal"):
            raise InvalidInputError("unknown background kind %r" % (kind,))
        if kind == "flat_torus":
            if N < 16 or N % 2:
                raise InvalidInputError("torus grid needs even N >= 16")
        else:
            if N < 16:
                raise InvalidInputError("sphere grid needs N >= 16")
        self.kind = kind
        self.N = int(N)
        if kind == "flat_torus":
            self.chi = 0
            self.R_h = 0.0
            self.x = 2 * np.pi * np.arange(N) / N
            k = np.fft.fftfreq(N, d=1.0 / N)
            self._kx = k[:, None]
            self._ky = k[None, :]
            self._lap_mult = -(self._kx ** 2 + self._ky ** 2)
            self._cell = (2 * np.pi / N) ** 2
            self.min_spacing = 2 * np.pi / N
        else:
            self.chi = 2
            self.R_h = 2.0
            self.dtheta = np.pi / N
            self.theta = (np.arange(N) + 0.5) * self.dtheta
            self.sin_theta = np.sin(self.theta)
            # Half-node sines: sin(i * dtheta), i = 0..N (zero at both poles).
            self._sin_half = np.sin(np.arange(N + 1) * self.dtheta)
            # Exact cell weights: 2 pi * integral of sin over each cell.
            self.weights = 4 * np.pi * np.sin(self.dtheta / 2) * self.sin_theta
            self.min_spacing = self.dtheta

    @classmethod
    def flat_torus(cls, N):
        return cls("flat_torus", N)

    @classmethod
    def round_sphere_zonal(cls, N):
        return cls("round_sphere_zonal", N)

    @property
    def shape(self):
        return (self.N, self.N) if self.kind == "flat_torus" else (self.N,)

    def area_h(self):
        if self.kind == "flat_torus":
            return 4 * np.pi ** 2
        return float(self.weights.sum())  # 4*pi exactly (up to rounding)

    def integrate(self, f):
        """Integral of a grid field against the background measure."""
        f = np.asarray(f, dtype=float)
        if self.kind == "flat_torus":
            return float(f.sum() * self._cell)
        return float((f * self.weights).sum())

    def laplacian(self, f):
        """Background Laplace-Beltrami operator applied to a grid field."""
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise InvalidInputError("field shape %r does not match grid" % (f.shape,))
        if self.kind == "flat_torus":
            return np.real(np.fft.ifft2(self._lap_mult * np.fft.fft2(f)))
        # conservative stencil: (1/sin) d/dtheta (sin df/dtheta)
        flux = np.zeros(self.N + 1)
        flux[1:-1] = self._sin_half[1:-1] * (f[1:] - f[:-1]) / self.dtheta
        return (flux[1:] - flux[:-1]) / (self.sin_theta * self.dtheta)

    def _mirror_pad(self, f):
        # Zonal fields are even across both poles on the staggered grid.
        return np.concatenate([[f[0]], f, [f[-1]]])

    def d_dtheta(self, f):
        """Centered first derivative of a zonal field (even at the poles)."""
        if self.kind != "round_sphere_zonal":
            raise InvalidInputError("d_dtheta is a sphere-grid operation")
        p = self._mirror_pad(np.asarray(f, dtype=float))
        return (p[2:] - p[:-2]) / (2 * self.dtheta)

    def d2_dtheta2(self, f):
        if self.kind != "round_sphere_zonal":
            raise InvalidInputError("d2_dtheta2 is a sphere-grid operation")
        p = self._mirror_pad(np.asarray(f, dtype=float))
        return (p[2:] - 2 * p[1:-1] + p[:-2]) / self.dtheta ** 2

    def gradient(self, f):
        """Orthonormal-frame gradient components of a grid field."""
        f = np.asarray(f, dtype=float)
        if self.kind == "flat_torus":
            fh = np.fft.fft2(f)
            fx = np.real(np.fft.ifft2(1j * self._kx * fh))
            fy = np.real(np.fft.ifft2(1j * self._ky * fh))
            return fx, fy
        return (self.d_dtheta(f),)

    def solve_poisson(self, rhs):
        """Mean-zero f with Lap_h f = rhs (rhs must be mean-free on h).

        Torus: direct spectral inversion.  Sphere: dense solve of the
        conservative stencil with a Lagrange multiplier pinning the mean.
        """
        rhs = np.asarray(rhs, dtype=float)
        mean = self.integrate(rhs) / self.area_h()
        scale = float(np.abs(rhs).max()) if rhs.size else 0.0
        if abs(mean) > 1e-8 * max(scale, 1e-300):
            raise InconsistentStateError(
                "Poisson right-hand side has nonzero background mean %g" % mean
            )
        if self.kind == "flat_torus":
            fh = np.fft.fft2(rhs)
            mult = np.where(self._lap_mult == 0, 1.0, self._lap_mult)
            sol = fh / mult
            sol[0, 0] = 0.0
            return np.real(np.fft.ifft2(sol))
        N = self.N
        L = np.zeros((N, N))
        for i in range(N):
            s = self.sin_theta[i] * self.dtheta ** 2
            if i > 0:
                L[i, i - 1] += self._sin_half[i] / s
                L[i, i] -= self._sin_half[i] / s
            if i < N - 1:
                L[i, i + 1] += self._sin_half[i + 1] / s
                L[i, i] -= self._sin_half[i + 1] / s
        A = np.zeros((N + 1, N + 1))
        A[:N, :N] = L
        A[:N, N] = 1.0
        A[N, :N] = self.weights
        b = np.concatenate([rhs - mean, [0.0]])
        sol = np.linalg.solve(A, b)
        return sol[:N]


@dataclass
class ConformalState:
    """Conformal factor v on a background, at flow time t."""

    background: Background
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != self.background.shape:
            raise InvalidInputError("conformal factor shape does not match grid")

    def copy(self):
        return ConformalState(self.background, self.v.copy(), self.t)


def scalar_curvature(state):
    """R = e^{-2v} (R_h - 2 Lap_h v)."""
    bg = state.background
    return np.exp(-2 * state.v) * (bg.R_h - 2 * bg.laplacian(state.v))


def area(state):
    return state.background.integrate(np.exp(2 * state.v))


def mean_curvature_r(state, A=None):
    """r = 4 pi chi / Area, the target constant of the normalized flow."""
    bg = state.background
    if A is None:
        A = area(state)
    return 4 * np.pi * bg.chi / A


def gauss_bonnet(state):
    """Integral of R over the evolving surface (should be 4 pi chi)."""
    bg = state.background
    R = scalar_curvature(state)
    return bg.integrate(R * np.exp(2 * state.v))


def flow_rhs(state):
    """dv/dt = (r - R)/2 for the normalized flow."""
    R = scalar_curvature(state)
    return 0.5 * (mean_curvature_r(state) - R)


@dataclass
class SurfaceFlowConfig:
    t_end: float = 5.0
    sample_dt: float = 0.1
    # Stability safety factor for the explicit RK4 step.
    safety: float = 0.4
    # Compute the heavier per-sample diagnostics (potential, soliton data)?
    full_diagnostics: bool = True

    def __post_init__(self):
        if self.t_end <= 0 or self.sample_dt <= 0:
            raise InvalidInputError("t_end and sample_dt must be positive")


@dataclass(frozen=True)
class SampleDiagnostics:
    t: float
    area: float
    r: float
    R_min: float
    R_max: float
    gauss_bonnet: float
    entropy: Optional[float]  # None when R is not strictly positive
    M_norm: Optional[float]
    I_osc: Optional[float]


@dataclass
class SurfaceTrajectory:
    background: Background
    times: np.ndarray
    v_samples: np.ndarray  # (n,) + grid shape
    diagnostics: list

    def state(self, i):
        return ConformalState(self.background, self.v_samples[i].copy(), float(self.times[i]))

    def v_at(self, t):
        """Linear-in-time interpolation of the conformal factor."""
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise InvalidInputError("t outside trajectory span")
        t = min(max(t, ts[0]), ts[-1])
        k = min(max(int(np.searchsorted(ts, t, side="right") - 1), 0), len(ts) - 2)
        h = ts[k + 1] - ts[k]
        s = 0.0 if h == 0 else (t - ts[k]) / h
        return (1 - s) * self.v_samples[k] + s * self.v_samples[k + 1]


def _stable_dt(state, safety):
    bg = state.background
    diff_max = float(np.exp(-2 * state.v).max())
    return safety * bg.min_spacing ** 2 / (4.0 * diff_max)


def evolve(state, config=None):
    """Run the normalized flow with RK4 in time, sampling every sample_dt."""
    if config is None:
        config = SurfaceFlowConfig()
    bg = state.background
    v = state.v.copy()
    t = 0.0
    n_samples = int(round(config.t_end / config.sample_dt))
    sample_times = [i * config.sample_dt for i in range(n_samples + 1)]
    times, samples, diags = [], [], []

    def record(t, v):
        times.append(t)
        samples.append(v.copy())
        diags.append(_diagnostics(bg, v, t, config.full_diagnostics))

    def rhs(v):
        st = ConformalState(bg, v, 0.0)
        return flow_rhs(st)

    record(0.0, v)
    for target in sample_times[1:]:
        while t < target - 1e-12:
            dt = min(_stable_dt(ConformalState(bg, v, t), config.safety), target - t)
            k1 = rhs(v)
            k2 = rhs(v + 0.5 * dt * k1)
            k3 = rhs(v + 0.5 * dt * k2)
            k4 = rhs(v + dt * k3)
            v = v + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(v)):
                raise NumericalFailureError(
                    "conformal factor lost finiteness", t=t, last_state=samples[-1]
                )
            t += dt
        t = target
        record(t, v)
    return SurfaceTrajectory(
        background=bg,
        times=np.array(times),
        v_samples=np.array(samples),
        diagnostics=diags,
    )


def _diagnostics(bg, v, t, full):
    st = ConformalState(bg, v, t)
    R = scalar_curvature(st)
    A = area(st)
    r = mean_curvature_r(st, A)
    gb = bg.integrate(R * np.exp(2 * v))
    ent = None
    if R.min() > 0:
        ent = float(bg.integrate(R * np.log(R) * np.exp(2 * v)))
    M_norm = I_osc = None
    if full:
        try:
            f = ricci_potential(st, R=R, r=r)
            rep = soliton_residuals(st, f, R=R, r=r)
            M_norm, I_osc = rep.M_norm, rep.I_osc
        except InconsistentStateError:
            pass
    return SampleDiagnostics(
        t=t,
        area=A,
        r=r,
        R_min=float(R.min()),
        R_max=float(R.max()),
        gauss_bonnet=gb,
        entropy=ent,
        M_norm=M_norm,
        I_osc=I_osc,
    )


def ricci_potential(state, R=None, r=None):
    """Mean-zero potential f with Lap_g f = R - r.

    Solved on the background through the conformal covariance
    Lap_g = e^{-2v} Lap_h, i.e. Lap_h f = e^{2v} (R - r).  Raises when the
    right-hand side is not mean-free over the evolving surface.
    """
    bg = state.background
    if R is None:
        R = scalar_curvature(state)
    if r is None:
        r = mean_curvature_r(state)
    rhs = np.exp(2 * state.v) * (R - r)
    # background-mean consistency == evolving-surface mean of (R - r)
    return bg.solve_poisson(rhs)


@dataclass(frozen=True)
class SolitonReport:
    M_norm: float  # sup |grad grad f - (Lap f/2) g|_g
    h_field: np.ndarray  # Lap_g f + |grad f|_g^2
    I_osc: float  # oscillation of R + |grad f|^2 + r f


def soliton_residuals(state, f, R=None, r=None):
    """Soliton quantities of a state and candidate potential f.

    All tensor components are taken in an h-orthonormal frame; the g-norm
    of the trace-free tensor M then carries a factor e^{-2v}.
    """
    bg = state.background
    v = state.v
    if R is None:
        R = scalar_curvature(state)
    if r is None:
        r = mean_curvature_r(state)
    lap_f = bg.laplacian(f)
    if bg.kind == "flat_torus":
        fx, fy = bg.gradient(f)
        vx, vy = bg.gradient(v)
        fh = np.fft.fft2(f)
        fxx = np.real(np.fft.ifft2(-bg._kx ** 2 * fh))
        fyy = np.real(np.fft.ifft2(-bg._ky ** 2 * fh))
        fxy = np.real(np.fft.ifft2(-bg._kx * bg._ky * fh))
        cross = vx * fx + vy * fy
        # Hessian of f in the metric g = e^{2v} h, h-orthonormal components
        H11 = fxx - (2 * vx * fx - cross)
        H22 = fyy - (2 * vy * fy - cross)
        H12 = fxy - (vx * fy + vy * fx)
        grad_sq = fx ** 2 + fy ** 2
    else:
        fp = bg.d_dtheta(f)
        vp = bg.d_dtheta(v)
        cot = np.cos(bg.theta) / bg.sin_theta
        H11 = bg.d2_dtheta2(f) - vp * fp
        H22 = cot * fp + vp * fp
        H12 = np.zeros_like(fp)
        grad_sq = fp ** 2
    M11 = H11 - 0.5 * lap_f
    M22 = H22 - 0.5 * lap_f
    weight = np.exp(-2 * v)
    M_norm = float((weight * np.sqrt(M11 ** 2 + M22 ** 2 + 2 * H12 ** 2)).max())
    h_field = weight * (lap_f + grad_sq)
    I = R + weight * grad_sq + r * f
    return SolitonReport(M_norm=M_norm, h_field=h_field, I_osc=float(I.max() - I.min()))


def entropy(state, R=None):
    """N(g) = integral of R log R over the surface; needs R > 0 everywhere."""
    bg = state.background
    if R is None:
        R = scalar_curvature(state)
    if R.min() <= 0:
        raise InapplicableError(
            "entropy requires strictly positive curvature (min R = %g)" % R.min()
        )
    return float(bg.integrate(R * np.log(R) * np.exp(2 * state.v)))


def harnack_distance(traj, p1, p2, n_time=32, n_space=256):
    """Space-time action inf over grid paths of  sum e^{2v} (dx)^2 / dt.

    p1 = (x1, t1) and p2 = (x2, t2) with t1 < t2; positions are colatitudes
    on the sphere grid and x-coordinates on the torus grid (zonal fields:
    only the first coordinate matters).  The infimum is over paths moving
    monotonically in time across n_time equal slices, free to jump between
    the nodes of a path grid of n_space points (the conformal factor is
    interpolated onto it); dynamic programming is exact for this discrete
    class, and refining either grid can only lower the value toward the
    continuum infimum.  The result is therefore always an upper bound for
    the continuum action.
    """
    x1, t1 = p1
    x2, t2 = p2
    if not (t1 < t2):
        raise InvalidInputError("need t1 < t2")
    ts = traj.times
    if t1 < ts[0] - 1e-12 or t2 > ts[-1] + 1e-12:
        raise InvalidInputError("pair times outside trajectory span")
    bg = traj.background
    if bg.kind == "flat_torus":
        grid_nodes = bg.x
        period = 2 * np.pi
        nodes = 2 * np.pi * np.arange(n_space) / n_space
    else:
        grid_nodes = bg.theta
        period = None
        nodes = np.linspace(grid_nodes[0], grid_nodes[-1], n_space)
    # The endpoints join the path grid exactly, so the reported action is
    # for the requested pair rather than for snapped approximations.
    nodes = np.unique(np.concatenate([nodes, [x1, x2]]))
    n_space = nodes.size
    slice_times = np.linspace(t1, t2, n_time + 1)
    sigma = np.empty((n_time + 1, n_space))
    for j, s in enumerate(slice_times):
        vj = traj.v_at(s)
        vj = vj[:, 0] if vj.ndim == 2 else vj
        if period is not None:
            vi = np.interp(nodes, np.concatenate([grid_nodes, [period]]),
                           np.concatenate([vj, [vj[0]]]))
        else:
            vi = np.interp(nodes, grid_nodes, vj)
        sigma[j] = np.exp(2 * vi)
    dx = nodes[:, None] - nodes[None, :]
    if period is not None:
        dx = (dx + period / 2) % period - period / 2
    dx2 = dx ** 2
    i1 = int(np.argmin(np.abs(nodes - x1)))
    i2 = int(np.argmin(np.abs(nodes - x2)))
    dp = np.full(n_space, np.inf)
    dp[i1] = 0.0
    for j in range(n_time):
        dt = slice_times[j + 1] - slice_times[j]
        w = 0.5 * (sigma[j][:, None] + sigma[j + 1][None, :])
        dp = np.min(dp[:, None] + w * dx2 / dt, axis=0)
    return float(dp[i2])


@dataclass(frozen=True)
class HarnackReport:
    slacks: np.ndarray  # rhs - lhs per pair (nonnegative = inequality holds)
    worst_slack: float
    passed: bool


def harnack_check(traj, pairs, n_time=32, n_space=256, slack_tol=1e-8):
    """Differential-Harnack inequality on a positive-curvature trajectory.

    For each pair ((x1, t1), (x2, t2)) checks
        (e^{r t1} - 1) R(x1, t1) <= e^{Delta/4} (e^{r t2} - 1) R(x2, t2)
    with Delta the grid-path action from harnack_distance.  Delta is an
    upper bound for the continuum infimum, which only strengthens the
    right-hand side, so violations beyond the tolerance are genuine.
    """
    bg = traj.background
    rs = np.array([d.r for d in traj.diagnostics])
    if np.any(np.array([d.R_min for d in traj.diagnostics]) <= 0):
        raise InapplicableError("Harnack check requires R > 0 along the run")
    r = float(rs.mean())
    slacks = np.empty(len(pairs))
    for idx, ((x1, t1), (x2, t2)) in enumerate(pairs):
        delta = harnack_distance(
            traj, (x1, t1), (x2, t2), n_time=n_time, n_space=n_space
        )
        lhs = (np.exp(r * t1) - 1.0) * _point_curvature(traj, x1, t1)
        rhs = np.exp(delta / 4.0) * (np.exp(r * t2) - 1.0) * _point_curvature(traj, x2, t2)
        slacks[idx] = rhs - lhs
    worst = float(slacks.min()) if len(pairs) else 0.0
    scale = max(1.0, float(np.abs(slacks).max())) if len(pairs) else 1.0
    return HarnackReport(
        slacks=slacks, worst_slack=worst, passed=bool(worst >= -slack_tol * scale)
    )


def _point_curvature(traj, x, t):
    bg = traj.background
    v = traj.v_at(t)
    st = ConformalState(bg, v, t)
    R = scalar_curvature(st)
    nodes = bg.x if bg.kind == "flat_torus" else bg.theta
    i = int(np.argmin(np.abs(nodes - x)))
    return float(R[i, 0]) if R.ndim == 2 else float(R[i])


def r_evolution_residual(traj, t_window=None):
    """Sup residual of dR/dt = Lap_g R + R (R - r) over interior samples.

    Time derivative by centered differences at the recorded (uniform)
    sample stride; this isolates the time-sampling error, since the
    identity is exact for the spatially discretized dynamics.  t_window,
    when given as (t_lo, t_hi), restricts which interior samples enter the
    sup -- useful for order-of-convergence comparisons at shared times.
    """
    ts = traj.times
    if len(ts) < 3:
        raise InvalidInputError("need at least three samples")
    strides = np.diff(ts)
    if np.abs(strides - strides[0]).max() > 1e-9 * strides[0]:
        raise InvalidInputError("samples must be uniformly spaced in time")
    bg = traj.background
    Rs = [scalar_curvature(traj.state(i)) for i in range(len(ts))]
    worst = 0.0
    for k in range(1, len(ts) - 1):
        if t_window is not None and not (t_window[0] <= ts[k] <= t_window[1]):
            continue
        dRdt = (Rs[k + 1] - Rs[k - 1]) / (ts[k + 1] - ts[k - 1])
        st = traj.state(k)
        r_k = mean_curvature_r(st)
        lap_R = np.exp(-2 * st.v) * bg.laplacian(Rs[k])
        rhs = lap_R + Rs[k] * (Rs[k] - r_k)
        worst = max(worst, float(np.abs(dRdt - rhs).max()))
    return worst
