"""Kahler potential flow on flat complex tori via parabolic Monge-Ampere.

The manifold is (C/2 pi Z[i])^n_c with flat background metric g0 (a constant
Hermitian matrix, identity by default).  A real potential u deforms it to

    g~_{ij} = g0_{ij} + d^2 u / dz^i dz~^j,

computed spectrally on a uniform grid over the real coordinates
(x_1, y_1, ..., x_nc, y_nc), each axis of N points on [0, 2 pi).  The flow

    du/dt = log det g~ - log det g0 + f          ("ricci_flat" mode)
    du/dt = log det g~ - log det g0 + f - u      ("negative" mode)

drives the Ricci form of g~ to the target form with coefficient matrix
Omega_{kl} = d^2 f / dz^k dz~^l (ricci_flat), respectively to
-g~ + (g0 + Omega) (negative).  The data f is normalized so that the
stationary equation is solvable: integral of (e^f - 1) against the
background volume is zero.

A damped-Newton solver for the stationary equation provides an independent
oracle for the flow endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (
    DegenerateMetricError,
    InvalidInputError,
    NumericalFailureError,
)


class ComplexTorusGrid:
    """Uniform real grid on the flat complex torus, with spectral d/dz, d/dz~."""

    def __init__(self, n_c, N):
        if n_c not in (1, 2):
            raise InvalidInputError("n_c must be 1 or 2")
        if N < 8 or N % 2:
            raise InvalidInputError("need even N >= 8 per axis")
        self.n_c = n_c
        self.N = int(N)
        self.shape = (N,) * (2 * n_c)
        self.x = 2 * np.pi * np.arange(N) / N
        k = np.fft.fftfreq(N, d=1.0 / N)
        # Wavenumber grids per real axis, broadcast to the full shape.
        self._k = []
        for axis in range(2 * n_c):
            sh = [1] * (2 * n_c)
            sh[axis] = N
            self._k.append(k.reshape(sh))
        # d/dz^i = (d/dx_i - i d/dy_i)/2  ->  multiplier (i k_x + k_y)/2
        # d/dz~^j = (d/dx_j + i d/dy_j)/2 ->  multiplier (i k_x - k_y)/2
        self._dz = [
            0.5 * (1j * self._k[2 * i] + self._k[2 * i + 1]) for i in range(n_c)
        ]
        self._dzbar = [
            0.5 * (1j * self._k[2 * i] - self._k[2 * i + 1]) for i in range(n_c)
        ]
        self.cell = (2 * np.pi / N) ** (2 * n_c)
        self.spacing = 2 * np.pi / N

    def npoints(self):
        return self.N ** (2 * self.n_c)

    def volume(self):
        return (2 * np.pi) ** (2 * self.n_c)

    def mean(self, field):
        return float(np.mean(np.real(field)))

    def integral(self, field):
        return float(np.sum(np.real(field)) * self.cell)

    def fft(self, field):
        return np.fft.fftn(field)

    def ifft(self, field):
        return np.fft.ifftn(field)

    def complex_hessian(self, u):
        """H_{ij} = d^2 u / dz^i dz~^j as an (..., n_c, n_c) complex array."""
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise InvalidInputError("field shape %r does not match grid" % (u.shape,))
        uh = self.fft(u)
        n = self.n_c
        H = np.empty(self.shape + (n, n), dtype=complex)
        for i in range(n):
            for j in range(i, n):
                Hij = self.ifft(self._dz[i] * self._dzbar[j] * uh)
                H[..., i, j] = Hij
                if j != i:
                    H[..., j, i] = np.conj(Hij)
        # Diagonal entries of a Hermitian form are real.
        for i in range(n):
            H[..., i, i] = H[..., i, i].real
        return H

    def hermitian_from_scalar(self, phi):
        """-free helper: d dbar of a real scalar (same as complex_hessian)."""
        return self.complex_hessian(phi)


def hermitian_det(H):
    """Pointwise determinant of an (..., n, n) Hermitian field (real)."""
    n = H.shape[-1]
    if n == 1:
        return H[..., 0, 0].real
    if n == 2:
        return (
            H[..., 0, 0].real * H[..., 1, 1].real - np.abs(H[..., 0, 1]) ** 2
        )
    return np.linalg.det(H).real


def hermitian_eig_bounds(H):
    """Pointwise (min, max) eigenvalues of an (..., n, n) Hermitian field."""
    n = H.shape[-1]
    if n == 1:
        d = H[..., 0, 0].real
        return d, d
    tr = H[..., 0, 0].real + H[..., 1, 1].real
    det = hermitian_det(H)
    disc = np.sqrt(np.maximum((0.5 * tr) ** 2 - det, 0.0))
    return 0.5 * tr - disc, 0.5 * tr + disc


def background_metric(n_c, g0=None):
    """Constant Hermitian background as an (n_c, n_c) array (default: identity)."""
    if g0 is None:
        return np.eye(n_c, dtype=complex)
    g0 = np.asarray(g0, dtype=complex)
    if g0.shape != (n_c, n_c):
        raise InvalidInputError("g0 must be %d x %d" % (n_c, n_c))
    if np.abs(g0 - g0.conj().T).max() > 1e-12:
        raise DegenerateMetricError("g0 must be Hermitian")
    if np.linalg.eigvalsh(g0).min() <= 0:
        raise DegenerateMetricError("g0 must be positive definite")
    return g0


def normalize_data(grid, f_raw):
    """Shift f by a constant so integral of (e^f - 1) dV vanishes."""
    f_raw = np.asarray(f_raw, dtype=float)
    return f_raw - np.log(np.mean(np.exp(f_raw)))


@dataclass
class PotentialState:
    grid: ComplexTorusGrid
    g0: np.ndarray  # constant Hermitian background
    f: np.ndarray  # normalized data
    u: np.ndarray  # potential
    t: float = 0.0
    mode: str = "ricci_flat"

    def __post_init__(self):
        if self.mode not in ("ricci_flat", "negative"):
            raise InvalidInputError("mode must be 'ricci_flat' or 'negative'")
        self.u = np.asarray(self.u, dtype=float)
        self.f = np.asarray(self.f, dtype=float)

    def metric(self):
        """g~ = g0 + complex Hessian of u, checked positive definite."""
        H = self.grid.complex_hessian(self.u)
        gt = H + self.g0
        lo, _ = hermitian_eig_bounds(gt)
        if lo.min() <= 0:
            idx = np.unravel_index(np.argmin(lo), lo.shape)
            raise DegenerateMetricError(
                "evolved metric degenerates at grid index %s (min eig %g)"
                % (idx, lo.min())
            )
        return gt


def ma_log_ratio(state, gt=None):
    """log det(g0 + ddbar u) - log det g0, pointwise."""
    if gt is None:
        gt = state.metric()
    det0 = float(np.linalg.det(np.asarray(state.g0)).real)
    return np.log(hermitian_det(gt)) - np.log(det0)


def flow_rhs(state):
    """du/dt for the potential flow in the state's mode."""
    rhs = ma_log_ratio(state) + state.f
    if state.mode == "negative":
        rhs = rhs - state.u
    return rhs


@dataclass
class KahlerFlowConfig:
    t_end: float = 50.0
    sample_dt: float = 1.0
    safety: float = 0.4
    # Stop early once max |du/dt - spatial mean du/dt| falls below this.
    settle_tol: Optional[float] = None

    def __post_init__(self):
        if self.t_end <= 0 or self.sample_dt <= 0:
            raise InvalidInputError("t_end and sample_dt must be positive")


@dataclass(frozen=True)
class KahlerSample:
    t: float
    u: np.ndarray
    dudt: np.ndarray


@dataclass
class KahlerTrajectory:
    grid: ComplexTorusGrid
    g0: np.ndarray
    f: np.ndarray
    mode: str
    samples: list
    settled: bool

    @property
    def times(self):
        return np.array([s.t for s in self.samples])

    def final_state(self):
        last = self.samples[-1]
        return PotentialState(
            grid=self.grid, g0=self.g0, f=self.f, u=last.u.copy(), t=last.t,
            mode=self.mode,
        )


def _stable_dt(state, safety):
    gt = state.metric()
    lo, _ = hermitian_eig_bounds(gt)
    # max eigenvalue of g~^{-1} = 1 / min eigenvalue of g~
    lam_max = 1.0 / float(lo.min())
    return safety * state.grid.spacing ** 2 / (4.0 * lam_max)


def evolve(state, config=None):
    """March the potential flow with RK4; samples carry u and du/dt."""
    if config is None:
        config = KahlerFlowConfig()
    grid, g0, f, mode = state.grid, state.g0, state.f, state.mode

    if grid.n_c == 1:
        # scalar fast path: the complex Hessian is (1/4) Lap u, computed
        # with real FFTs; min eigenvalue of g~ is just its min value.
        g00 = float(np.real(g0[0, 0]))
        kx = grid._k[0]
        ky_full = grid._k[1].ravel()
        ky = ky_full[: grid.N // 2 + 1]
        mult = -0.25 * (kx ** 2 + ky[None, :] ** 2)

        def hess_scalar(u):
            return np.fft.irfft2(mult * np.fft.rfft2(u), s=grid.shape)

        def rhs_from_hess(u, d):
            gt_min = g00 + float(d.min())
            if gt_min <= 0:
                raise DegenerateMetricError(
                    "evolved metric degenerates (min %g)" % gt_min
                )
            out = np.log1p(d / g00) + f
            if mode == "negative":
                out = out - u
            return out

        def rhs(u):
            return rhs_from_hess(u, hess_scalar(u))

        def step_dt(u, d):
            lam_max = 1.0 / (g00 + float(d.min()))
            return config.safety * grid.spacing ** 2 / (4.0 * lam_max)

    else:

        def rhs(u):
            st = PotentialState(grid=grid, g0=g0, f=f, u=u, mode=mode)
            return flow_rhs(st)

        def step_dt(u, _d=None):
            st = PotentialState(grid=grid, g0=g0, f=f, u=u, mode=mode)
            return _stable_dt(st, config.safety)

    u = state.u.copy()
    t = 0.0
    samples = [KahlerSample(t=0.0, u=u.copy(), dudt=rhs(u))]
    settled = False
    n_samples = int(round(config.t_end / config.sample_dt))
    sample_times = [i * config.sample_dt for i in range(1, n_samples + 1)]
    for target in sample_times:
        while t < target - 1e-12:
            try:
                if grid.n_c == 1:
                    d1 = hess_scalar(u)
                    dt = min(step_dt(u, d1), target - t)
                    k1 = rhs_from_hess(u, d1)
                else:
                    dt = min(step_dt(u), target - t)
                    k1 = rhs(u)
                k2 = rhs(u + 0.5 * dt * k1)
                k3 = rhs(u + 0.5 * dt * k2)
                k4 = rhs(u + dt * k3)
            except DegenerateMetricError as exc:
                raise NumericalFailureError(str(exc), t=t, last_state=u) from exc
            u = u + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(u)):
                raise NumericalFailureError(
                    "potential lost finiteness", t=t, last_state=samples[-1].u
                )
            t += dt
        t = target
        dudt = rhs(u)
        samples.append(KahlerSample(t=t, u=u.copy(), dudt=dudt))
        if config.settle_tol is not None:
            centered = dudt - np.mean(dudt)
            if np.abs(centered).max() <= config.settle_tol:
                settled = True
                break
    return KahlerTrajectory(
        grid=grid, g0=g0, f=f, mode=mode, samples=samples, settled=settled
    )


def ricci_form(grid, gt):
    """Ricci coefficients Ric_{kl} = -d^2 log det g~ / dz^k dz~^l."""
    phi = np.log(hermitian_det(gt))
    return -grid.complex_hessian(phi)


def ricci_target(grid, f, mode="ricci_flat", gt=None, g0=None):
    """Limit Ricci coefficients of the converged flow.

    ricci_flat: Omega_{kl} = d^2 f / dz^k dz~^l (the flow forces
    log det g~ = const - f + log det g0).  negative: -g~ + (g0 + Omega),
    which needs the final metric gt.
    """
    omega = grid.complex_hessian(f)
    if mode == "ricci_flat":
        return omega
    if gt is None:
        raise InvalidInputError("negative-mode target needs the final metric")
    g0 = background_metric(grid.n_c, g0)
    return -gt + g0 + omega


def curvature_identity_residual(grid, gt):
    """Sup discrepancy of the trace identity
    g~^{ij} R_{ij kl} = -d^2 log det g~ / dz^k dz~^l,
    with the full curvature tensor assembled from derivatives of g~."""
    n = grid.n_c
    # first derivatives d_i g_{kv}, d_jbar g_{ul} via spectra of each entry
    dg = np.empty(grid.shape + (n, n, n), dtype=complex)  # [..., i, k, v]
    dgbar = np.empty(grid.shape + (n, n, n), dtype=complex)  # [..., j, u, l]
    for k in range(n):
        for v in range(n):
            gh = grid.fft(gt[..., k, v])
            for i in range(n):
                dg[..., i, k, v] = grid.ifft(grid._dz[i] * gh)
                dgbar[..., i, k, v] = grid.ifft(grid._dzbar[i] * gh)
    gi = np.linalg.inv(gt)
    # second derivative term d_i d_jbar g_{kl}
    d2 = np.empty(grid.shape + (n, n, n, n), dtype=complex)  # [..., i, j, k, l]
    for k in range(n):
        for l in range(n):
            gh = grid.fft(gt[..., k, l])
            for i in range(n):
                for j in range(n):
                    d2[..., i, j, k, l] = grid.ifft(
                        grid._dz[i] * grid._dzbar[j] * gh
                    )
    # R_{ij kl} = -d_i d_jbar g_{kl} + g^{uv} (d_i g_{kv}) (d_jbar g_{ul})
    rm = -d2 + np.einsum(
        "...vu,...ikv,...jul->...ijkl", gi, dg, dgbar
    )
    traced = np.einsum("...ji,...ijkl->...kl", gi, rm)
    rhs = ricci_form(grid, gt)
    return float(np.abs(traced - rhs).max())


def stationary_newton(grid, g0, f, mode="ricci_flat", tol=1e-11, max_iter=50,
                      u0=None):
    """Damped Newton solve of the stationary potential equation.

    ricci_flat: log det(g0 + ddbar u) - log det g0 + f = b, with the
    solvability constant b = -log mean(e^{-f}) and mean-zero u;
    negative:   log det(g0 + ddbar u) - log det g0 + f - u = 0.

    Each Newton step solves the linearization g~^{ij} d_i d_jbar du
    (minus du in negative mode) = -residual with GMRES, preconditioned by
    the constant-coefficient spectral inverse.  Terminates when the
    residual sup-norm drops to tol.
    """
    g0 = background_metric(grid.n_c, g0)
    f = np.asarray(f, dtype=float)
    u = np.zeros(grid.shape) if u0 is None else np.asarray(u0, dtype=float).copy()
    b = -np.log(np.mean(np.exp(-f))) if mode == "ricci_flat" else 0.0

    def residual(u):
        st = PotentialState(grid=grid, g0=g0, f=f, u=u, mode=mode)
        r = ma_log_ratio(st) + f - b
        if mode == "negative":
            r = r - u
        return r

    npts = grid.npoints()
    for _ in range(max_iter):
        r = residual(u)
        sup = float(np.abs(r).max())
        if sup <= tol:
            if mode == "ricci_flat":
                u = u - np.mean(u)
            return u
        st = PotentialState(grid=grid, g0=g0, f=f, u=u, mode=mode)
        gt = st.metric()
        gi = np.linalg.inv(gt)
        mean_gi = gi.reshape(-1, grid.n_c, grid.n_c).mean(axis=0)

        def apply_lin(vec):
            du = vec.reshape(grid.shape)
            H = grid.complex_hessian(du)
            out = np.einsum("...ji,...ij->...", gi, H).real
            if mode == "negative":
                out = out - du
            elif mode == "ricci_flat":
                out = out - out.mean()
            return out.ravel()

        # constant-coefficient symbol for the preconditioner
        mult = np.zeros(grid.shape, dtype=complex)
        for i in range(grid.n_c):
            for j in range(grid.n_c):
                mult = mult + mean_gi[j, i] * grid._dz[i] * grid._dzbar[j]
        mult = mult.real
        if mode == "negative":
            mult = mult - 1.0
            mult_inv = 1.0 / mult
        else:
            mult_inv = np.where(mult == 0, 0.0, 1.0 / np.where(mult == 0, 1.0, mult))

        def apply_prec(vec):
            w = vec.reshape(grid.shape)
            out = np.real(grid.ifft(mult_inv * grid.fft(w)))
            if mode == "ricci_flat":
                out = out - out.mean()
            return out.ravel()

        rhs_vec = -(r - r.mean()).ravel() if mode == "ricci_flat" else -r.ravel()
        L = LinearOperator((npts, npts), matvec=apply_lin, dtype=float)
        M = LinearOperator((npts, npts), matvec=apply_prec, dtype=float)
        du, info = gmres(L, rhs_vec, M=M, rtol=1e-10, atol=0.0, maxiter=200)
        if info != 0:
            raise NumericalFailureError(
                "GMRES failed to converge in Newton linearization (info=%d)" % info,
                last_state=u,
            )
        du = du.reshape(grid.shape)
        # Damped line search on the residual sup-norm.
        step = 1.0
        for _ in range(30):
            try:
                cand = u + step * du
                if float(np.abs(residual(cand)).max()) < sup:
                    u = cand
                    break
            except DegenerateMetricError:
                pass
            step *= 0.5
        else:
            raise NumericalFailureError(
                "Newton line search stalled at residual %g" % sup, last_state=u
            )
    raise NumericalFailureError(
        "Newton failed to reach tolerance %g in %d iterations" % (tol, max_iter),
        last_state=u,
    )


@dataclass(frozen=True)
class KahlerMonitors:
    max_abs_dudt: np.ndarray  # per sample
    max_abs_f: float
    volume_identity_err: np.ndarray  # |int e^{du/dt - f} dV - Vol~| per sample
    trace_min: np.ndarray  # min of (n + Lap_{g0} u) per sample
    oscillation: np.ndarray  # osc(du/dt) per sample
    energy: np.ndarray  # E = 0.5 int phi^2 dV~, phi = centered du/dt
    equiv_K: float  # final uniform-equivalence constant for g0 ~ g~


def convergence_monitors(traj):
    """A-priori bounds and decay quantities along a Kahler flow trajectory.

    * max |du/dt| <= max |f| (maximum principle for the potential speed);
    * the volume identity: integral of e^{du/dt - f} (+u in negative mode)
      against dV equals the evolving volume integral of det g~ / det g0;
    * positivity of the metric trace n + Lap_{g0} u;
    * oscillation of du/dt and the energy E(t) = half the dV~-integral of
      the centered speed squared, both expected to decay;
    * the final uniform-equivalence constant K with g0/K <= g~ <= K g0.
    """
    grid, g0, f, mode = traj.grid, traj.g0, traj.f, traj.mode
    g0 = background_metric(grid.n_c, g0)
    det0 = float(np.linalg.det(g0).real)
    n = grid.n_c
    g0_inv = np.linalg.inv(g0)
    samples = traj.samples
    m = len(samples)
    max_dudt = np.empty(m)
    vol_err = np.empty(m)
    tr_min = np.empty(m)
    osc = np.empty(m)
    energy = np.empty(m)
    K = 1.0
    for idx, s in enumerate(samples):
        st = PotentialState(grid=grid, g0=g0, f=f, u=s.u, mode=mode)
        gt = st.metric()
        det_ratio = hermitian_det(gt) / det0
        max_dudt[idx] = float(np.abs(s.dudt).max())
        expo = s.dudt - f + (s.u if mode == "negative" else 0.0)
        vol_err[idx] = abs(grid.integral(np.exp(expo)) - grid.integral(det_ratio))
        H = gt - g0
        tr_min[idx] = float(
            (n + np.einsum("ji,...ij->...", g0_inv, H).real).min()
        )
        osc[idx] = float(s.dudt.max() - s.dudt.min())
        w = det_ratio  # dV~ / dV
        phi = s.dudt - grid.integral(s.dudt * w) / grid.integral(w)
        energy[idx] = 0.5 * grid.integral(phi ** 2 * w)
        if idx == m - 1:
            # eigenvalue bounds of g0^{-1} g~ via the Hermitian pencil
            L = np.linalg.cholesky(g0)
            Li = np.linalg.inv(L)
            A = Li @ gt @ Li.conj().T
            lo, hi = hermitian_eig_bounds(A)
            K = float(max(hi.max(), 1.0 / lo.min()))
    return KahlerMonitors(
        max_abs_dudt=max_dudt,
        max_abs_f=float(np.abs(f).max()),
        volume_identity_err=vol_err,
        trace_min=tr_min,
        oscillation=osc,
        energy=energy,
        equiv_K=K,
    )
