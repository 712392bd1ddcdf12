"""Principal symbols of the Ricci operators as finite-dimensional matrices.

Everything here happens at a single cotangent point: a metric g (an n x n
SPD matrix), a nonzero covector xi, and the vector space of symmetric
2-tensors identified with R^m, m = n(n+1)/2, through the orthonormal basis

    E_(ii) = e_i (x) e_i,     E_(ij) = (e_i (x) e_j + e_j (x) e_i)/sqrt(2),

ordered (1,1), (1,2), ..., (1,n), (2,2), ..., (n,n).  In that basis the
linearized-Ricci symbol, the symmetrized-gradient symbol, and the gauge
correction that reduces the former to -|xi|^2/2 times the identity all
become explicit matrices whose kernels, compositions, and spectra can be
checked directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovectorError, DegenerateMetricError, InvalidInputError

_SQRT2 = np.sqrt(2.0)


def sym_basis_indices(n):
    """Index pairs (i, j), i <= j, in the canonical ordering."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def sym_dim(n):
    return n * (n + 1) // 2


def tensor_to_vec(h):
    """Coordinates of a symmetric matrix in the weighted orthonormal basis."""
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    out = np.empty(sym_dim(n))
    for a, (i, j) in enumerate(sym_basis_indices(n)):
        out[a] = h[i, i] if i == j else _SQRT2 * h[i, j]
    return out


def vec_to_tensor(v, n):
    """Inverse of tensor_to_vec."""
    h = np.zeros((n, n))
    for a, (i, j) in enumerate(sym_basis_indices(n)):
        if i == j:
            h[i, i] = v[a]
        else:
            h[i, j] = h[j, i] = v[a] / _SQRT2
    return h


@dataclass(frozen=True)
class SymbolPoint:
    """A cotangent point: SPD metric g and nonzero covector xi."""

    g: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise InvalidInputError("g must be a square matrix")
        if xi.shape != (g.shape[0],):
            raise InvalidInputError("xi must be a covector of matching dimension")
        if np.linalg.norm(g - g.T) > 1e-12 * max(1.0, np.linalg.norm(g)):
            raise DegenerateMetricError("g must be symmetric")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise DegenerateMetricError("g must be positive definite") from None
        if np.linalg.norm(xi) == 0.0:
            raise DegenerateCovectorError("xi must be nonzero")
        object.__setattr__(self, "g", g.copy())
        object.__setattr__(self, "xi", xi.copy())

    @property
    def n(self):
        return self.g.shape[0]

    def g_inv(self):
        return np.linalg.inv(self.g)

    def xi_norm_sq(self):
        """|xi|_g^2 = g^{pq} xi_p xi_q."""
        return float(self.xi @ self.g_inv() @ self.xi)


def _ricci_symbol_apply(pt, h):
    """[sigma(Ric')(xi) h]_{jk} = (1/2) g^{pq} (xi_q xi_j h_{kp} + xi_q xi_k h_{jp}
    - xi_q xi_p h_{jk} - xi_j xi_k h_{pq})."""
    gi = pt.g_inv()
    xi = pt.xi
    xi_up = gi @ xi  # g^{pq} xi_q
    hxi = h @ xi_up  # contraction g^{pq} xi_q h_{kp}
    norm2 = float(xi @ xi_up)
    tr = float(np.einsum("pq,pq->", gi, h))
    return 0.5 * (
        np.outer(xi, hxi) + np.outer(hxi, xi) - norm2 * h - tr * np.outer(xi, xi)
    )


def ricci_symbol(pt):
    """Matrix of the linearized-Ricci principal symbol on symmetric tensors."""
    n = pt.n
    m = sym_dim(n)
    M = np.empty((m, m))
    for b, (i, j) in enumerate(sym_basis_indices(n)):
        h = np.zeros((n, n))
        if i == j:
            h[i, i] = 1.0
        else:
            h[i, j] = h[j, i] = 1.0 / _SQRT2
        M[:, b] = tensor_to_vec(_ricci_symbol_apply(pt, h))
    return M


def divadj_symbol(pt):
    """Matrix (m x n) of the symmetrized-gradient symbol X -> (xi_i X_j + xi_j X_i)/2."""
    n = pt.n
    M = np.empty((sym_dim(n), n))
    for b in range(n):
        X = np.zeros(n)
        X[b] = 1.0
        t = 0.5 * (np.outer(pt.xi, X) + np.outer(X, pt.xi))
        M[:, b] = tensor_to_vec(t)
    return M


def gauge_vector_map(pt):
    """Matrix (n x m) of h -> V(h),  V_k = g^{pq} xi_p (h - (tr_g h/2) g)_{qk}."""
    n = pt.n
    gi = pt.g_inv()
    xi_up = gi @ pt.xi
    M = np.empty((n, sym_dim(n)))
    for b, (i, j) in enumerate(sym_basis_indices(n)):
        h = np.zeros((n, n))
        if i == j:
            h[i, i] = 1.0
        else:
            h[i, j] = h[j, i] = 1.0 / _SQRT2
        G = h - 0.5 * float(np.einsum("pq,pq->", gi, h)) * pt.g
        M[:, b] = xi_up @ G
    return M


def deturck_symbol(pt):
    """Gauge-corrected symbol: ricci_symbol minus divadj_symbol . gauge map.

    Equals -(1/2) |xi|_g^2 times the identity; returned as the explicitly
    assembled difference so the identity can be *checked*, not assumed.
    """
    return ricci_symbol(pt) - divadj_symbol(pt) @ gauge_vector_map(pt)


def kernel_dimension(M, rel_tol=1e-9):
    """Number of singular values below rel_tol times the largest."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return M.shape[1]
    return int(np.sum(s < rel_tol * s[0]))


def composition_residual(pt):
    """Spectral norm of ricci_symbol @ divadj_symbol (zero: gauge directions
    are annihilated by the linearized-Ricci symbol)."""
    return float(np.linalg.norm(ricci_symbol(pt) @ divadj_symbol(pt), ord=2))


def _cancellation_scale(M, gauge, half_norm2):
    """Scale for residuals of M - gauge = -half_norm2 * Id: the largest
    magnitude among the terms being cancelled (an absolute tolerance would
    be meaningless for ill-conditioned metrics, where the two terms are
    individually large)."""
    return max(np.abs(M).max(), np.abs(gauge).max(), half_norm2, 1e-300)


def deturck_identity_residual(pt):
    """Sup-norm distance of the gauge-corrected symbol from -(1/2)|xi|^2 Id,
    relative to the magnitude of the cancelling terms."""
    M = ricci_symbol(pt)
    gauge = divadj_symbol(pt) @ gauge_vector_map(pt)
    half = 0.5 * pt.xi_norm_sq()
    target = -half * np.eye(M.shape[0])
    return float(np.abs(M - gauge - target).max() / _cancellation_scale(M, gauge, half))


def lichnerowicz_residual(pt):
    """Residual of the decomposition  ricci = -(1/2)|xi|^2 Id + gauge part.

    Identical content to deturck_identity_residual, phrased as the additive
    split of the raw symbol; kept separate so both routes are exercised.
    """
    M = ricci_symbol(pt)
    gauge = divadj_symbol(pt) @ gauge_vector_map(pt)
    half = 0.5 * pt.xi_norm_sq()
    resid = np.abs(M - (-half * np.eye(M.shape[0])) - gauge).max()
    return float(resid / _cancellation_scale(M, gauge, half))


def random_point(n, rng, cond_cap=1e6):
    """Random SPD metric (condition number <= cond_cap) and unit-ish covector."""
    for _ in range(1000):
        A = rng.normal(size=(n, n))
        g = A @ A.T + 1e-3 * np.eye(n)
        if np.linalg.cond(g) <= cond_cap:
            break
    else:
        raise InvalidInputError("could not sample a well-conditioned metric")
    xi = rng.normal(size=n)
    while np.linalg.norm(xi) < 1e-8:
        xi = rng.normal(size=n)
    return SymbolPoint(g=g, xi=xi)
