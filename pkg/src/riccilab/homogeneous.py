"""Left-invariant geometry of 3-D unimodular Lie groups in a Milnor frame.

A Milnor frame (F1, F2, F3) diagonalizes both the metric and the Lie
bracket: the brackets are

    [F2, F3] = 2*lam * F1,   [F3, F1] = 2*mu * F2,   [F1, F2] = 2*nu * F3,

with each of lam, mu, nu in {-1, 0, +1}, and the metric is
g = diag(A, B, C) in this frame.  The four signatures handled here are

    su2     : (-1, -1, -1)
    nil     : (-1,  0,  0)   (Heisenberg group)
    sol     : (-1,  0,  1)
    abelian : ( 0,  0,  0)   (flat torus quotients)

Curvature is computed generically from the structure constants; the
per-geometry closed forms live in the test suite as independent oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, InvalidInputError

_NAMED_SIGNATURES = {
    "su2": (-1, -1, -1),
    "nil": (-1, 0, 0),
    "sol": (-1, 0, 1),
    "abelian": (0, 0, 0),
}


@dataclass(frozen=True)
class MilnorSignature:
    """Bracket coefficients (lam, mu, nu), each in {-1, 0, +1}."""

    lam: int
    mu: int
    nu: int

    def __post_init__(self):
        for v in (self.lam, self.mu, self.nu):
            if v not in (-1, 0, 1):
                raise InvalidInputError(
                    "Milnor signature entries must be -1, 0 or +1, got %r"
                    % ((self.lam, self.mu, self.nu),)
                )

    @classmethod
    def from_name(cls, name):
        try:
            return cls(*_NAMED_SIGNATURES[name.lower()])
        except KeyError:
            raise InvalidInputError(
                "unknown geometry %r (expected one of %s)"
                % (name, ", ".join(sorted(_NAMED_SIGNATURES)))
            ) from None

    @classmethod
    def su2(cls):
        return cls.from_name("su2")

    @classmethod
    def nil(cls):
        return cls.from_name("nil")

    @classmethod
    def sol(cls):
        return cls.from_name("sol")

    @classmethod
    def abelian(cls):
        return cls.from_name("abelian")

    def as_tuple(self):
        return (self.lam, self.mu, self.nu)


@dataclass(frozen=True)
class DiagonalMetric:
    """Diagonal left-invariant metric g = diag(A, B, C) in the Milnor frame."""

    A: float
    B: float
    C: float

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0 and self.C > 0):
            raise DegenerateMetricError(
                "metric coefficients must be positive, got %r"
                % ((self.A, self.B, self.C),)
            )

    def as_array(self):
        return np.array([self.A, self.B, self.C], dtype=float)

    def volume_density(self):
        """sqrt(det g) = sqrt(A*B*C) in the Milnor frame."""
        return float(np.sqrt(self.A * self.B * self.C))

    def scaled(self, s):
        """Metric s*g for s > 0."""
        return DiagonalMetric(s * self.A, s * self.B, s * self.C)


def milnor_structure(sig):
    """Structure constants c[k, i, j] with [F_i, F_j] = c[k, i, j] F_k.

    The nonzero entries are c^1_{23} = 2*lam (and antisymmetric partner),
    cyclically.  Returned as an integer array so the algebraic checks
    (antisymmetry, Jacobi, unimodularity) are exact.
    """
    c = np.zeros((3, 3, 3), dtype=int)
    coef = (2 * sig.lam, 2 * sig.mu, 2 * sig.nu)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        c[k, i, j] = coef[k]
        c[k, j, i] = -coef[k]
    return c


def jacobi_residual(c):
    """Exact integer residual of the Jacobi identity for constants c[k,i,j].

    Returns max |sum_m (c^m_{ij} c^n_{mk} + c^m_{jk} c^n_{mi} + c^m_{ki} c^n_{mj})|.
    """
    res = (
        np.einsum("mij,nmk->nijk", c, c)
        + np.einsum("mjk,nmi->nijk", c, c)
        + np.einsum("mki,nmj->nijk", c, c)
    )
    return int(np.abs(res).max())


def is_unimodular(c):
    """True when every adjoint map is trace-free: sum_k c^k_{ik} = 0."""
    return bool(np.all(np.einsum("kik->i", c) == 0))


def _ad_matrices(c):
    """ad(F_i) as a matrix:  (ad F_i)^k_j = c[k, i, j]."""
    return np.array([c[:, i, :] for i in range(3)], dtype=float)


def ad_star_table(sig, g):
    """Metric adjoints of the bracket maps, tabulated per frame pair.

    Returns a (3, 3, 3) array T with T[i, j, k] the F_{k+1}-component of the
    table entry at row i+1, column j+1.  The table follows the classical
    display for Milnor frames, whose row-1/column-2 entry is
    2*lam*(A/C)*F3: the entry in row i, column j is the metric adjoint
    (ad F_j)^* applied to F_i, i.e. T[i, j, k] solves
    <T[i,j,:] . F, F_k> g_kk = <F_i, [F_j, F_k]>.
    """
    c = milnor_structure(sig)
    gv = g.as_array()
    T = np.zeros((3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                # <F_i, [F_j, F_k]> = c[i, j, k] * g_ii
                T[i, j, k] = c[i, j, k] * gv[i] / gv[k]
    return T


def connection_coefficients(sig, g):
    """Levi-Civita coefficients Gamma[i, j, k]: nabla_{F_i} F_j = Gamma[i,j,k] F_k.

    Computed from the Koszul formula specialized to left-invariant fields:
        2 <nabla_X Y, Z> = <[X,Y], Z> - <[Y,Z], X> + <[Z,X], Y>.
    """
    c = milnor_structure(sig).astype(float)
    gv = g.as_array()
    gamma = np.zeros((3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                val = 0.5 * (
                    c[k, i, j] * gv[k] - c[i, j, k] * gv[i] + c[j, k, i] * gv[j]
                )
                gamma[i, j, k] = val / gv[k]
    return gamma


def curvature_tensor(sig, g):
    """Frame components Rm[i, j, k, m] of R(F_i, F_j)F_k = Rm[i,j,k,m] F_m.

    Sign convention: R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z
    - nabla_{[X,Y]} Z, which makes the round case positively curved.
    """
    c = milnor_structure(sig).astype(float)
    gamma = connection_coefficients(sig, g)
    rm = (
        np.einsum("jkl,ilm->ijkm", gamma, gamma)
        - np.einsum("ikl,jlm->ijkm", gamma, gamma)
        - np.einsum("lij,lkm->ijkm", c, gamma)
    )
    return rm


@dataclass(frozen=True)
class CurvatureData:
    """Diagonal curvature of (sig, g): Ricci, sectional, and scalar pieces."""

    ricci: tuple  # (Ric(F1,F1), Ric(F2,F2), Ric(F3,F3)) as bilinear-form entries
    sectional: tuple  # (K(F1,F2), K(F1,F3), K(F2,F3)), normalized by plane area
    scalar: float
    mixed_ricci_max: float  # largest |off-diagonal Ricci entry| (should be ~0)

    def ricci_eigenvalues(self):
        """Eigenvalues of the Ricci endomorphism g^{-1} Ric -- here Ric_ii / g_ii."""
        return self._eig

    def with_metric(self, g):
        obj = CurvatureData(self.ricci, self.sectional, self.scalar, self.mixed_ricci_max)
        return obj


def ricci_diagonal(sig, g):
    """Diagonal Ricci components and derived curvature data.

    Ricci is returned as the bilinear-form entries Ric(F_i, F_i); the
    eigenvalues of the Ricci endomorphism are Ric(F_i,F_i)/g_ii.  The
    sectional curvatures are normalized by the squared plane area, so the
    trace identity Ric(F_i,F_i) = g_ii * sum_{j != i} K(F_i, F_j) holds.
    """
    rm = curvature_tensor(sig, g)
    gv = g.as_array()
    ric = np.einsum("ijki->jk", rm)
    # Convert the (1,1)-slot trace to bilinear-form entries: Ric(F_j, F_k)
    # already is the trace of X -> R(X, F_j)F_k paired with the coframe,
    # whose (j,k) entry is a bilinear form to begin with -- but only after
    # lowering the output index, which for the trace is free. Off-diagonal
    # entries are tracked to confirm the frame diagonalizes Ricci.
    diag = tuple(float(ric[i, i]) for i in range(3))
    off = float(max(abs(ric[i, j]) for i in range(3) for j in range(3) if i != j))
    sect = []
    for (i, j) in ((0, 1), (0, 2), (1, 2)):
        # <R(F_i,F_j)F_j, F_i> / (g_ii g_jj)
        sect.append(float(rm[i, j, j, i] * gv[i] / (gv[i] * gv[j])))
    scalar = float(sum(diag[i] / gv[i] for i in range(3)))
    return CurvatureData(
        ricci=diag, sectional=tuple(sect), scalar=scalar, mixed_ricci_max=off
    )


def sectional_curvatures(sig, g):
    """The three sectional curvatures (K(F1,F2), K(F1,F3), K(F2,F3))."""
    return ricci_diagonal(sig, g).sectional


def mixed_curvature_max(sig, g):
    """max |<R(F_k, F_i)F_j, F_k>| over all triples with j != i.

    For a Milnor frame this vanishes identically; exposed so the property
    can be monitored on arbitrary inputs.
    """
    rm = curvature_tensor(sig, g)
    gv = g.as_array()
    worst = 0.0
    for k in range(3):
        for i in range(3):
            for j in range(3):
                if j == i:
                    continue
                worst = max(worst, abs(rm[k, i, j, k] * gv[k]))
    return float(worst)
