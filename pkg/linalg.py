"""Dense decomposition kernels shared by the variance definitions and solvers.

Truncated SVD with a deterministic sign convention, QR with optional max-norm
column pivoting, polar (UP) decomposition, orthogonal projectors and the
symmetric square root. Every function is pure: inputs are copied, outputs are
fresh arrays.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg as sla

from config import RANK_TOL, RECONSTRUCTION_TOL, SYMMETRY_TOL
from errors import InvalidInput, RankDeficient

logger = logging.getLogger(__name__)


# ── Validation helpers ────────────────────────────────────────────


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Copy ``values`` into a finite 2-D float array or raise InvalidInput."""
    try:
        arr = np.array(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"{name} is not numeric: {exc}") from exc
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def require_full_column_rank(Y: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Raise RankDeficient unless sigma_min(Y) > RANK_TOL * sigma_max(Y)."""
    n, m = Y.shape
    if n < m:
        raise RankDeficient(f"{name} is {n}x{m}: more columns than rows, rank < {m}")
    s = sla.svdvals(Y)
    if s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficient(
            f"{name} ({n}x{m}) does not have full column rank "
            f"(sigma_min/sigma_max = {s[-1] / s[0] if s[0] else 0.0:.3g})"
        )
    return s


def column_inner(Y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Return diag(X^T Y), i.e. <y_j, x_j> for every column j."""
    return np.einsum("ij,ij->j", Y, X)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ── Domain types ──────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Thin SVD A = U diag(sigma) V^T restricted to the numerical rank r."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def r(self) -> int:
        return int(self.sigma.size)

    def leading(self, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(U_m, sigma_m, V_m) for the m leading singular triplets."""
        if not 1 <= m <= self.r:
            raise RankDeficient(f"m = {m} exceeds the numerical rank r = {self.r}")
        return self.U[:, :m], self.sigma[:m], self.V[:, :m]

    def leading_variance(self, m: int) -> float:
        """sigma_1^2 + ... + sigma_m^2, the PCA value for m components."""
        _, s, _ = self.leading(m)
        return float(np.sum(s**2))


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """n x p data matrix A with its truncated SVD computed on first use."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(as_matrix(self.values, "data matrix")))

    @classmethod
    def centered(cls, values) -> "DataMatrix":
        """Build from raw data after subtracting column means."""
        arr = as_matrix(values, "data matrix")
        return cls(arr - arr.mean(axis=0))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @cached_property
    def svd(self) -> SpectralModel:
        return truncated_svd(self)

    @property
    def rank(self) -> int:
        return self.svd.r

    @cached_property
    def total_variance(self) -> float:
        """||A||_F^2."""
        return float(np.sum(self.values**2))

    def restriction(self, m: int) -> np.ndarray:
        """A_m = U_m Sigma_m V_m^T, the restriction of A to its m leading right singular vectors."""
        U, s, V = self.svd.leading(m)
        return (U * s) @ V.T


@dataclass(frozen=True, eq=False)
class QRFactors:
    """Y[:, perm] = Q R with R upper triangular and non-negative diagonal."""

    Q: np.ndarray
    R: np.ndarray
    perm: np.ndarray


@dataclass(frozen=True, eq=False)
class PolarFactors:
    """Y = U P with U column-orthonormal and P symmetric positive semidefinite."""

    U: np.ndarray
    P: np.ndarray


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """Orthonormal basis X of span{Y}; column j is paired with component y_j.

    ``rule`` is "qr", "up" or "optimal". For the QR rule ``perm`` is the pivot
    order in which the basis was built (X is already mapped back to the
    original column order).
    """

    X: np.ndarray
    rule: str
    perm: np.ndarray | None = None


# ── Decompositions ────────────────────────────────────────────────


def truncated_svd(A) -> SpectralModel:
    """Thin SVD truncated to the numerical rank, signs fixed.

    The largest-magnitude entry of every right singular vector is made
    positive (first such entry on ties) and the left vector is flipped with it.
    """
    values = A.values if isinstance(A, DataMatrix) else as_matrix(A, "data matrix")
    U, s, Vt = sla.svd(values, full_matrices=False)
    if s[0] == 0.0:
        raise InvalidInput("data matrix is identically zero")
    r = int(np.count_nonzero(s > RANK_TOL * s[0]))
    U, s, V = U[:, :r], s[:r], Vt[:r].T

    pivots = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivots, np.arange(r)])
    signs[signs == 0] = 1.0
    U = U * signs
    V = V * signs

    logger.debug("truncated_svd: %dx%d, rank %d, sigma_1 = %.6g", values.shape[0], values.shape[1], r, s[0])
    return SpectralModel(U=_readonly(U), sigma=_readonly(s.copy()), V=_readonly(V))


def qr_decompose(Y, pivot_max_norm: bool = True) -> QRFactors:
    """QR decomposition Y[:, perm] = Q R with diag(R) >= 0.

    With ``pivot_max_norm`` the column of largest residual norm is taken at
    each step (lowest original index on ties); otherwise perm is the identity.
    """
    Y = as_matrix(Y, "components")
    require_full_column_rank(Y, "components")
    m = Y.shape[1]
    if pivot_max_norm:
        Q, R, perm = sla.qr(Y, mode="economic", pivoting=True)
    else:
        Q, R = sla.qr(Y, mode="economic")
        perm = np.arange(m)

    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    Q = Q * signs
    R = np.triu(signs[:, None] * R)

    scale = max(np.linalg.norm(Y), 1.0)
    if np.linalg.norm(Y[:, perm] - Q @ R) > RECONSTRUCTION_TOL * scale:
        raise RankDeficient("QR reconstruction failed; components are numerically dependent")
    return QRFactors(Q=Q, R=R, perm=np.asarray(perm, dtype=int))


def polar_decompose(Y) -> PolarFactors:
    """Polar decomposition Y = U P from the inner SVD Y = W S G^T.

    U = W G^T maximizes <Y, X>_F over column-orthonormal X; P = G S G^T.
    Rank-deficient Y is rejected since U would not be unique.
    """
    Y = as_matrix(Y, "components")
    require_full_column_rank(Y, "components")
    U, P = sla.polar(Y, side="right")
    P = 0.5 * (P + P.T)
    return PolarFactors(U=U, P=P)


def orthonormal_basis(Y) -> np.ndarray:
    """Column-orthonormal basis of span{Y} (the Q factor of an unpivoted QR)."""
    Y = as_matrix(Y)
    require_full_column_rank(Y)
    return sla.qr(Y, mode="economic")[0]


def projector(Z) -> np.ndarray:
    """Orthogonal projector P_Z = Z (Z^T Z)^{-1} Z^T, evaluated as Q Q^T."""
    Q = orthonormal_basis(Z)
    P = Q @ Q.T
    return 0.5 * (P + P.T)


def sym_sqrt(S) -> np.ndarray:
    """Symmetric positive semidefinite square root of a symmetric matrix."""
    S = as_matrix(S, "symmetric matrix")
    if S.shape[0] != S.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {S.shape}")
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > SYMMETRY_TOL * scale:
        raise InvalidInput("matrix is not symmetric")
    w, W = np.linalg.eigh(0.5 * (S + S.T))
    root = (W * np.sqrt(np.clip(w, 0.0, None))) @ W.T
    return 0.5 * (root + root.T)


def random_orthonormal(n: int, k: int, rng: np.random.Generator, centered: bool = False) -> np.ndarray:
    """Haar-distributed n x k column-orthonormal matrix.

    QR of a Gaussian matrix with the signs of diag(R) folded into Q. With
    ``centered`` the columns are also orthogonal to the constant vector
    (requires k < n).
    """
    if k > n or (centered and k >= n):
        raise InvalidInput(f"cannot draw {k} orthonormal columns in dimension {n} (centered={centered})")
    G = rng.standard_normal((n, k))
    if centered:
        G -= G.mean(axis=0)
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs
