"""Block-PCA formulations of explained variance, freed of orthogonality constraints.

- solve_weighted: alternating maximization of sum_j mu_j^2 <A z_j, x_j>^2 over
  unit-norm Z and orthonormal X; unique maximizer V_m for decreasing weights.
- certify_pca_optimality: checks that Z spans V_m with (A_m^T A_m)^-1-orthogonal
  columns whose normals form the optimal basis.
- maximize_projected: projected gradient ascent of the QR or UP projected
  variance over unit-norm loadings.
- find_parasitic_up: seeded restarts of the UP ascent, keeping the non-SVD
  maximizers with equal diagonal projections.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from config import (
    ASCENT_FLOOR_TOL,
    ASCENT_GRAD_TOL,
    ASCENT_INITIAL_MOVE,
    ASCENT_MAX_ITER,
    ASCENT_MAX_MOVE,
    ASCENT_MIN_MOVE,
    BLOCK_PCA_MAX_ITER,
    BLOCK_PCA_TOL,
    CERTIFY_TOL,
    DEFAULT_SEED,
    PARASITIC_EQUAL_TOL,
    PARASITIC_RESTARTS,
    PARASITIC_VALUE_TOL,
    REPORT_SLACK,
    SPECTRUM_GAP_TOL,
    SVD_MATCH_TOL,
)
from errors import DegenerateSpectrumWarning, InvalidInput, InvariantViolation, NonConverged, RankDeficient
from expvar import Loadings, Weights, components, polar_ascent_step
from linalg import DataMatrix, column_inner, polar_decompose, qr_decompose

logger = logging.getLogger(__name__)

# Relative rounding allowance when comparing objective values along an ascent path
_ROUNDING = 4.0 * np.finfo(float).eps


# ── Result types ──────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class BlockPcaSolution:
    """Maximizers Z*, X* of the weighted block-PCA objective."""

    Z_star: np.ndarray
    X_star: np.ndarray
    objective: float
    iterations: int
    converged: bool
    matched_svd: bool
    objective_trace: list[float] = field(default_factory=list)
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "Z_star": self.Z_star.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "matched_svd": self.matched_svd,
            "note": self.note,
        }


@dataclass(frozen=True)
class OptimalityCertificate:
    span_match: bool
    weighted_orth_residual: float
    normal_basis_residual: float
    is_pca_optimal: bool


@dataclass(frozen=True, eq=False)
class AscentResult:
    """End point of a projected gradient ascent over unit-norm loadings."""

    Z: np.ndarray
    objective: float
    iterations: int
    converged: bool
    grad_norm: float
    trace: list[float] = field(default_factory=list)


# ── Helpers ───────────────────────────────────────────────────────


def matches_svd(Z: np.ndarray, V_m: np.ndarray, tol: float = SVD_MATCH_TOL, allow_permutation: bool = False) -> bool:
    """True iff every z_j equals +-v_j (or +-v_pi(j) for a permutation pi) within ``tol``."""
    if Z.shape != V_m.shape:
        return False
    if not allow_permutation:
        dist = np.minimum(np.linalg.norm(Z - V_m, axis=0), np.linalg.norm(Z + V_m, axis=0))
        return bool(np.all(dist < tol))
    used = set()
    for j in range(Z.shape[1]):
        k = int(np.argmax(np.abs(V_m.T @ Z[:, j])))
        if k in used:
            return False
        used.add(k)
        if min(np.linalg.norm(Z[:, j] - V_m[:, k]), np.linalg.norm(Z[:, j] + V_m[:, k])) >= tol:
            return False
    return True


def cartan_corner(Y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Corner point X diag(X^T Y) 1 where the m tangent hyperplanes meet.

    Its squared norm equals the projected variance sum_j <y_j, x_j>^2.
    """
    return X @ column_inner(Y, X)


def _check_m(A: DataMatrix, m: int) -> None:
    if m < 1:
        raise InvalidInput(f"m must be at least 1, got {m}")
    if m > A.rank:
        raise RankDeficient(f"m = {m} exceeds the numerical rank r = {A.rank} of the data matrix")


def _warn_degenerate_spectrum(A: DataMatrix, m: int) -> bool:
    s = A.svd.sigma
    head = s[: min(m + 1, s.size)]
    if head.size < 2:
        return False
    gap = float(np.min(-np.diff(head)))
    if gap < SPECTRUM_GAP_TOL * s[0]:
        warnings.warn(
            f"leading singular values are not distinct (smallest gap {gap:.3g}); the maximizer is not unique",
            DegenerateSpectrumWarning,
            stacklevel=3,
        )
        return True
    return False


def _random_unit_columns(p: int, m: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((p, m))
    return Z / np.linalg.norm(Z, axis=0)


def _normalize_columns(Z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(Z, axis=0)
    if np.any(norms == 0.0):
        raise RankDeficient("a loading vector vanished")
    return Z / norms


# ── Weighted optimal-projected block PCA ──────────────────────────


def solve_weighted(
    A: DataMatrix,
    m: int,
    weights: Weights | None = None,
    tol: float = BLOCK_PCA_TOL,
    max_iter: int = BLOCK_PCA_MAX_ITER,
    init: Loadings | None = None,
    seed: int | None = None,
) -> BlockPcaSolution:
    """Maximize sum_j mu_j^2 <A z_j, x_j>^2 by alternating exact partial maximizations.

    Z step: z_j = A^T x_j / ||A^T x_j||. X step: X = polar(2 Y diag(mu_j^2 <x_j, y_j>)).
    Stops when ||Z_{k+1} - Z_k||_F < tol. Weights default to mu_j = m - j + 1;
    a random start is drawn from ``seed`` when ``init`` is not given.
    """
    _check_m(A, m)
    weights = Weights.decreasing(m) if weights is None else weights
    if weights.m != m:
        raise InvalidInput(f"got {weights.m} weights for m = {m}")
    if tol <= 0 or max_iter < 1:
        raise InvalidInput(f"tol must be positive and max_iter >= 1, got tol={tol}, max_iter={max_iter}")
    degenerate = _warn_degenerate_spectrum(A, m)
    mu2 = weights.mu**2

    if init is None:
        rng = np.random.default_rng(DEFAULT_SEED if seed is None else seed)
        init = Loadings(_random_unit_columns(A.p, m, rng))
    elif init.m != m:
        raise InvalidInput(f"initial loadings have {init.m} columns, expected {m}")

    Z = np.array(init.Z)
    Y = components(A, init)
    X = polar_decompose(Y).U
    f = float(mu2 @ column_inner(Y, X) ** 2)
    trace = [f]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        Z_next = _normalize_columns(A.values.T @ X)
        Y = A.values @ Z_next
        X = polar_ascent_step(Y, X, mu2)
        f_next = float(mu2 @ column_inner(Y, X) ** 2)
        if f_next < f - 1e-12 * (1.0 + abs(f)):
            raise InvariantViolation(f"block PCA objective decreased at iteration {iterations}: {f:.15g} -> {f_next:.15g}")
        step = float(np.linalg.norm(Z_next - Z))
        Z, f = Z_next, f_next
        trace.append(f)
        logger.debug("solve_weighted iter %d: f = %.15g, |dZ| = %.3g", iterations, f, step)
        if step < tol:
            converged = True
            break

    _, sigma, V_m = A.svd.leading(m)
    bound = float(mu2 @ sigma**2)
    if f > bound + REPORT_SLACK * (1.0 + bound):
        raise InvariantViolation(f"block PCA objective {f:.12g} exceeds sum mu_j^2 sigma_j^2 = {bound:.12g}")

    if not weights.strictly_decreasing:
        note = "weights are not strictly decreasing: V_m is one maximizer among many, matched_svd may be false"
    elif degenerate:
        note = "leading singular values are not distinct: the maximizer is not unique"
    else:
        note = ""

    solution = BlockPcaSolution(
        Z_star=Z,
        X_star=X,
        objective=f,
        iterations=iterations,
        converged=converged,
        matched_svd=matches_svd(Z, V_m),
        objective_trace=trace,
        note=note,
    )
    if not converged:
        raise NonConverged(f"block PCA did not converge in {max_iter} iterations", result=solution)
    logger.info("solve_weighted: m=%d converged in %d iterations, objective %.12g", m, iterations, f)
    return solution


# ── PCA-optimality certificate ────────────────────────────────────


def certify_pca_optimality(A: DataMatrix, Z: Loadings) -> OptimalityCertificate:
    """Check the three conditions under which Z is a PCA-optimal set of loadings.

    1. span{Z} = span{V_m};
    2. the z_j are (A_m^T A_m)^-1-orthogonal, evaluated as sum_i z~_ij z~_ik / sigma_i^2
       with z~ = V_m^T Z;
    3. the normalized normals n_j = U_m Sigma^-1 z~_j are orthonormal and recover sum sigma_j^2.
    """
    Y = components(A, Z)
    m = Z.m
    _check_m(A, m)
    U_m, sigma, V_m = A.svd.leading(m)

    Zt = V_m.T @ Z.Z
    span_match = bool(np.linalg.norm(V_m @ Zt - Z.Z) < CERTIFY_TOL)

    C = Zt.T @ (Zt / sigma[:, None] ** 2)
    off = C - np.diag(np.diag(C))
    weighted_orth_residual = float(np.abs(off).max()) if m > 1 else 0.0

    N = U_m @ (Zt / sigma[:, None])
    N = N / np.linalg.norm(N, axis=0)
    bound = float(np.sum(sigma**2))
    normal_basis_residual = max(
        float(np.linalg.norm(N.T @ N - np.eye(m))),
        abs(float(np.sum(column_inner(Y, N) ** 2)) - bound) / bound,
    )
    return OptimalityCertificate(
        span_match=span_match,
        weighted_orth_residual=weighted_orth_residual,
        normal_basis_residual=normal_basis_residual,
        is_pca_optimal=span_match and weighted_orth_residual < CERTIFY_TOL and normal_basis_residual < CERTIFY_TOL,
    )


# ── Projected gradient ascent ─────────────────────────────────────


def projected_value_and_gradient(A: DataMatrix, Z: np.ndarray, rule: str, pivot: bool = True) -> tuple[float, np.ndarray]:
    """Projected variance of Y = AZ and its gradient in Z.

    qr: f = sum r_kk^2, grad_Y = 2 Q diag(r_kk^2) R^-T in pivot order.
    up: f = sum p_jj^2 with P = W diag(lam) W^T, grad_Y = 4 Y H where
        H = W ((W^T diag(P) W) o K) W^T and K_ij = 1 / (lam_i + lam_j).
    """
    Y = A.values @ Z
    if rule == "qr":
        f = qr_decompose(Y, pivot_max_norm=pivot)
        r = np.diag(f.R)
        grad_pivoted = 2.0 * f.Q @ sla.solve_triangular(f.R, np.diag(r**2)).T
        grad_Y = np.empty_like(Y)
        grad_Y[:, f.perm] = grad_pivoted
        value = float(np.sum(r**2))
    elif rule == "up":
        P = polar_decompose(Y).P
        lam, W = np.linalg.eigh(P)
        K = 1.0 / (lam[:, None] + lam[None, :])
        H = W @ ((W.T @ np.diag(np.diag(P)) @ W) * K) @ W.T
        grad_Y = 4.0 * Y @ H
        value = float(np.sum(np.diag(P) ** 2))
    else:
        raise InvalidInput(f"unknown projected rule {rule!r}; expected 'qr' or 'up'")
    return value, A.values.T @ grad_Y


def _tangent(grad: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return grad - Z * column_inner(grad, Z)


def maximize_projected(
    A: DataMatrix,
    m: int,
    rule: str,
    init: Loadings | None = None,
    seed: int | None = None,
    tol: float = ASCENT_GRAD_TOL,
    max_iter: int = ASCENT_MAX_ITER,
    pivot: bool = True,
) -> AscentResult:
    """Projected gradient ascent of the QR or UP projected variance over unit-norm Z.

    The gradient is projected onto the tangent space of each unit sphere and
    every step is renormalized column by column. A step is taken when it
    raises the objective, or when it keeps the objective within rounding and
    shrinks the tangential gradient; otherwise it is halved. After each
    accepted step it doubles, with the move ||step * tangent|| capped at
    ASCENT_MAX_MOVE.

    Converged when the tangential gradient is below tol * f, or when
    the step underflows with the gradient already below
    ASCENT_FLOOR_TOL * f, i.e. at the rounding floor of the objective.
    """
    _check_m(A, m)
    if init is None:
        rng = np.random.default_rng(DEFAULT_SEED if seed is None else seed)
        Z = _random_unit_columns(A.p, m, rng)
    else:
        if init.m != m:
            raise InvalidInput(f"initial loadings have {init.m} columns, expected {m}")
        Z = np.array(init.Z)

    f, grad = projected_value_and_gradient(A, Z, rule, pivot)
    tangent = _tangent(grad, Z)
    grad_norm = float(np.linalg.norm(tangent))
    trace = [f]
    step = ASCENT_INITIAL_MOVE / max(grad_norm, np.finfo(float).tiny)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if grad_norm <= tol * abs(f):
            converged = True
            break

        slack = _ROUNDING * abs(f)
        accepted = False
        while step * grad_norm >= ASCENT_MIN_MOVE:
            try:
                candidate = _normalize_columns(Z + step * tangent)
                f_c, grad_c = projected_value_and_gradient(A, candidate, rule, pivot)
            except RankDeficient:
                step /= 2.0
                continue
            tangent_c = _tangent(grad_c, candidate)
            norm_c = float(np.linalg.norm(tangent_c))
            if f_c > f + slack or (f_c >= f - slack and norm_c < grad_norm):
                accepted = True
                break
            step /= 2.0
        if not accepted:
            converged = grad_norm <= ASCENT_FLOOR_TOL * abs(f)
            logger.debug(
                "ascent (%s): step underflow at iteration %d, |grad| = %.3g, converged = %s",
                rule,
                iterations,
                grad_norm,
                converged,
            )
            break

        Z, f, tangent, grad_norm = candidate, f_c, tangent_c, norm_c
        trace.append(f)
        step = min(2.0 * step, ASCENT_MAX_MOVE / max(grad_norm, np.finfo(float).tiny))

    return AscentResult(Z=Z, objective=f, iterations=iterations, converged=converged, grad_norm=grad_norm, trace=trace)


# ── Parasitic UP-projected maximizers ─────────────────────────────


def _same_up_to_signs(Z1: np.ndarray, Z2: np.ndarray, tol: float) -> bool:
    return matches_svd(Z1, Z2, tol=tol, allow_permutation=True)


def parasitic_restarts(A: DataMatrix, m: int, restarts: int = PARASITIC_RESTARTS, seed: int = DEFAULT_SEED):
    """UP ascent from each seeded random start, one AscentResult per restart."""
    for restart in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart,)))
        yield maximize_projected(A, m, "up", init=Loadings(_random_unit_columns(A.p, m, rng)))


def find_parasitic_up(
    A: DataMatrix,
    m: int,
    tol: float = PARASITIC_EQUAL_TOL,
    restarts: int = PARASITIC_RESTARTS,
    seed: int = DEFAULT_SEED,
) -> list[Loadings]:
    """Non-SVD maximizers of the UP projected variance found from seeded random starts.

    A converged end point is kept when it is not a signed permutation of V_m,
    its diagonal projections <y_j, x_j> agree within ``tol`` and its value is
    sum_{j<=m} sigma_j^2 within PARASITIC_VALUE_TOL relative. Restarts that do
    not converge are dropped. Duplicates (up to column signs and order) are
    reported once.
    """
    _check_m(A, m)
    if m == 1:
        return []
    _warn_degenerate_spectrum(A, m)
    _, _, V_m = A.svd.leading(m)
    target = A.svd.leading_variance(m)

    found: list[Loadings] = []
    dropped = 0
    for result in parasitic_restarts(A, m, restarts, seed):
        if not result.converged:
            dropped += 1
            continue
        Z = result.Z
        if matches_svd(Z, V_m, tol=SVD_MATCH_TOL, allow_permutation=True):
            continue
        Y = A.values @ Z
        d = column_inner(Y, polar_decompose(Y).U)
        if np.ptp(d) > tol or abs(result.objective - target) > PARASITIC_VALUE_TOL * target:
            continue
        if any(_same_up_to_signs(Z, other.Z, SVD_MATCH_TOL) for other in found):
            continue
        found.append(Loadings(_normalize_columns(Z)))

    if dropped:
        logger.warning("find_parasitic_up: %d of %d restarts did not converge and were dropped", dropped, restarts)
    logger.info("find_parasitic_up: %d parasitic maximizer(s) from %d restarts", len(found), restarts)
    return found
