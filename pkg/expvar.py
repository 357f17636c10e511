"""Explained variance of correlated components: pure computation.

Given a data matrix A and unit-norm loadings Z (components Y = AZ), computes:
A. Subspace variance      tr{Y^T Y (Z^T Z)^-1}
B. Normalized variances   sum 1/||t_j||^2 with Z = T M, Y = X M (QR and UP bases)
C. Projected variances    sum <y_j, x_j>^2 (QR and UP bases)
D. Optimal projected      projected variance maximized over all orthonormal X
E. Report                 all six plus pev = value / ||A||_F^2, bounds enforced
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from config import (
    BASIS_CHECK_TOL,
    DEFINITION_FIELDS,
    DEFINITIONS,
    FIXED_POINT_MAX_ITER,
    FIXED_POINT_TOL,
    RANK_TOL,
    REPORT_SLACK,
    STATIONARITY_TOL,
    UNIT_NORM_TOL,
)
from errors import DegenerateBasis, InvalidInput, InvariantViolation, NonConverged
from linalg import (
    DataMatrix,
    OrthoBasis,
    as_matrix,
    column_inner,
    orthonormal_basis,
    polar_decompose,
    qr_decompose,
    require_full_column_rank,
)

logger = logging.getLogger(__name__)

BASIS_RULES = ("qr", "up")


# ── Inputs ────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Loadings:
    """p x m loadings Z with unit-norm columns."""

    Z: np.ndarray

    def __post_init__(self):
        Z = as_matrix(self.Z, "loadings")
        norms = np.linalg.norm(Z, axis=0)
        for j, norm in enumerate(norms):
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise InvalidInput(f"column {j + 1} of Z has norm {norm:.6g}, expected 1; rerun with --normalize")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    @classmethod
    def normalized(cls, Z) -> "Loadings":
        """Scale every column of Z to unit norm; zero columns are rejected."""
        Z = as_matrix(Z, "loadings")
        norms = np.linalg.norm(Z, axis=0)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise InvalidInput(f"column {zero[0] + 1} of Z is zero and cannot be normalized")
        return cls(Z / norms)

    @property
    def p(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True, eq=False)
class Weights:
    """Positive non-increasing weights mu_1 >= ... >= mu_m > 0."""

    mu: np.ndarray

    def __post_init__(self):
        try:
            mu = np.array(self.mu, dtype=float).ravel()
        except (TypeError, ValueError) as exc:
            raise InvalidInput(f"weights are not numeric: {exc}") from exc
        if mu.size == 0 or not np.all(np.isfinite(mu)):
            raise InvalidInput("weights must be a non-empty list of finite numbers")
        if np.any(mu <= 0):
            raise InvalidInput(f"weights must be positive, got {mu.tolist()}")
        if np.any(np.diff(mu) > 0):
            raise InvalidInput(f"weights must be non-increasing, got {mu.tolist()}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def ones(cls, m: int) -> "Weights":
        return cls(np.ones(m))

    @classmethod
    def decreasing(cls, m: int) -> "Weights":
        """mu_j = m - j + 1."""
        return cls(np.arange(m, 0, -1, dtype=float))

    @classmethod
    def parse(cls, text: str, m: int) -> "Weights":
        """Parse ``decreasing``, ``constant`` or a comma-separated list of m numbers."""
        key = text.strip().lower()
        if key == "decreasing":
            return cls.decreasing(m)
        if key in ("constant", "ones"):
            return cls.ones(m)
        try:
            values = [float(tok) for tok in key.split(",") if tok.strip()]
        except ValueError as exc:
            raise InvalidInput(f"cannot parse weights {text!r}: {exc}") from exc
        if len(values) != m:
            raise InvalidInput(f"expected {m} weights, got {len(values)} in {text!r}")
        return cls(values)

    @property
    def m(self) -> int:
        return self.mu.size

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.mu) < 0))


def _mu_squared(weights: Weights | None, m: int) -> np.ndarray:
    if weights is None:
        return np.ones(m)
    if weights.m != m:
        raise InvalidInput(f"got {weights.m} weights for {m} components")
    return weights.mu**2


# ── Components and associated bases ───────────────────────────────


def components(A: DataMatrix, Z: Loadings) -> np.ndarray:
    """Y = A Z, required to have full column rank."""
    if Z.p != A.p:
        raise InvalidInput(f"loadings have {Z.p} rows but the data matrix has {A.p} columns")
    require_full_column_rank(Z.Z, "loadings Z")
    Y = A.values @ Z.Z
    require_full_column_rank(Y, "components Y = AZ")
    return Y


def associated_basis(Y: np.ndarray, rule: str, pivot: bool = True) -> OrthoBasis:
    """Orthonormal basis of span{Y} paired column-by-column with Y.

    qr: x_j from the QR decomposition, built in pivot order when ``pivot`` is
        set, then returned in the original column order.
    up: X = U from the polar decomposition Y = U P.
    """
    if rule == "qr":
        f = qr_decompose(Y, pivot_max_norm=pivot)
        X = np.empty_like(f.Q)
        X[:, f.perm] = f.Q
        return OrthoBasis(X=X, rule="qr", perm=f.perm)
    if rule == "up":
        return OrthoBasis(X=polar_decompose(Y).U, rule="up")
    raise InvalidInput(f"unknown basis rule {rule!r}; expected one of {BASIS_RULES}")


# ── A. Subspace variance ──────────────────────────────────────────


def subspace_var(A: DataMatrix, Z: Loadings) -> float:
    """tr{Y^T Y (Z^T Z)^-1}, evaluated as ||A Q_Z||_F^2 with Q_Z an orthonormal basis of span{Z}."""
    components(A, Z)
    return float(np.sum((A.values @ orthonormal_basis(Z.Z)) ** 2))


# ── B. Normalized variances ───────────────────────────────────────


def _normalized_from_basis(A: DataMatrix, Z: Loadings, Y: np.ndarray, basis: OrthoBasis) -> float:
    X = basis.X
    M = X.T @ Y
    s = sla.svdvals(M)
    if s[-1] <= RANK_TOL * s[0]:
        raise DegenerateBasis(f"change of basis M = X^T Y is singular ({basis.rule} rule)")
    # Z = T M  <=>  M^T T^T = Z^T
    T = np.linalg.solve(M.T, Z.Z.T).T
    residual = np.linalg.norm(A.values @ T - X)
    if residual > BASIS_CHECK_TOL * np.sqrt(X.shape[1]):
        raise DegenerateBasis(f"A T does not reproduce X ({basis.rule} rule): residual {residual:.3g}")
    return float(np.sum(1.0 / np.sum(T**2, axis=0)))


def normalized_var(A: DataMatrix, Z: Loadings, rule: str, pivot: bool = True) -> float:
    """Normalized explained variance sum_j 1/||t_j||^2 of Y estimated with the QR or UP basis."""
    Y = components(A, Z)
    return _normalized_from_basis(A, Z, Y, associated_basis(Y, rule, pivot))


# ── C. Projected variances ────────────────────────────────────────


def _weighted_objective(Y: np.ndarray, X: np.ndarray, mu2: np.ndarray) -> float:
    return float(mu2 @ column_inner(Y, X) ** 2)


def projected_var(
    A: DataMatrix,
    Z: Loadings,
    rule: str,
    pivot: bool = True,
    weights: Weights | None = None,
) -> float:
    """Projected explained variance sum_j mu_j^2 <y_j, x_j>^2.

    For the QR basis this is sum r_jj^2, for the UP basis sum p_jj^2. Weights
    other than all-ones are experimental for these two rules.
    """
    Y = components(A, Z)
    basis = associated_basis(Y, rule, pivot)
    return _weighted_objective(Y, basis.X, _mu_squared(weights, Z.m))


# ── D. Optimal projected variance ─────────────────────────────────


@dataclass(frozen=True, eq=False)
class OptimalProjection:
    value: float
    basis: OrthoBasis
    iterations: int
    converged: bool
    residual: float
    trace: list[float] = field(default_factory=list)


def optimal_projected_gradient(Y: np.ndarray, X: np.ndarray, weights: Weights | None = None) -> np.ndarray:
    """Gradient in X of sum_j mu_j^2 <y_j, x_j>^2: 2 Y diag(mu^2) diag(X^T Y)."""
    mu2 = _mu_squared(weights, Y.shape[1])
    return 2.0 * Y * (mu2 * column_inner(Y, X))


def polar_ascent_step(Y: np.ndarray, X: np.ndarray, mu2: np.ndarray) -> np.ndarray:
    """X+ = polar(2 Y diag(mu^2 <y_j, x_j>)); never decreases the weighted objective."""
    G = 2.0 * Y * (mu2 * column_inner(Y, X))
    return sla.polar(G, side="right")[0]


def stationarity_residual(Y: np.ndarray, X: np.ndarray, mu2: np.ndarray) -> float:
    """Relative distance from G = X P with P symmetric PSD, G = Y diag(mu^2) diag(X^T Y)."""
    G = Y * (mu2 * column_inner(Y, X))
    P = X.T @ G
    scale = max(float(mu2.max()) * float(np.sum(Y**2)), np.finfo(float).tiny)
    residual = np.linalg.norm(G - X @ P) + np.linalg.norm(P - P.T)
    negative = min(float(np.linalg.eigvalsh(0.5 * (P + P.T))[0]), 0.0)
    return float((residual - negative) / scale)


def _check_start(start, Y: np.ndarray) -> np.ndarray:
    X0 = as_matrix(start.X if isinstance(start, OrthoBasis) else start, "starting basis")
    if X0.shape != Y.shape:
        raise InvalidInput(f"starting basis has shape {X0.shape}, expected {Y.shape}")
    if np.linalg.norm(X0.T @ X0 - np.eye(Y.shape[1])) > 1e-8:
        raise InvalidInput("starting basis is not column-orthonormal")
    return X0


def maximize_over_bases(
    Y: np.ndarray,
    mu2: np.ndarray,
    X0: np.ndarray,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> OptimalProjection:
    """Fixed-point maximization of sum mu_j^2 <y_j, x_j>^2 over orthonormal X.

    Stops once the objective gain drops below tol * (1 + f) and the
    stationarity residual is below STATIONARITY_TOL. A decrease beyond
    rounding raises InvariantViolation. The result is returned with
    ``converged=False`` when max_iter runs out.
    """
    X = X0
    f = _weighted_objective(Y, X, mu2)
    trace = [f]
    residual = stationarity_residual(Y, X, mu2)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        X_next = polar_ascent_step(Y, X, mu2)
        f_next = _weighted_objective(Y, X_next, mu2)
        if f_next < f - 1e-12 * (1.0 + abs(f)):
            raise InvariantViolation(
                f"fixed-point objective decreased at iteration {iterations}: {f:.15g} -> {f_next:.15g}"
            )
        gain = f_next - f
        X, f = X_next, f_next
        trace.append(f)
        residual = stationarity_residual(Y, X, mu2)
        logger.debug("fixed point iter %d: f = %.15g, gain = %.3g, residual = %.3g", iterations, f, gain, residual)
        if gain < tol * (1.0 + f) and residual <= STATIONARITY_TOL:
            converged = True
            break

    return OptimalProjection(
        value=f,
        basis=OrthoBasis(X=X, rule="optimal"),
        iterations=iterations,
        converged=converged,
        residual=residual,
        trace=trace,
    )


def optimal_projected_var(
    A: DataMatrix,
    Z: Loadings,
    weights: Weights | None = None,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
    start: OrthoBasis | np.ndarray | None = None,
) -> OptimalProjection:
    """Optimal projected explained variance, started from X_0 = polar(Y) unless ``start`` is given.

    Raises NonConverged (with the last iterate on ``.result``) when max_iter
    is reached before the iterate is stationary.
    """
    if tol <= 0:
        raise InvalidInput(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise InvalidInput(f"max_iter must be at least 1, got {max_iter}")
    Y = components(A, Z)
    mu2 = _mu_squared(weights, Z.m)
    X0 = polar_decompose(Y).U if start is None else _check_start(start, Y)
    result = maximize_over_bases(Y, mu2, X0, tol=tol, max_iter=max_iter)
    if not result.converged:
        raise NonConverged(
            f"optimal projected variance did not converge in {max_iter} iterations "
            f"(stationarity residual {result.residual:.3g})",
            result=result,
        )
    return result


# ── E. Report ─────────────────────────────────────────────────────


def pev(value: float, A: DataMatrix) -> float:
    """Proportion of explained variance: value / ||A||_F^2."""
    return float(value) / A.total_variance


@dataclass(frozen=True, eq=False)
class ExpVarReport:
    """The six explained variances of one (A, Z) pair and their pev."""

    subsp: float
    qr_norm: float
    up_norm: float
    qr_proj: float
    up_proj: float
    opt_proj: float
    total_var_Y: float
    pca_bound: float
    total_var: float
    pev_subsp: float = field(init=False)
    pev_qr_norm: float = field(init=False)
    pev_up_norm: float = field(init=False)
    pev_qr_proj: float = field(init=False)
    pev_up_proj: float = field(init=False)
    pev_opt_proj: float = field(init=False)

    def __post_init__(self):
        for name in DEFINITION_FIELDS.values():
            object.__setattr__(self, f"pev_{name}", getattr(self, name) / self.total_var)

    def value(self, definition: str) -> float:
        """Value by short name, e.g. ``"QRprojVar"``."""
        return getattr(self, DEFINITION_FIELDS[definition])

    def pev(self, definition: str) -> float:
        return getattr(self, f"pev_{DEFINITION_FIELDS[definition]}")

    def as_dict(self) -> dict:
        return {
            "values": {d: self.value(d) for d in DEFINITIONS},
            "pev": {d: self.pev(d) for d in DEFINITIONS},
            "total_var_Y": self.total_var_Y,
            "pca_bound": self.pca_bound,
            "total_var_A": self.total_var,
        }

    def check(self) -> "ExpVarReport":
        """Raise InvariantViolation unless every ordering of the six definitions holds."""
        slack = REPORT_SLACK * (1.0 + self.pca_bound)
        violations = []
        for d in DEFINITIONS:
            if self.value(d) > self.pca_bound + slack:
                violations.append(f"{d} = {self.value(d):.12g} exceeds the PCA bound {self.pca_bound:.12g}")
        cap = min(self.subsp, self.total_var_Y)
        for d in ("QRprojVar", "UPprojVar", "optprojVar"):
            if self.value(d) > cap + slack:
                violations.append(f"{d} = {self.value(d):.12g} exceeds min(subspVar, ||Y||^2) = {cap:.12g}")
        for d in ("QRnormVar", "UPnormVar"):
            if self.value(d) > self.subsp + slack:
                violations.append(f"{d} = {self.value(d):.12g} exceeds subspVar = {self.subsp:.12g}")
        if self.opt_proj < max(self.qr_proj, self.up_proj) - slack:
            violations.append(f"optprojVar = {self.opt_proj:.12g} is below another projected variance")
        if violations:
            raise InvariantViolation("; ".join(violations))
        return self


def report(A: DataMatrix, Z: Loadings, pivot: bool = True) -> ExpVarReport:
    """All six explained variances of Y = AZ, sharing the QR and UP decompositions."""
    Y = components(A, Z)
    pca_bound = A.svd.leading_variance(Z.m)
    ones = np.ones(Z.m)

    qr_basis = associated_basis(Y, "qr", pivot)
    up_basis = associated_basis(Y, "up")
    qr_proj = _weighted_objective(Y, qr_basis.X, ones)
    up_proj = _weighted_objective(Y, up_basis.X, ones)

    opt = maximize_over_bases(Y, ones, up_basis.X)
    if opt.converged and opt.value < qr_proj:
        # polar start reached a stationary point below the QR basis; restart there
        logger.debug("optimal projected: restarting from the QR basis (%.12g < %.12g)", opt.value, qr_proj)
        opt = maximize_over_bases(Y, ones, qr_basis.X)
    if not opt.converged:
        raise NonConverged(
            f"optimal projected variance did not converge in {opt.iterations} iterations "
            f"(stationarity residual {opt.residual:.3g})",
            result=opt,
        )

    return ExpVarReport(
        subsp=float(np.sum((A.values @ orthonormal_basis(Z.Z)) ** 2)),
        qr_norm=_normalized_from_basis(A, Z, Y, qr_basis),
        up_norm=_normalized_from_basis(A, Z, Y, up_basis),
        qr_proj=qr_proj,
        up_proj=up_proj,
        opt_proj=opt.value,
        total_var_Y=float(np.sum(Y**2)),
        pca_bound=pca_bound,
        total_var=A.total_variance,
    ).check()
