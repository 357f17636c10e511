"""Independent reference computations shared by the tests."""

import numpy as np
from scipy.optimize import minimize_scalar

from linalg import DataMatrix, random_orthonormal


def gaussian_matrix(seed: int, n: int, p: int) -> DataMatrix:
    return DataMatrix(np.random.default_rng(seed).standard_normal((n, p)))


def matrix_with_spectrum(seed: int, n: int, p: int, sigma) -> DataMatrix:
    rng = np.random.default_rng(seed)
    sigma = np.asarray(sigma, dtype=float)
    U = random_orthonormal(n, sigma.size, rng)
    V = random_orthonormal(p, sigma.size, rng)
    return DataMatrix((U * sigma) @ V.T)


def unit_columns(rng: np.random.Generator, p: int, m: int) -> np.ndarray:
    Z = rng.standard_normal((p, m))
    return Z / np.linalg.norm(Z, axis=0)


def sigma_orthogonal_loadings(V_m: np.ndarray, sigma: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Loadings spanning V_m whose columns are diag(sigma)^-2 orthogonal: z~_k = Sigma w_k / ||Sigma w_k||."""
    Zt = sigma[:, None] * W
    Zt = Zt / np.linalg.norm(Zt, axis=0)
    return V_m @ Zt


def rotation_oracle(Y: np.ndarray, mu2=None, grid: int = 100_000) -> float:
    """max over orthonormal bases X of span{Y} of sum mu_j^2 <y_j, x_j>^2, for m = 2.

    Every such basis is X = Q [r(theta), +-r(theta + pi/2)]; the sign does not
    change the squared projections, and theta in [0, pi) covers all values.
    """
    assert Y.shape[1] == 2
    mu2 = np.ones(2) if mu2 is None else np.asarray(mu2, dtype=float)
    Q, _ = np.linalg.qr(Y)
    C = Q.T @ Y

    def f(theta):
        c, s = np.cos(theta), np.sin(theta)
        return mu2[0] * (C[0, 0] * c + C[1, 0] * s) ** 2 + mu2[1] * (-C[0, 1] * s + C[1, 1] * c) ** 2

    thetas = np.linspace(0.0, np.pi, grid, endpoint=False)
    values = f(thetas)
    k = int(np.argmax(values))
    h = np.pi / grid
    refined = minimize_scalar(lambda t: -f(t), bounds=(thetas[k] - h, thetas[k] + h), method="bounded", options={"xatol": 1e-14})
    return float(max(values[k], -refined.fun))


def finite_difference_gradient(f, X: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of a matrix."""
    grad = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        grad[idx] = (f(X + E) - f(X - E)) / (2.0 * h)
    return grad


def random_stiefel(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    return Q
