"""Seeded simulation inputs: data matrices with a controlled spectrum and
correlated sparse loadings indexed by a sparsity parameter lambda in [0, 1].

Every random draw comes from trial_rng(seed, trial, stream), so a trial can be
regenerated on its own and parallel runs match serial ones.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from config import (
    CODE_VERSION,
    DEFAULT_EPSILONS,
    DEFAULT_GRID_POINTS,
    DEFAULT_LAMBDA_FRACTION,
    DEFAULT_M,
    DEFAULT_N,
    DEFAULT_P,
    DEFAULT_SEED,
    DEFAULT_TAIL_DECAY,
    DEFAULT_TRIALS,
    PAIR_CAP,
    REPAIR_BISECTION_STEPS,
    REPAIR_MAX_COND,
    RNG_NAME,
    SCHEME_NAMES,
    SCHEME_SPECTRA,
    STREAM_LEFT,
    STREAM_RIGHT,
)
from errors import InvalidInput, RankDeficient
from expvar import Loadings
from linalg import DataMatrix, random_orthonormal

logger = logging.getLogger(__name__)


# ── Schemes and grids ─────────────────────────────────────────────


@dataclass(frozen=True)
class SimScheme:
    """Leading spectrum sigma_head followed by a geometric tail.

    The tail starts at tail_decay * sigma_m and shrinks by tail_decay per
    value, up to min(n, p) singular values in total.
    """

    name: str
    n: int = DEFAULT_N
    p: int = DEFAULT_P
    m: int = DEFAULT_M
    sigma_head: tuple[float, ...] = SCHEME_SPECTRA["close_eigenvalues"]
    tail_decay: float = DEFAULT_TAIL_DECAY
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "sigma_head", tuple(float(s) for s in self.sigma_head))
        if self.name not in SCHEME_NAMES:
            raise InvalidInput(f"unknown scheme {self.name!r}; expected one of {SCHEME_NAMES}")
        if min(self.n, self.p, self.m) < 1:
            raise InvalidInput(f"dimensions must be positive, got n={self.n}, p={self.p}, m={self.m}")
        if self.p <= self.m or self.n <= self.m:
            raise InvalidInput(f"need n > m and p > m, got n={self.n}, p={self.p}, m={self.m}")
        if len(self.sigma_head) != self.m:
            raise InvalidInput(f"sigma_head has {len(self.sigma_head)} values, expected m = {self.m}")
        head = np.asarray(self.sigma_head)
        if np.any(head <= 0) or np.any(np.diff(head) > 0):
            raise InvalidInput(f"sigma_head must be positive and non-increasing, got {self.sigma_head}")
        if not 0.0 < self.tail_decay < 1.0:
            raise InvalidInput(f"tail_decay must lie in (0, 1), got {self.tail_decay}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInput(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @classmethod
    def close(cls, seed: int = DEFAULT_SEED) -> "SimScheme":
        return cls("close_eigenvalues", sigma_head=SCHEME_SPECTRA["close_eigenvalues"], seed=seed)

    @classmethod
    def different(cls, seed: int = DEFAULT_SEED) -> "SimScheme":
        return cls("different_eigenvalues", sigma_head=SCHEME_SPECTRA["different_eigenvalues"], seed=seed)

    @property
    def rank(self) -> int:
        return min(self.n, self.p)

    def spectrum(self) -> np.ndarray:
        """All min(n, p) singular values of the generated matrices."""
        tail = self.sigma_head[-1] * self.tail_decay ** np.arange(1, self.rank - self.m + 1)
        return np.concatenate([np.asarray(self.sigma_head), tail])


@dataclass(frozen=True)
class SparsityGrid:
    lambdas: tuple[float, ...]

    def __post_init__(self):
        lambdas = tuple(float(x) for x in self.lambdas)
        if not lambdas:
            raise InvalidInput("sparsity grid is empty")
        if lambdas[0] != 0.0:
            raise InvalidInput(f"sparsity grid must start at 0, got {lambdas[0]}")
        if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
            raise InvalidInput("sparsity grid must be strictly increasing")
        if lambdas[-1] > 1.0:
            raise InvalidInput(f"sparsity grid must lie in [0, 1], got {lambdas[-1]}")
        object.__setattr__(self, "lambdas", lambdas)

    @classmethod
    def uniform(cls, points: int = DEFAULT_GRID_POINTS) -> "SparsityGrid":
        if points < 1:
            raise InvalidInput(f"grid needs at least one point, got {points}")
        if points == 1:
            return cls((0.0,))
        return cls(tuple(np.linspace(0.0, 1.0, points)))

    def __len__(self) -> int:
        return len(self.lambdas)

    def head(self, fraction: float) -> "SparsityGrid":
        """The smallest values of the grid, floor(fraction * size) of them (at least one)."""
        if not 0.0 < fraction <= 1.0:
            raise InvalidInput(f"lambda_fraction must lie in (0, 1], got {fraction}")
        return SparsityGrid(self.lambdas[: max(1, int(fraction * len(self)))])


# ── Random streams and matrices ───────────────────────────────────


def trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    """Independent PCG64 stream for one (trial, stream) pair."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial, stream))))


def generate_matrix(scheme: SimScheme, trial: int) -> DataMatrix:
    """A = U diag(sigma) V^T with Haar-distributed U and V.

    When n > p the columns of U are orthogonal to the constant vector, so A
    is column-centered.
    """
    if trial < 0:
        raise InvalidInput(f"trial index must be non-negative, got {trial}")
    sigma = scheme.spectrum()
    k = sigma.size
    U = random_orthonormal(scheme.n, k, trial_rng(scheme.seed, trial, STREAM_LEFT), centered=scheme.n > k)
    V = random_orthonormal(scheme.p, k, trial_rng(scheme.seed, trial, STREAM_RIGHT))
    return DataMatrix((U * sigma) @ V.T)


# ── Sparse loadings surrogate ─────────────────────────────────────


def soft_threshold(v: np.ndarray, level: float) -> np.ndarray:
    """Soft-threshold v at ``level``; at or above max|v| keep sign(v) on the max-magnitude entries."""
    top = np.abs(v).max()
    if level >= top:
        return np.sign(v) * (np.abs(v) == top)
    return np.sign(v) * np.maximum(np.abs(v) - level, 0.0)


def _well_conditioned(M: np.ndarray) -> bool:
    s = sla.svdvals(M)
    return s[-1] > 0.0 and s[0] / s[-1] <= REPAIR_MAX_COND


def _acceptable(A: DataMatrix, Z: np.ndarray) -> bool:
    return _well_conditioned(Z) and _well_conditioned(A.values @ Z)


def _thresholded(V: np.ndarray, levels: list[float]) -> np.ndarray:
    columns = []
    for j, t in enumerate(levels):
        c = soft_threshold(V[:, j], t)
        columns.append(c / np.linalg.norm(c))
    return np.column_stack(columns)


def _largest_fitting(fits, hi: float) -> float:
    """Largest x in [0, hi] with fits(x), by bisection; fits(0) must hold."""
    lo = 0.0
    for _ in range(REPAIR_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


def sparsify_loadings(A: DataMatrix, m: int, lam: float) -> Loadings:
    """Sparse, correlated unit-norm loadings from V_m.

    Column j is v_j soft-thresholded at lam * max|v_j| and renormalized. When
    the result would leave Z or AZ rank deficient (condition number above
    REPAIR_MAX_COND) the level for that column is lowered by bisection to the
    largest acceptable one. If column j does not fit even unthresholded, the
    levels of columns 1..j are scaled down together by a shared factor. Factor
    0 gives V_1..V_j. lam = 0 returns V_m exactly.
    """
    if not 0.0 <= lam <= 1.0:
        raise InvalidInput(f"lambda must lie in [0, 1], got {lam}")
    _, _, V_m = A.svd.leading(m)
    if lam == 0.0:
        return Loadings(np.array(V_m))
    if not _acceptable(A, V_m):
        raise RankDeficient(f"A V_m has condition number above {REPAIR_MAX_COND:g}; no sparse loadings keep full rank")

    levels: list[float] = []
    for j in range(m):
        target = lam * np.abs(V_m[:, j]).max()

        def fits(t: float) -> bool:
            return _acceptable(A, _thresholded(V_m, [*levels, t]))

        if fits(target):
            levels.append(target)
        elif fits(0.0):
            level = _largest_fitting(fits, target)
            logger.info("sparsify_loadings: rank repair on column %d, level %.6g -> %.6g", j + 1, target, level)
            levels.append(level)
        else:
            wanted = [*levels, target]
            scale = _largest_fitting(lambda s: _acceptable(A, _thresholded(V_m, [s * t for t in wanted])), 1.0)
            logger.info("sparsify_loadings: joint rank repair on columns 1..%d, levels scaled by %.6g", j + 1, scale)
            levels = [scale * t for t in wanted]

    return Loadings(_thresholded(V_m, levels))


# ── Experiment configuration ──────────────────────────────────────

_CONFIG_KEYS = {
    "name",
    "n",
    "p",
    "m",
    "sigma_head",
    "tail_decay",
    "seed",
    "lambdas",
    "trials",
    "epsilons",
    "pair_cap",
    "lambda_fraction",
    "workers",
    "subsample_pairs",
}


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: SimScheme
    grid: SparsityGrid = field(default_factory=SparsityGrid.uniform)
    trials: int = DEFAULT_TRIALS
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    pair_cap: int = PAIR_CAP
    lambda_fraction: float = DEFAULT_LAMBDA_FRACTION
    workers: int = 1
    subsample_pairs: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInput(f"trials must be at least 1, got {self.trials}")
        if any(e < 0 or not math.isfinite(e) for e in self.epsilons):
            raise InvalidInput(f"epsilons must be finite and non-negative, got {self.epsilons}")
        if self.pair_cap < 1 or self.workers < 1:
            raise InvalidInput("pair_cap and workers must be positive")
        if self.subsample_pairs is not None and self.subsample_pairs < 1:
            raise InvalidInput(f"subsample_pairs must be positive, got {self.subsample_pairs}")
        if not 0.0 < self.lambda_fraction <= 1.0:
            raise InvalidInput(f"lambda_fraction must lie in (0, 1], got {self.lambda_fraction}")
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))

    def metadata(self) -> dict:
        return run_metadata(self.scheme, self.grid, self.trials)


def run_metadata(scheme: SimScheme, grid: SparsityGrid, trials: int) -> dict:
    """Everything needed to regenerate a run's outputs (no timestamps)."""
    return {
        "seed": scheme.seed,
        "scheme": asdict(scheme),
        "code_version": CODE_VERSION,
        "rng": RNG_NAME,
        "trials": trials,
        "grid_points": len(grid),
    }


def experiment_config_from_dict(raw: dict, seed: int | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed JSON; ``seed`` overrides the file's seed."""
    if not isinstance(raw, dict):
        raise InvalidInput("experiment config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise InvalidInput(f"unknown config key(s): {', '.join(sorted(unknown))}")

    name = raw.get("name", "close_eigenvalues")
    if name not in SCHEME_NAMES:
        raise InvalidInput(f"unknown scheme {name!r}; expected one of {SCHEME_NAMES}")
    if "sigma_head" in raw:
        head = raw["sigma_head"]
    elif name in SCHEME_SPECTRA:
        head = SCHEME_SPECTRA[name]
    else:
        raise InvalidInput("a custom scheme needs sigma_head")

    try:
        scheme = SimScheme(
            name=name,
            n=int(raw.get("n", DEFAULT_N)),
            p=int(raw.get("p", DEFAULT_P)),
            m=int(raw.get("m", len(head))),
            sigma_head=tuple(head),
            tail_decay=float(raw.get("tail_decay", DEFAULT_TAIL_DECAY)),
            seed=int(seed if seed is not None else raw.get("seed", DEFAULT_SEED)),
        )
        lambdas = raw.get("lambdas", DEFAULT_GRID_POINTS)
        grid = SparsityGrid.uniform(lambdas) if isinstance(lambdas, int) else SparsityGrid(tuple(lambdas))
        subsample = raw.get("subsample_pairs")
        return ExperimentConfig(
            scheme=scheme,
            grid=grid,
            trials=int(raw.get("trials", DEFAULT_TRIALS)),
            epsilons=tuple(raw.get("epsilons", DEFAULT_EPSILONS)),
            pair_cap=int(raw.get("pair_cap", PAIR_CAP)),
            lambda_fraction=float(raw.get("lambda_fraction", DEFAULT_LAMBDA_FRACTION)),
            workers=int(raw.get("workers", 1)),
            subsample_pairs=None if subsample is None else int(subsample),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise InvalidInput(f"invalid experiment config: {exc}") from exc


def load_experiment_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    """Read an experiment config from a JSON file."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidInput(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"config {path} is not valid JSON: {exc}") from exc
    logger.info("loaded experiment config from %s", path)
    return experiment_config_from_dict(raw, seed=seed)
