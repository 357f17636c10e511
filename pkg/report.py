"""Experiment drivers: pure computation, writers at the bottom.

A. Sampling        pev of all six definitions per (trial, lambda)
B. Curves          mean / sd of pev per (lambda, definition)
C. Dispersion      sd x 100 at one lambda
D. Ranking         epsilon-distinguishable pairwise ranking agreement
E. Writers         CSV + metadata sidecar, JSON with metadata block
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from config import (
    CURVE_COLUMNS,
    DEFAULT_EPSILONS,
    DEFAULT_LAMBDA_FRACTION,
    DEFINITIONS,
    DISPERSION_LAMBDA,
    PAIR_CAP,
)
from data_io import write_csv, write_json, write_metadata
from errors import ExpVarError, InvalidInput
from expvar import report
from simulate import SimScheme, SparsityGrid, generate_matrix, run_metadata, sparsify_loadings

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ["trial", "lambda", "definition", "pev"]


@dataclass(frozen=True, eq=False)
class CurveTable:
    """One row per (scheme, lambda, definition) with mean and sd of pev over trials."""

    frame: pd.DataFrame
    missing: int = 0
    metadata: dict = field(default_factory=dict)

    def row(self, lam: float, definition: str) -> pd.Series:
        hit = self.frame[(self.frame["lambda"] == lam) & (self.frame["definition"] == definition)]
        if hit.empty:
            raise KeyError(f"no row for lambda={lam}, definition={definition}")
        return hit.iloc[0]

    def mean_pev(self, lam: float, definition: str) -> float:
        return float(self.row(lam, definition)["mean_pev"])


@dataclass(frozen=True, eq=False)
class RankingReport:
    """Percentage of epsilon-distinguishable pairs ranked identically by two definitions."""

    epsilon: float
    agreement: np.ndarray | None
    n_pairs_considered: int
    definitions: tuple[str, ...] = DEFINITIONS
    metadata: dict = field(default_factory=dict)

    def get(self, first: str, second: str) -> float | None:
        if self.agreement is None:
            return None
        return float(self.agreement[self.definitions.index(first), self.definitions.index(second)])

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "definitions": list(self.definitions),
            "agreement": None if self.agreement is None else self.agreement.tolist(),
            "n_pairs_considered": self.n_pairs_considered,
            "metadata": self.metadata,
        }


# ── A. Sampling ───────────────────────────────────────────────────


def _trial_rows(scheme: SimScheme, grid: SparsityGrid, trial: int) -> list[tuple]:
    A = generate_matrix(scheme, trial)
    rows = []
    for lam in grid.lambdas:
        try:
            rep = report(A, sparsify_loadings(A, scheme.m, lam))
            values = [rep.pev(d) for d in DEFINITIONS]
        except ExpVarError as exc:
            # a failed cell is missing for every definition
            logger.warning("trial %d, lambda %.4g: %s: %s", trial, lam, type(exc).__name__, exc)
            values = [np.nan] * len(DEFINITIONS)
        rows.extend((trial, lam, d, v) for d, v in zip(DEFINITIONS, values))
    return rows


def collect_pev_samples(scheme: SimScheme, grid: SparsityGrid, trials: int, workers: int = 1) -> pd.DataFrame:
    """Long table (trial, lambda, definition, pev), trial-major; failed cells are NaN."""
    if trials < 1:
        raise InvalidInput(f"trials must be at least 1, got {trials}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(lambda t: _trial_rows(scheme, grid, t), range(trials)))
    else:
        per_trial = [_trial_rows(scheme, grid, t) for t in range(trials)]
    samples = pd.DataFrame([row for rows in per_trial for row in rows], columns=SAMPLE_COLUMNS)
    missing = missing_cells(samples)
    logger.info("%s: %d trials x %d lambdas sampled, %d missing cells", scheme.name, trials, len(grid), missing)
    return samples


def missing_cells(samples: pd.DataFrame) -> int:
    """Number of failed (trial, lambda) cells."""
    return int(samples["pev"].isna().sum()) // len(DEFINITIONS)


# ── B. Curves ─────────────────────────────────────────────────────


def curve_table_from_samples(samples: pd.DataFrame, scheme: SimScheme, metadata: dict | None = None) -> CurveTable:
    grouped = samples.groupby(["lambda", "definition"], sort=False)["pev"]
    frame = grouped.agg(mean_pev="mean", sd_pev="std", trials="count").reset_index()
    frame["sd_pev"] = frame["sd_pev"].where(frame["trials"] > 1, 0.0)
    frame.insert(0, "scheme", scheme.name)
    frame = frame[CURVE_COLUMNS]

    means = frame["mean_pev"].dropna()
    if ((means < -1e-12) | (means > 1 + 1e-12)).any():
        raise InvalidInput("mean pev outside [0, 1]; the generated data is inconsistent")
    missing = missing_cells(samples)
    meta = dict(metadata or {})
    meta["missing_cells"] = missing
    return CurveTable(frame=frame, missing=missing, metadata=meta)


def run_pev_curves(scheme: SimScheme, grid: SparsityGrid, trials: int, workers: int = 1) -> CurveTable:
    """Mean and sd of pev over ``trials`` generated matrices, per lambda and definition."""
    samples = collect_pev_samples(scheme, grid, trials, workers)
    return curve_table_from_samples(samples, scheme, run_metadata(scheme, grid, trials))


# ── C. Dispersion ─────────────────────────────────────────────────


def dispersion_table(samples: pd.DataFrame, lam: float = DISPERSION_LAMBDA) -> pd.DataFrame:
    """Standard deviation of pev x 100 per definition at the grid point closest to ``lam``."""
    lambdas = np.sort(samples["lambda"].unique())
    nearest = float(lambdas[np.argmin(np.abs(lambdas - lam))])
    at = samples[samples["lambda"] == nearest]
    grouped = at.groupby("definition", sort=False)["pev"]
    table = grouped.agg(sd="std", trials="count").reindex(list(DEFINITIONS)).rename_axis("definition").reset_index()
    table["sd_pev_x100"] = 100.0 * table["sd"].where(table["trials"] > 1, 0.0)
    table.insert(1, "lambda", nearest)
    return table[["definition", "lambda", "sd_pev_x100", "trials"]]


# ── D. Ranking ────────────────────────────────────────────────────


def _pev_matrix(samples: pd.DataFrame) -> np.ndarray:
    """One row per complete (trial, lambda) cell, columns in DEFINITIONS order."""
    wide = samples.pivot(index=["trial", "lambda"], columns="definition", values="pev")
    return wide[list(DEFINITIONS)].dropna().to_numpy()


def _accumulate(diffs: np.ndarray, epsilons: tuple[float, ...], agree: np.ndarray, counts: np.ndarray) -> None:
    """Add the pairs whose pev differences are ``diffs`` (k x 6) to the running tallies."""
    signs = np.sign(diffs).astype(int) + 1
    onehot = np.zeros(signs.shape + (3,))
    np.put_along_axis(onehot, signs[..., None], 1.0, axis=-1)
    smallest = np.abs(diffs).min(axis=1)
    for e, eps in enumerate(epsilons):
        keep = smallest >= eps
        if not keep.any():
            continue
        kept = onehot[keep]
        agree[e] += np.einsum("kas,kbs->ab", kept, kept)
        counts[e] += int(keep.sum())


def ranking_from_samples(
    samples: pd.DataFrame,
    epsilons=DEFAULT_EPSILONS,
    pair_cap: int = PAIR_CAP,
    subsample_pairs: int | None = None,
    seed: int = 0,
    metadata: dict | None = None,
) -> list[RankingReport]:
    """Pairwise ranking agreement over all (or ``subsample_pairs`` random) pairs of cells.

    A pair is kept for a given epsilon when its pev differs by at least
    epsilon under all six definitions. Two definitions agree on a pair when
    the signs of their differences match (a tie only agrees with a tie).
    """
    epsilons = tuple(float(e) for e in epsilons)
    P = _pev_matrix(samples)
    T = P.shape[0]
    n_pairs = T * (T - 1) // 2
    k = len(DEFINITIONS)
    agree = np.zeros((len(epsilons), k, k))
    counts = np.zeros(len(epsilons), dtype=np.int64)

    if subsample_pairs is not None:
        if subsample_pairs > pair_cap:
            raise InvalidInput(f"subsample_pairs = {subsample_pairs} exceeds pair_cap = {pair_cap}")
        if T < 2:
            raise InvalidInput("need at least two complete cells to form pairs")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**32 - 1,)))
        i = rng.integers(0, T, subsample_pairs)
        j = rng.integers(0, T - 1, subsample_pairs)
        j = j + (j >= i)
        for start in range(0, subsample_pairs, 1_000_000):
            sl = slice(start, start + 1_000_000)
            _accumulate(P[j[sl]] - P[i[sl]], epsilons, agree, counts)
        logger.info("ranking: %d sampled pairs out of %d", subsample_pairs, n_pairs)
    else:
        if n_pairs > pair_cap:
            raise InvalidInput(
                f"{T} cells give {n_pairs} pairs, above pair_cap = {pair_cap}; "
                f"set subsample_pairs (e.g. {pair_cap}) or reduce trials / the lambda grid"
            )
        for row in range(T - 1):
            _accumulate(P[row + 1 :] - P[row], epsilons, agree, counts)
        logger.info("ranking: %d pairs from %d cells", n_pairs, T)

    meta = dict(metadata or {})
    meta["missing_cells"] = missing_cells(samples)
    reports = []
    for e, eps in enumerate(epsilons):
        n = int(counts[e])
        agreement = 100.0 * agree[e] / n if n else None
        reports.append(RankingReport(epsilon=eps, agreement=agreement, n_pairs_considered=n, metadata=meta))
    return reports


def run_ranking(
    scheme: SimScheme,
    grid: SparsityGrid,
    trials: int,
    epsilons=DEFAULT_EPSILONS,
    pair_cap: int = PAIR_CAP,
    lambda_fraction: float = DEFAULT_LAMBDA_FRACTION,
    subsample_pairs: int | None = None,
    workers: int = 1,
) -> list[RankingReport]:
    """Ranking agreement on the smallest ``lambda_fraction`` of the grid, one report per epsilon."""
    head = grid.head(lambda_fraction)
    cells = trials * len(head)
    if subsample_pairs is None and cells * (cells - 1) // 2 > pair_cap:
        raise InvalidInput(
            f"{cells} cells give {cells * (cells - 1) // 2} pairs, above pair_cap = {pair_cap}; "
            f"set subsample_pairs (e.g. {pair_cap}) or reduce trials / the lambda grid"
        )
    samples = collect_pev_samples(scheme, head, trials, workers)
    return ranking_from_samples(
        samples,
        epsilons,
        pair_cap=pair_cap,
        subsample_pairs=subsample_pairs,
        seed=scheme.seed,
        metadata=run_metadata(scheme, head, trials),
    )


# ── E. Writers ────────────────────────────────────────────────────


def write_curve_table(table: CurveTable, path: str | Path | None = None) -> str:
    """CSV with header scheme,lambda,definition,mean_pev,sd_pev,trials; metadata to ``<path>.meta.json``."""
    text = write_csv(table.frame, path)
    if path is not None:
        write_metadata(table.metadata, path)
    return text


def write_ranking(reports: list[RankingReport], path: str | Path | None = None) -> str:
    return write_json([r.as_dict() for r in reports], path)
