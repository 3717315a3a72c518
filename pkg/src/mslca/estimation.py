"""Empirical covariance blocks and the sample version of the canonical analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import DEFAULT_COND_FLOOR, BlockStructure, sym_power
from .exceptions import InsufficientSampleError, NearSingularError
from .population import (
    DEFAULT_GROUP_TOL,
    CovarianceModel,
    MslcaSolution,
    build_t,
    solve_mslca,
)


@dataclass(frozen=True)
class Dataset:
    """An i.i.d. sample of the stacked vector, one observation per row.

    Rows conform to ``structure`` (q columns); non-finite entries are a hard
    ingestion error. Operations that need a covariance additionally require
    n >= 2 and raise InsufficientSampleError below that.
    """

    structure: BlockStructure
    rows: np.ndarray

    def __init__(self, structure: BlockStructure, rows: np.ndarray):
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != structure.total_dim:
            raise ValueError(
                f"rows must have shape (n, {structure.total_dim}), got {rows.shape}"
            )
        if rows.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        if not np.isfinite(rows).all():
            bad = np.argwhere(~np.isfinite(rows))[0]
            raise ValueError(f"non-finite entry at row {bad[0]}, column {bad[1]}")
        rows = rows.copy()
        rows.flags.writeable = False
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def block_columns(self, k: int) -> np.ndarray:
        return self.rows[:, self.structure.block_slice(k)]


@dataclass(frozen=True)
class MslcaFit:
    """Empirical analysis of one dataset.

    ``statistic_ready`` records that the estimated operator has exactly zero
    diagonal blocks, which the non-correlation statistic relies on.
    """

    n: int
    means: np.ndarray
    vhat: CovarianceModel
    that: np.ndarray
    solution: MslcaSolution
    statistic_ready: bool

    @property
    def structure(self) -> BlockStructure:
        return self.vhat.structure


def _require_rows(data: Dataset, minimum: int = 2) -> None:
    if data.n < minimum:
        raise InsufficientSampleError(f"need at least {minimum} rows, got {data.n}")


def center(data: Dataset) -> tuple[Dataset, np.ndarray]:
    """Subtract column means; returns the centered data and the means."""
    _require_rows(data)
    means = data.rows.mean(axis=0)
    return Dataset(data.structure, data.rows - means), means


def empirical_cov(data: Dataset) -> CovarianceModel:
    """Covariance with divisor n (not n-1), assembled over all blocks at once."""
    _require_rows(data)
    centered = data.rows - data.rows.mean(axis=0)
    vhat = centered.T @ centered / data.n
    return CovarianceModel(data.structure, vhat)


def fit_mslca(
    data: Dataset,
    group_tol: float = DEFAULT_GROUP_TOL,
    cond_floor: float = DEFAULT_COND_FLOOR,
) -> MslcaFit:
    """Run the population pipeline on the empirical covariance.

    Deterministic given the data. Raises NearSingularError naming the block
    whose sample covariance is numerically singular (collinear columns), and
    InsufficientSampleError for n < 2.
    """
    _require_rows(data)
    means = data.rows.mean(axis=0)
    vhat = empirical_cov(data)
    that = build_t(vhat, cond_floor)
    solution = solve_mslca(vhat, group_tol, cond_floor)
    return MslcaFit(
        n=data.n,
        means=means,
        vhat=vhat,
        that=that,
        solution=solution,
        statistic_ready=True,
    )


def align_sign(bhat: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Flip ``bhat`` so its inner product with the reference ``b`` is nonnegative.

    sign(0) counts as +1, so an orthogonal estimate is returned unchanged.
    """
    bhat = np.asarray(bhat, dtype=float)
    b = np.asarray(b, dtype=float)
    if bhat.shape != b.shape:
        raise ValueError(f"shape mismatch: {bhat.shape} vs {b.shape}")
    return -bhat if float(bhat @ b) < 0.0 else bhat.copy()


def whiten(data: Dataset, cond_floor: float = DEFAULT_COND_FLOOR) -> Dataset:
    """Center and transform each block by its inverse covariance square root.

    The output's empirical within-block covariances are the identity, which
    is the standing normalization of the asymptotic theory. Uses the
    symmetric inverse square root so the transform commutes with orthogonal
    changes of block basis.
    """
    _require_rows(data)
    vhat = empirical_cov(data)
    centered = data.rows - data.rows.mean(axis=0)
    out = np.empty_like(centered)
    for k in range(data.structure.n_blocks):
        sl = data.structure.block_slice(k)
        try:
            root = sym_power(vhat.v[sl, sl], -0.5, cond_floor)
        except NearSingularError as err:
            raise NearSingularError(err.lambda_min, err.lambda_max, block=k) from None
        out[:, sl] = centered[:, sl] @ root
    return Dataset(data.structure, out)
