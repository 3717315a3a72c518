"""Limiting-distribution machinery for the empirical canonical analysis.

Everything here lives under the standing normalization of the asymptotic
theory: each block has identity covariance (data whitened, models
"whitened-compatible") and finite fourth moments.

Provided pieces:

* ``z_operator`` -- the random operator whose covariance is the limit law of
  sqrt(n) times the estimation error of the canonical operator.
* ``MomentAccumulator`` / ``build_gamma`` -- empirical fourth moments of the
  whitened coordinates and the d x d covariance of the stacked off-diagonal
  block entries (the limit covariance of the non-correlation statistic's
  Gaussian vector).
* ``c_coefficient`` / ``c_tensor`` / ``c_tensor_gaussian`` -- second moments
  of the limit operator expressed in the eigenbasis, estimated from data or
  evaluated in closed form for Gaussian populations.
* ``sigma_matrix`` -- asymptotic covariance of the canonical coefficients
  (simple spectra only).
* ``EigenChiSquareDist`` / ``quad_form_pvalue`` -- the law of a weighted sum
  of independent one-degree chi-squares, with seeded Monte Carlo tails.
* ``elliptical_scale_plugin`` -- kurtosis-scale estimate for the elliptical
  chi-square route of the test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .blocks import BlockStructure
from .estimation import Dataset
from .exceptions import (
    InsufficientSampleError,
    NegativeWeightError,
    RepeatedEigenvaluesError,
)
from .population import CovarianceModel, MslcaSolution

WEIGHT_CLAMP_FLOOR = -1e-8
DEFAULT_MC_DRAWS = 200_000
WHITENED_ATOL = 1e-6


def _require_whitened_model(model: CovarianceModel, atol: float = 1e-8) -> None:
    for k in range(model.structure.n_blocks):
        block = model.diagonal_block(k)
        gap = np.abs(block - np.eye(block.shape[0])).max()
        if gap > atol:
            raise ValueError(
                f"model is not whitened-compatible: block {k} deviates from the "
                f"identity by {gap:.3e}"
            )


def _require_whitened_data(rows: np.ndarray, structure: BlockStructure) -> None:
    n = rows.shape[0]
    means = rows.mean(axis=0)
    scale = 1.0 + np.abs(rows).max()
    if np.abs(means).max() > WHITENED_ATOL * scale:
        raise ValueError("data is not centered; whiten it first")
    centered = rows - means
    for k in range(structure.n_blocks):
        sl = structure.block_slice(k)
        cov = centered[:, sl].T @ centered[:, sl] / n
        if np.abs(cov - np.eye(structure.dims[k])).max() > WHITENED_ATOL:
            raise ValueError(f"block {k} of the data is not whitened; whiten it first")


def z_operator(x: np.ndarray, model: CovarianceModel) -> np.ndarray:
    """Evaluate the limit-law random operator at one observation.

    For a whitened-compatible model, block (k, l), k != l, is
    x_k x_l^T - (x_k x_k^T V_kl + V_kl x_l x_l^T) / 2 and diagonal blocks
    vanish; the result is symmetric. Averaged over draws from the model its
    expectation is zero.
    """
    _require_whitened_model(model)
    structure = model.structure
    x = np.asarray(x, dtype=float)
    parts = structure.split(x)
    z = np.zeros((structure.total_dim, structure.total_dim))
    for k, l in structure.lower_pairs():
        vkl = model.block(k, l)
        block = (
            np.outer(parts[k], parts[l])
            - 0.5 * (np.outer(parts[k], parts[k]) @ vkl + vkl @ np.outer(parts[l], parts[l]))
        )
        z[structure.block_slice(k), structure.block_slice(l)] = block
        z[structure.block_slice(l), structure.block_slice(k)] = block.T
    return z


@dataclass(frozen=True)
class MomentAccumulator:
    """Fourth-moment evaluator over a centered, whitened sample.

    All moments are computed from the same sample; coordinates are global
    column indices of the stacked vector.
    """

    structure: BlockStructure
    data: np.ndarray

    @classmethod
    def from_whitened(cls, dataset: Dataset) -> "MomentAccumulator":
        _require_whitened_data(dataset.rows, dataset.structure)
        return cls(structure=dataset.structure, data=dataset.rows)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @cached_property
    def second_moments(self) -> np.ndarray:
        return self.data.T @ self.data / self.n

    def fourth_moment(self, a: int, b: int, c: int, d: int) -> float:
        """Sample mean of the product of four whitened coordinates."""
        q = self.structure.total_dim
        for idx in (a, b, c, d):
            if not 0 <= idx < q:
                raise IndexError(f"coordinate {idx} out of range [0, {q})")
        cols = self.data
        return float(np.mean(cols[:, a] * cols[:, b] * cols[:, c] * cols[:, d]))


def gamma_index_map(structure: BlockStructure) -> list[tuple[int, int, int, int]]:
    """Coordinate order of the stacked off-diagonal block entries.

    Pairs (k, l), l < k, run in the order (1,0), (2,0), (2,1), ...; within a
    pair, entries (i, j) run with the row index i fastest.
    """
    index_map = []
    for k, l in structure.lower_pairs():
        for j in range(structure.dims[l]):
            for i in range(structure.dims[k]):
                index_map.append((k, l, i, j))
    return index_map


@dataclass(frozen=True)
class GammaMatrix:
    """Fourth-moment covariance of the stacked off-diagonal block entries."""

    structure: BlockStructure
    matrix: np.ndarray
    index_map: list[tuple[int, int, int, int]] = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self, clamp_floor: float = WEIGHT_CLAMP_FLOOR) -> np.ndarray:
        """Nonincreasing eigenvalues with round-off negatives clamped to zero.

        Sample fourth-moment matrices can be marginally indefinite
        numerically; values in [clamp_floor, 0) become 0 and anything more
        negative raises NegativeWeightError.
        """
        values = np.linalg.eigvalsh(self.matrix)[::-1]
        if values[-1] < clamp_floor:
            raise NegativeWeightError(
                f"eigenvalue {values[-1]:.3e} below the clamp floor {clamp_floor:.1e}"
            )
        return np.clip(values, 0.0, None)


def build_gamma(acc: MomentAccumulator) -> GammaMatrix:
    """Assemble the d x d matrix of fourth moments of paired coordinates.

    Entry [(k,l,i,j), (r,s,p,t)] is the sample mean of
    x_{k,i} x_{l,j} x_{r,p} x_{s,t}; as a Gram matrix of pair products it is
    symmetric positive semidefinite by construction.
    """
    structure = acc.structure
    index_map = gamma_index_map(structure)
    columns = []
    for k, l in structure.lower_pairs():
        xk = acc.data[:, structure.block_slice(k)]
        xl = acc.data[:, structure.block_slice(l)]
        pair = xk[:, :, None] * xl[:, None, :]  # (n, p_k, p_l), i fastest when F-flattened
        columns.append(pair.reshape(acc.n, -1, order="F"))
    stacked = np.concatenate(columns, axis=1)
    matrix = stacked.T @ stacked / acc.n
    matrix = 0.5 * (matrix + matrix.T)
    return GammaMatrix(structure=structure, matrix=matrix, index_map=index_map)


def _linear_factors(
    acc: MomentAccumulator, solution: MslcaSolution, model: CovarianceModel
) -> tuple[list[np.ndarray], dict[tuple[int, int], np.ndarray]]:
    """Per-block eigenvector scores and their cross-covariance-weighted versions.

    ``scores[k][:, a]`` is <x_k, block k of beta_a> per observation;
    ``weighted[(k, l)][:, b]`` is <x_k, V_kl (block l of beta_b)>.
    """
    structure = acc.structure
    scores = []
    for k in range(structure.n_blocks):
        sl = structure.block_slice(k)
        scores.append(acc.data[:, sl] @ solution.beta[sl, :])
    weighted = {}
    for k, l in structure.ordered_pairs():
        sl_k = structure.block_slice(k)
        sl_l = structure.block_slice(l)
        weighted[(k, l)] = acc.data[:, sl_k] @ (model.block(k, l) @ solution.beta[sl_l, :])
    return scores, weighted


def c_coefficient(
    acc: MomentAccumulator,
    solution: MslcaSolution,
    model: CovarianceModel,
    m: int,
    r: int,
    s: int,
    t: int,
) -> float:
    """Plug-in second moment of the limit operator in the eigenbasis.

    Sums, over all ordered off-diagonal block pairs (k, l) and (j, u), four
    quarter-weighted moments mixing eigenvector scores with their
    cross-covariance-weighted versions, minus four half-weighted mixed
    moments, plus one plain fourth moment of scores.
    """
    _require_whitened_model(model)
    q = acc.structure.total_dim
    for idx in (m, r, s, t):
        if not 0 <= idx < q:
            raise IndexError(f"eigenbasis index {idx} out of range [0, {q})")
    scores, weighted = _linear_factors(acc, solution, model)
    pairs = acc.structure.ordered_pairs()

    def gamma_term(a, b, c, d, k, l, j, u):
        return 0.25 * float(
            np.mean(scores[k][:, a] * weighted[(k, l)][:, b] * scores[j][:, c] * weighted[(j, u)][:, d])
        )

    def theta_term(a, b, c, d, k, l, j, u):
        return 0.5 * float(
            np.mean(scores[k][:, a] * weighted[(k, l)][:, b] * scores[j][:, c] * scores[u][:, d])
        )

    def lambda_term(a, b, c, d, k, l, j, u):
        return float(
            np.mean(scores[k][:, a] * scores[l][:, b] * scores[j][:, c] * scores[u][:, d])
        )

    total = 0.0
    for k, l in pairs:
        for j, u in pairs:
            total += (
                gamma_term(m, r, s, t, k, l, j, u)
                + gamma_term(m, r, t, s, k, l, j, u)
                + gamma_term(r, m, s, t, k, l, j, u)
                + gamma_term(r, m, t, s, k, l, j, u)
                - theta_term(m, r, s, t, k, l, j, u)
                - theta_term(r, m, s, t, k, l, j, u)
                - theta_term(s, t, m, r, k, l, j, u)
                - theta_term(t, s, m, r, k, l, j, u)
                + lambda_term(m, r, s, t, k, l, j, u)
            )
    return total


def c_tensor(
    acc: MomentAccumulator, solution: MslcaSolution, model: CovarianceModel
) -> np.ndarray:
    """All plug-in coefficients at once; [m, r, s, t] equals ``c_coefficient``.

    Vectorized over observations with einsum; the per-index version is kept
    as the readable reference and the two are cross-checked in the tests.
    """
    _require_whitened_model(model)
    scores, weighted = _linear_factors(acc, solution, model)
    pairs = acc.structure.ordered_pairs()
    q = acc.structure.total_dim
    n = acc.n

    gamma4 = np.zeros((q, q, q, q))
    theta4 = np.zeros((q, q, q, q))
    lambda4 = np.zeros((q, q, q, q))
    for k, l in pairs:
        for j, u in pairs:
            gamma4 += np.einsum(
                "ia,ib,ic,id->abcd",
                scores[k], weighted[(k, l)], scores[j], weighted[(j, u)],
                optimize=True,
            )
            theta4 += np.einsum(
                "ia,ib,ic,id->abcd",
                scores[k], weighted[(k, l)], scores[j], scores[u],
                optimize=True,
            )
            lambda4 += np.einsum(
                "ia,ib,ic,id->abcd",
                scores[k], scores[l], scores[j], scores[u],
                optimize=True,
            )
    gamma4 *= 0.25 / n
    theta4 *= 0.5 / n
    lambda4 /= n
    return (
        gamma4
        + gamma4.transpose(0, 1, 3, 2)
        + gamma4.transpose(1, 0, 2, 3)
        + gamma4.transpose(1, 0, 3, 2)
        - theta4
        - theta4.transpose(1, 0, 2, 3)
        - theta4.transpose(2, 3, 0, 1)
        - theta4.transpose(2, 3, 1, 0)
        + lambda4
    )


def c_tensor_gaussian(model: CovarianceModel, solution: MslcaSolution) -> np.ndarray:
    """Population coefficients for a Gaussian model, in closed form.

    Each entry is the second moment of a pair of quadratic forms in the
    observation: writing the eigenbasis-projected limit operator entry (m, r)
    as x^T A_mr x, Gaussian moments give
    E[x^T A x * x^T B x] = tr(A V) tr(B V) + 2 tr(sym(A) V sym(B) V).

    Under any elliptical law with the same covariance, all these fourth
    moments scale by the common kurtosis factor, so the tensor for, say, a
    multivariate t is this one times (nu - 2) / (nu - 4).
    """
    _require_whitened_model(model)
    structure = model.structure
    q = structure.total_dim
    beta = solution.beta
    v = model.v

    off_mask = np.ones((q, q))
    for k in range(structure.n_blocks):
        sl = structure.block_slice(k)
        off_mask[sl, sl] = 0.0
    diag_mask = 1.0 - off_mask

    psi_beta = (v * off_mask) @ beta
    a_full = np.einsum("um,vr,uv->mruv", beta, beta, off_mask) - 0.5 * (
        np.einsum("um,vr,uv->mruv", beta, psi_beta, diag_mask)
        + np.einsum("um,vr,uv->mruv", psi_beta, beta, diag_mask)
    )
    a_sym = 0.5 * (a_full + a_full.transpose(0, 1, 3, 2))
    means = np.einsum("mruv,uv->mr", a_full, v)
    av = np.einsum("mruv,vw->mruw", a_sym, v)
    cov = 2.0 * np.einsum("mruw,stwu->mrst", av, np.einsum("stwz,zu->stwu", a_sym, v))
    return cov + means[:, :, None, None] * means[None, None, :, :]


def sigma_matrix(c_provider, solution: MslcaSolution) -> np.ndarray:
    """Asymptotic covariance of the canonical coefficients, simple spectra only.

    In the eigenbasis the projection coefficients onto each one-dimensional
    eigenspace collapse to Kronecker deltas, so entry (i, j) is the
    coefficient at indices (i, i, j, j). ``c_provider`` is either a callable
    (m, r, s, t) -> float or a precomputed 4-d tensor.
    """
    if not solution.is_simple:
        sizes = [len(g) for g in solution.groups]
        raise RepeatedEigenvaluesError(
            f"spectrum has repeated eigenvalues (group sizes {sizes})"
        )
    q = solution.rho.shape[0]
    if isinstance(c_provider, np.ndarray):
        tensor = c_provider
        provider = lambda m, r, s, t: float(tensor[m, r, s, t])  # noqa: E731
    else:
        provider = c_provider
    sigma = np.empty((q, q))
    for i in range(q):
        for j in range(i, q):
            value = provider(i, i, j, j)
            sigma[i, j] = value
            sigma[j, i] = value
    return sigma


@dataclass(frozen=True)
class EigenChiSquareDist:
    """Law of a nonnegatively weighted sum of independent chi-square(1) terms.

    Weights are stored nonincreasing. Values in [-1e-8, 0) are clamped to
    zero at construction; anything more negative raises NegativeWeightError.
    """

    weights: np.ndarray
    draws: int = DEFAULT_MC_DRAWS
    seed: int = 0

    def __init__(self, weights, draws: int = DEFAULT_MC_DRAWS, seed: int = 0):
        weights = np.sort(np.asarray(weights, dtype=float))[::-1]
        if weights.size == 0:
            raise ValueError("need at least one weight")
        if weights[-1] < WEIGHT_CLAMP_FLOOR:
            raise NegativeWeightError(f"weight {weights[-1]:.3e} is negative")
        weights = np.clip(weights, 0.0, None)
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "draws", int(draws))
        object.__setattr__(self, "seed", int(seed))


def quad_form_pvalue(dist: EigenChiSquareDist, observed: float) -> float:
    """Upper-tail probability P(sum_i w_i chi2_1 >= observed), by seeded Monte Carlo.

    Deterministic given (weights, observed, seed, draws). Monte Carlo keeps
    the tail estimate unbiased and dependency-free; with the default draw
    count the standard error near p = 0.05 is about 5e-4.
    """
    observed = float(observed)
    if observed < 0:
        raise ValueError(f"observed statistic must be nonnegative, got {observed}")
    rng = np.random.default_rng(np.random.SeedSequence(dist.seed))
    d = dist.weights.shape[0]
    hits = 0
    remaining = dist.draws
    chunk_rows = max(1, min(dist.draws, 4_000_000 // max(d, 1)))
    while remaining > 0:
        rows = min(chunk_rows, remaining)
        draws = rng.standard_normal((rows, d))
        samples = (draws * draws) @ dist.weights
        hits += int(np.count_nonzero(samples >= observed))
        remaining -= rows
    return hits / dist.draws


def elliptical_scale_plugin(data: Dataset) -> float:
    """Kurtosis-scale estimate from whitened data.

    Averages, over whitened coordinates, the sample fourth moment divided by
    three; the estimand is 1 for Gaussian data and (nu-2)/(nu-4) for a
    multivariate t with nu degrees of freedom.
    """
    if data.n < 30:
        raise InsufficientSampleError(f"need at least 30 rows, got {data.n}")
    _require_whitened_data(data.rows, data.structure)
    fourth = np.mean(data.rows**4, axis=0)
    return float(np.mean(fourth) / 3.0)
