"""Test of mutual non-correlation between the variable sets.

The statistic is the summed squared Frobenius mass of the off-diagonal
blocks of the estimated canonical operator; it vanishes exactly when every
cross-covariance block does. Two calibrations of n times the statistic are
provided: a chi-square law with an elliptical kurtosis scale, and the
general weighted chi-square law driven by estimated fourth moments.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .blocks import BlockStructure, extract_block, frobenius_sq
from .estimation import Dataset, MslcaFit, whiten
from .asymptotics import (
    DEFAULT_MC_DRAWS,
    EigenChiSquareDist,
    MomentAccumulator,
    build_gamma,
    elliptical_scale_plugin,
    quad_form_pvalue,
)

GAUSSIAN_SCALE = 1.0


@dataclass(frozen=True)
class TestReport:
    """Outcome of one non-correlation test.

    ``scale`` and ``scale_provenance`` describe the kurtosis factor applied
    on the chi-square route (``gaussian-default`` | ``plugin`` | ``user``);
    both are None on the general route, which estimates the full weight
    vector instead (reported in ``gamma_eigenvalues``).
    """

    n: int
    d: int
    s: float
    ns: float
    method: str
    scale: float | None
    scale_provenance: str | None
    p_value: float
    alpha: float
    reject: bool
    gamma_eigenvalues: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "S": self.s,
            "nS": self.ns,
            "method": self.method,
            "scale": self.scale,
            "scale_provenance": self.scale_provenance,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "gamma_eigenvalues": (
                None if self.gamma_eigenvalues is None else list(self.gamma_eigenvalues)
            ),
        }

    def summary_line(self) -> str:
        return f"nS={self.ns} d={self.d} p={self.p_value} reject={self.reject}"


def s_statistic(that: np.ndarray, structure: BlockStructure) -> float:
    """Summed squared entries of the off-diagonal blocks (lower pairs only).

    Requires zero diagonal blocks, which the estimator guarantees by
    construction; equals half the sum of squared eigenvalues.
    """
    that = np.asarray(that, dtype=float)
    scale = 1.0 + np.abs(that).max()
    for k in range(structure.n_blocks):
        block = extract_block(that, structure, k, k)
        if np.abs(block).max() > 1e-10 * scale:
            raise ValueError(f"diagonal block {k} is not zero; not a canonical operator")
    return sum(
        frobenius_sq(extract_block(that, structure, k, l))
        for k, l in structure.lower_pairs()
    )


def degrees_of_freedom(structure: BlockStructure) -> int:
    """Total count of off-diagonal block entries tested: sum of p_k p_l over l < k."""
    return sum(structure.dims[k] * structure.dims[l] for k, l in structure.lower_pairs())


def _resolve_scale(scale, data: Dataset | None) -> tuple[float, str]:
    if scale == "gaussian":
        return GAUSSIAN_SCALE, "gaussian-default"
    if scale == "plugin":
        if data is None:
            raise ValueError("scale='plugin' needs the dataset to estimate the kurtosis scale")
        return elliptical_scale_plugin(whiten(data)), "plugin"
    value = float(scale)
    if value <= 0:
        raise ValueError(f"scale must be positive, got {value}")
    return value, "user"


def chi2_test(
    fit: MslcaFit,
    scale="gaussian",
    alpha: float = 0.05,
    data: Dataset | None = None,
) -> TestReport:
    """Chi-square route: refer n*S / scale to chi-square with d degrees of freedom.

    ``scale`` is "gaussian" (factor 1), "plugin" (kurtosis estimated from the
    whitened data, which must then be supplied), or an explicit positive
    float. Exact asymptotic level requires an elliptical population with the
    matching kurtosis scale.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    scale_value, provenance = _resolve_scale(scale, data)
    d = degrees_of_freedom(fit.structure)
    s = s_statistic(fit.that, fit.structure)
    ns = fit.n * s
    p_value = float(stats.chi2.sf(ns / scale_value, df=d))
    return TestReport(
        n=fit.n,
        d=d,
        s=s,
        ns=ns,
        method="chi2",
        scale=scale_value,
        scale_provenance=provenance,
        p_value=p_value,
        alpha=alpha,
        reject=bool(p_value < alpha),
    )


def general_test(
    fit: MslcaFit,
    data: Dataset,
    alpha: float = 0.05,
    mc_draws: int = DEFAULT_MC_DRAWS,
    seed: int = 0,
) -> TestReport:
    """General route: weighted chi-square with weights from estimated fourth moments.

    Whitens the data, estimates the covariance of the stacked off-diagonal
    block entries without imposing the null on cross-moments (the estimate is
    consistent either way and converges to the right object under the null),
    and refers n*S to the weighted chi-square via seeded Monte Carlo.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if fit.n != data.n:
        raise ValueError(f"fit (n={fit.n}) and data (n={data.n}) are inconsistent")
    d = degrees_of_freedom(fit.structure)
    if fit.n < 10 * d:
        warnings.warn(
            f"n = {fit.n} is small for estimating a {d}x{d} fourth-moment matrix "
            f"(recommended n >= {10 * d})",
            stacklevel=2,
        )
    acc = MomentAccumulator.from_whitened(whiten(data))
    gamma = build_gamma(acc)
    weights = gamma.eigenvalues()
    s = s_statistic(fit.that, fit.structure)
    ns = fit.n * s
    dist = EigenChiSquareDist(weights, draws=mc_draws, seed=seed)
    p_value = quad_form_pvalue(dist, ns)
    return TestReport(
        n=fit.n,
        d=d,
        s=s,
        ns=ns,
        method="general",
        scale=None,
        scale_provenance=None,
        p_value=p_value,
        alpha=alpha,
        reject=bool(p_value < alpha),
        gamma_eigenvalues=weights,
    )
