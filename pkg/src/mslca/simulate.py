"""Samplers and reproducible Monte Carlo experiments.

Each experiment draws replications from per-(size, replication) RNG streams
spawned off the master seed, so results are bit-reproducible and independent
of execution order. Chi-square references come from scipy's incomplete-gamma
CDF rather than from simulation, which keeps the checks non-circular.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .blocks import psd_sqrt
from .estimation import Dataset, align_sign, fit_mslca
from .exceptions import NuTooSmallError, PlanPreconditionError, RepeatedEigenvaluesError
from .noncorr import chi2_test, degrees_of_freedom, general_test, s_statistic
from .population import CovarianceModel, build_t, solve_mslca
from .asymptotics import (
    _require_whitened_model,
    c_tensor_gaussian,
    gamma_index_map,
    sigma_matrix,
    z_operator,
)

EXPERIMENT_KINDS = ("consistency", "clt-check", "coeff-clt", "null-dist", "power")


def rng_stream(master_seed: int, size_index: int, rep_index: int) -> np.random.Generator:
    """Independent generator for one (size, replication) cell."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(size_index, rep_index))
    return np.random.default_rng(seq)


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def sample_gaussian(model: CovarianceModel, n: int, seed) -> Dataset:
    """n i.i.d. centered Gaussian rows with covariance equal to the model's.

    Rows are the symmetric square root of the covariance applied to standard
    normal vectors; deterministic given the seed (or generator).
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = _as_generator(seed)
    root = psd_sqrt(model.v)
    rows = rng.standard_normal((n, model.structure.total_dim)) @ root
    return Dataset(model.structure, rows)


def sample_student_t(model: CovarianceModel, nu: float, n: int, seed) -> Dataset:
    """n i.i.d. rows from a multivariate t scaled to covariance equal to the model's.

    Draws V^{1/2} g / sqrt(w / nu) with g standard normal and w an
    independent chi-square(nu), times sqrt((nu-2)/nu) so the covariance is
    exactly V. Requires nu > 4 so fourth moments exist.
    """
    if nu <= 4:
        raise NuTooSmallError(f"student-t sampler needs nu > 4, got {nu}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = _as_generator(seed)
    root = psd_sqrt(model.v)
    gauss = rng.standard_normal((n, model.structure.total_dim)) @ root
    mixing = rng.chisquare(nu, size=n)
    rows = gauss * np.sqrt((nu - 2.0) / mixing)[:, None]
    return Dataset(model.structure, rows)


def student_t_kurtosis_scale(nu: float) -> float:
    """Elliptical kurtosis scale of the multivariate t: (nu-2)/(nu-4)."""
    if nu <= 4:
        raise NuTooSmallError(f"kurtosis scale needs nu > 4, got {nu}")
    return (nu - 2.0) / (nu - 4.0)


def ks_distance(sample: np.ndarray, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_n - F| against a CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    f = np.asarray(cdf(x), dtype=float)
    d_plus = float(np.max(np.arange(1, n + 1) / n - f))
    d_minus = float(np.max(f - np.arange(0, n) / n))
    return max(d_plus, d_minus)


@dataclass(frozen=True)
class SimulationPlan:
    """Everything needed to reproduce one experiment."""

    kind: str
    model: CovarianceModel
    sizes: tuple[int, ...]
    replications: int
    sampler: str = "gaussian"
    nu: float | None = None
    seed: int = 0
    alphas: tuple[float, ...] = (0.05,)
    methods: tuple[str, ...] = ("chi2",)
    mc_draws: int = 20_000

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.sampler not in ("gaussian", "student-t"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.replications < 1:
            raise PlanPreconditionError(
                f"need at least 1 replication, got {self.replications}"
            )
        if not self.sizes or any(s < 2 for s in self.sizes):
            raise ValueError(f"sizes must all be >= 2, got {self.sizes}")
        if self.seed < 0:
            raise PlanPreconditionError(f"seed must be nonnegative, got {self.seed}")
        if any(not 0 < a < 1 for a in self.alphas):
            raise ValueError(f"alphas must lie in (0, 1), got {self.alphas}")
        if any(m not in ("chi2", "general") for m in self.methods):
            raise ValueError(f"methods must be chi2/general, got {self.methods}")
        if self.sampler == "student-t":
            if self.nu is None:
                raise ValueError("student-t sampler needs nu")
            if self.nu <= 4:
                raise NuTooSmallError(f"student-t sampler needs nu > 4, got {self.nu}")

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        if self.sampler == "gaussian":
            return sample_gaussian(self.model, n, rng)
        return sample_student_t(self.model, self.nu, n, rng)

    @property
    def true_scale(self) -> float:
        """Kurtosis scale of the sampler's law (1 for Gaussian)."""
        if self.sampler == "gaussian":
            return 1.0
        return student_t_kurtosis_scale(self.nu)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dims": list(self.model.structure.dims),
            "covariance": self.model.v.tolist(),
            "sizes": list(self.sizes),
            "replications": self.replications,
            "sampler": self.sampler,
            "nu": self.nu,
            "seed": self.seed,
            "alphas": list(self.alphas),
            "methods": list(self.methods),
            "mc_draws": self.mc_draws,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SimulationPlan":
        from .blocks import BlockStructure

        required = ("kind", "dims", "covariance", "sizes", "replications")
        missing = [key for key in required if key not in raw]
        if missing:
            raise KeyError(f"plan config is missing keys: {missing}")
        structure = BlockStructure(raw["dims"])
        model = CovarianceModel(structure, np.asarray(raw["covariance"], dtype=float))
        kwargs = {}
        for key in ("sampler", "nu", "seed", "alphas", "methods", "mc_draws"):
            if raw.get(key) is not None:
                kwargs[key] = raw[key]
        return cls(
            kind=raw["kind"],
            model=model,
            sizes=raw["sizes"],
            replications=int(raw["replications"]),
            **kwargs,
        )


@dataclass(frozen=True)
class ExperimentResult:
    """Per-replication records plus order-independent summaries."""

    kind: str
    plan: dict
    records: list[dict]
    summaries: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "plan": self.plan,
            "records": self.records,
            "summaries": self.summaries,
            "meta": self.meta,
        }


def _finish(plan: SimulationPlan, records: list[dict], summaries: dict, started: float) -> ExperimentResult:
    meta = {
        "package_version": __version__,
        "numpy_version": np.__version__,
        "wall_time_s": time.perf_counter() - started,
    }
    return ExperimentResult(
        kind=plan.kind,
        plan=plan.to_dict(),
        records=records,
        summaries=summaries,
        meta=meta,
    )


def run_consistency(plan: SimulationPlan) -> ExperimentResult:
    """Estimation error of the operator, coefficients and directions vs n.

    Direction errors are sign-aligned per vector; inside eigenvalue
    multiplicity groups individual eigenvectors are not identified, so the
    per-group error of the spanned projectors is recorded as well.
    """
    started = time.perf_counter()
    t_true = build_t(plan.model)
    solution = solve_mslca(plan.model)
    group_projectors = [
        solution.beta[:, list(g)] @ solution.beta[:, list(g)].T for g in solution.groups
    ]
    records = []
    summaries: dict[str, dict] = {}
    for i_size, n in enumerate(plan.sizes):
        t_errors, rho_errors, beta_errors, proj_errors = [], [], [], []
        for rep in range(plan.replications):
            rng = rng_stream(plan.seed, i_size, rep)
            fit = fit_mslca(plan.sample(n, rng))
            t_err = float(np.linalg.norm(fit.that - t_true))
            rho_err = np.abs(fit.solution.rho - solution.rho)
            beta_err = np.array(
                [
                    float(
                        np.linalg.norm(
                            align_sign(fit.solution.beta[:, j], solution.beta[:, j])
                            - solution.beta[:, j]
                        )
                    )
                    for j in range(solution.beta.shape[1])
                ]
            )
            proj_err = np.array(
                [
                    float(
                        np.linalg.norm(
                            fit.solution.beta[:, list(g)] @ fit.solution.beta[:, list(g)].T
                            - group_projectors[gi]
                        )
                    )
                    for gi, g in enumerate(solution.groups)
                ]
            )
            records.append(
                {
                    "n": n,
                    "rep": rep,
                    "t_error": t_err,
                    "rho_errors": rho_err.tolist(),
                    "beta_errors": beta_err.tolist(),
                    "group_projector_errors": proj_err.tolist(),
                }
            )
            t_errors.append(t_err)
            rho_errors.append(rho_err)
            beta_errors.append(beta_err)
            proj_errors.append(proj_err)
        summaries[str(n)] = {
            "median_t_error": float(np.median(t_errors)),
            "median_rho_errors": np.median(np.array(rho_errors), axis=0).tolist(),
            "median_beta_errors": np.median(np.array(beta_errors), axis=0).tolist(),
            "median_group_projector_errors": np.median(np.array(proj_errors), axis=0).tolist(),
        }
    return _finish(plan, records, summaries, started)


def _offdiag_positions(model: CovarianceModel) -> list[tuple[int, int]]:
    structure = model.structure
    positions = []
    for k, l, i, j in gamma_index_map(structure):
        positions.append((structure.offset(k) + i, structure.offset(l) + j))
    return positions


def run_clt_check(plan: SimulationPlan) -> ExperimentResult:
    """Covariance of sqrt(n) * estimation error vs covariance of the limit operator.

    For each replication, the off-diagonal block entries of the scaled error
    are recorded alongside the same entries of the limit operator evaluated
    at one fresh draw; their empirical covariances should agree.
    """
    started = time.perf_counter()
    _require_whitened_model(plan.model)
    t_true = build_t(plan.model)
    positions = _offdiag_positions(plan.model)
    rows_idx = [p[0] for p in positions]
    cols_idx = [p[1] for p in positions]
    records = []
    summaries: dict[str, dict] = {}
    for i_size, n in enumerate(plan.sizes):
        t_entries = np.empty((plan.replications, len(positions)))
        z_entries = np.empty((plan.replications, len(positions)))
        for rep in range(plan.replications):
            rng = rng_stream(plan.seed, i_size, rep)
            fit = fit_mslca(plan.sample(n, rng))
            err = np.sqrt(n) * (fit.that - t_true)
            t_entries[rep] = err[rows_idx, cols_idx]
            fresh = plan.sample(1, rng).rows[0]
            z_entries[rep] = z_operator(fresh, plan.model)[rows_idx, cols_idx]
            records.append(
                {
                    "n": n,
                    "rep": rep,
                    "t_entries": t_entries[rep].tolist(),
                    "z_entries": z_entries[rep].tolist(),
                }
            )
        cov_t = np.cov(t_entries, rowvar=False)
        cov_z = np.cov(z_entries, rowvar=False)
        rel = float(np.linalg.norm(cov_t - cov_z) / np.linalg.norm(cov_z))
        summaries[str(n)] = {
            "entry_positions": [list(p) for p in positions],
            "cov_scaled_error": np.atleast_2d(cov_t).tolist(),
            "cov_limit_operator": np.atleast_2d(cov_z).tolist(),
            "relative_discrepancy": rel,
        }
    return _finish(plan, records, summaries, started)


def run_coeff_clt(plan: SimulationPlan) -> ExperimentResult:
    """Variance of sqrt(n) * coefficient errors vs the asymptotic covariance.

    Requires a simple population spectrum. The reference variances come from
    the closed-form Gaussian tensor, scaled by the sampler's kurtosis factor
    (valid for the elliptical student-t sampler as well).
    """
    started = time.perf_counter()
    solution = solve_mslca(plan.model)
    if not solution.is_simple:
        raise RepeatedEigenvaluesError("coefficient CLT experiment needs a simple spectrum")
    tensor = plan.true_scale * c_tensor_gaussian(plan.model, solution)
    sigma = sigma_matrix(tensor, solution)
    records = []
    summaries: dict[str, dict] = {}
    for i_size, n in enumerate(plan.sizes):
        deviations = np.empty((plan.replications, solution.rho.shape[0]))
        for rep in range(plan.replications):
            rng = rng_stream(plan.seed, i_size, rep)
            fit = fit_mslca(plan.sample(n, rng))
            deviations[rep] = np.sqrt(n) * (fit.solution.rho - solution.rho)
            records.append({"n": n, "rep": rep, "scaled_rho_errors": deviations[rep].tolist()})
        variances = deviations.var(axis=0, ddof=1)
        ratios = variances / np.diag(sigma)
        summaries[str(n)] = {
            "empirical_variances": variances.tolist(),
            "asymptotic_variances": np.diag(sigma).tolist(),
            "variance_ratios": ratios.tolist(),
        }
    return _finish(plan, records, summaries, started)


def _require_null_model(model: CovarianceModel) -> None:
    for k, l in model.structure.lower_pairs():
        if np.abs(model.block(k, l)).max() > 0:
            raise ValueError(f"model violates the null: block ({k}, {l}) is nonzero")


def run_null_dist(plan: SimulationPlan) -> ExperimentResult:
    """Null distribution of n * statistic vs its chi-square limit.

    Records per replication the statistic and p-values from the chi-square
    route at unit scale, at the sampler's true kurtosis scale, and (when
    requested in ``methods``) from the general route. Summaries report the
    KS distance of the scale-corrected statistic to chi-square(d), the
    empirical sizes at the requested levels, and the KS distance of the
    correct-route p-values from uniform.
    """
    started = time.perf_counter()
    _require_null_model(plan.model)
    d = degrees_of_freedom(plan.model.structure)
    scale = plan.true_scale
    include_general = "general" in plan.methods
    records = []
    summaries: dict[str, dict] = {}
    for i_size, n in enumerate(plan.sizes):
        ns_values = np.empty(plan.replications)
        p_chi2 = np.empty(plan.replications)
        p_scaled = np.empty(plan.replications)
        p_general = np.empty(plan.replications) if include_general else None
        for rep in range(plan.replications):
            rng = rng_stream(plan.seed, i_size, rep)
            data = plan.sample(n, rng)
            fit = fit_mslca(data)
            ns = n * s_statistic(fit.that, fit.structure)
            ns_values[rep] = ns
            p_chi2[rep] = float(stats.chi2.sf(ns, df=d))
            p_scaled[rep] = float(stats.chi2.sf(ns / scale, df=d))
            record = {
                "n": n,
                "rep": rep,
                "ns": float(ns),
                "p_chi2": float(p_chi2[rep]),
                "p_chi2_scaled": float(p_scaled[rep]),
            }
            if include_general:
                mc_seed = int(rng.integers(2**63 - 1))
                report = general_test(
                    fit, data, alpha=plan.alphas[0], mc_draws=plan.mc_draws, seed=mc_seed
                )
                p_general[rep] = report.p_value
                record["p_general"] = report.p_value
            records.append(record)
        chi2_cdf = stats.chi2(df=d).cdf
        summary = {
            "mean_ns": float(ns_values.mean()),
            "ks_to_chi2": ks_distance(ns_values / scale, chi2_cdf),
            "p_uniformity_ks": ks_distance(p_scaled, lambda u: np.clip(u, 0.0, 1.0)),
            "size_chi2": {str(a): float(np.mean(p_chi2 < a)) for a in plan.alphas},
            "size_chi2_scaled": {str(a): float(np.mean(p_scaled < a)) for a in plan.alphas},
        }
        if include_general:
            summary["size_general"] = {
                str(a): float(np.mean(p_general < a)) for a in plan.alphas
            }
        summaries[str(n)] = summary
    return _finish(plan, records, summaries, started)


def run_power(plan: SimulationPlan) -> ExperimentResult:
    """Rejection rates per size and method.

    Intended for models violating the null; on a null model the rates reduce
    to empirical sizes, which is still well defined and occasionally useful,
    so no guard is imposed.
    """
    started = time.perf_counter()
    include_general = "general" in plan.methods
    records = []
    summaries: dict[str, dict] = {}
    for i_size, n in enumerate(plan.sizes):
        p_chi2 = np.empty(plan.replications)
        p_general = np.empty(plan.replications) if include_general else None
        for rep in range(plan.replications):
            rng = rng_stream(plan.seed, i_size, rep)
            data = plan.sample(n, rng)
            fit = fit_mslca(data)
            report = chi2_test(fit, scale="gaussian", alpha=plan.alphas[0])
            p_chi2[rep] = report.p_value
            record = {"n": n, "rep": rep, "p_chi2": report.p_value}
            if include_general:
                mc_seed = int(rng.integers(2**63 - 1))
                general = general_test(
                    fit, data, alpha=plan.alphas[0], mc_draws=plan.mc_draws, seed=mc_seed
                )
                p_general[rep] = general.p_value
                record["p_general"] = general.p_value
            records.append(record)
        summary = {
            "rejection_chi2": {str(a): float(np.mean(p_chi2 < a)) for a in plan.alphas}
        }
        if include_general:
            summary["rejection_general"] = {
                str(a): float(np.mean(p_general < a)) for a in plan.alphas
            }
        summaries[str(n)] = summary
    return _finish(plan, records, summaries, started)


_RUNNERS = {
    "consistency": run_consistency,
    "clt-check": run_clt_check,
    "coeff-clt": run_coeff_clt,
    "null-dist": run_null_dist,
    "power": run_power,
}


def run_experiment(plan: SimulationPlan) -> ExperimentResult:
    """Dispatch a plan to its experiment runner."""
    return _RUNNERS[plan.kind](plan)
