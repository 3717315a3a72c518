"""Multiple-set linear canonical analysis.

Population and empirical solvers for the joint canonical analysis of K >= 2
variable sets, asymptotic machinery for the estimators, tests of mutual
non-correlation, and a reproducible Monte Carlo verification harness.
"""

__version__ = "0.1.0"

from .blocks import (
    BlockStructure,
    SymmetricEig,
    embed_block,
    extract_block,
    frobenius_sq,
    psd_sqrt,
    sym_eig,
    sym_power,
)
from .exceptions import (
    InsufficientSampleError,
    MslcaError,
    NearSingularError,
    NegativeWeightError,
    NuTooSmallError,
    PlanPreconditionError,
    RepeatedEigenvaluesError,
)
from .population import (
    CcaEquivalence,
    ConstraintDiagnostics,
    CovarianceModel,
    MslcaSolution,
    build_phi,
    build_psi,
    build_t,
    cca_equivalence,
    solve_mslca,
    varphi,
    verify_constraints,
)
from .estimation import (
    Dataset,
    MslcaFit,
    align_sign,
    center,
    empirical_cov,
    fit_mslca,
    whiten,
)
from .asymptotics import (
    EigenChiSquareDist,
    GammaMatrix,
    MomentAccumulator,
    build_gamma,
    c_coefficient,
    c_tensor,
    c_tensor_gaussian,
    elliptical_scale_plugin,
    quad_form_pvalue,
    sigma_matrix,
    z_operator,
)
from .noncorr import (
    TestReport,
    chi2_test,
    degrees_of_freedom,
    general_test,
    s_statistic,
)
from .simulate import (
    ExperimentResult,
    SimulationPlan,
    ks_distance,
    rng_stream,
    run_experiment,
    sample_gaussian,
    sample_student_t,
    student_t_kurtosis_scale,
)

__all__ = [
    "__version__",
    "BlockStructure",
    "SymmetricEig",
    "embed_block",
    "extract_block",
    "frobenius_sq",
    "psd_sqrt",
    "sym_eig",
    "sym_power",
    "MslcaError",
    "NearSingularError",
    "RepeatedEigenvaluesError",
    "NegativeWeightError",
    "NuTooSmallError",
    "InsufficientSampleError",
    "PlanPreconditionError",
    "CovarianceModel",
    "MslcaSolution",
    "CcaEquivalence",
    "ConstraintDiagnostics",
    "build_phi",
    "build_psi",
    "build_t",
    "solve_mslca",
    "varphi",
    "verify_constraints",
    "cca_equivalence",
    "Dataset",
    "MslcaFit",
    "center",
    "empirical_cov",
    "fit_mslca",
    "align_sign",
    "whiten",
    "MomentAccumulator",
    "GammaMatrix",
    "EigenChiSquareDist",
    "z_operator",
    "build_gamma",
    "c_coefficient",
    "c_tensor",
    "c_tensor_gaussian",
    "sigma_matrix",
    "quad_form_pvalue",
    "elliptical_scale_plugin",
    "TestReport",
    "s_statistic",
    "degrees_of_freedom",
    "chi2_test",
    "general_test",
    "SimulationPlan",
    "ExperimentResult",
    "rng_stream",
    "sample_gaussian",
    "sample_student_t",
    "student_t_kurtosis_scale",
    "ks_distance",
    "run_experiment",
]
