"""Limit-law machinery: Z operator, fourth moments, C coefficients, quad forms."""

import numpy as np
import pytest
from scipy import stats

from mslca import (
    BlockStructure,
    CovarianceModel,
    EigenChiSquareDist,
    InsufficientSampleError,
    MomentAccumulator,
    NegativeWeightError,
    RepeatedEigenvaluesError,
    build_gamma,
    c_coefficient,
    c_tensor,
    c_tensor_gaussian,
    elliptical_scale_plugin,
    quad_form_pvalue,
    sample_gaussian,
    sample_student_t,
    sigma_matrix,
    solve_mslca,
    whiten,
    z_operator,
)
from mslca.asymptotics import gamma_index_map
from conftest import correlation_model, equicorrelation_model

WHITENED_111 = correlation_model((1, 1, 1), {(1, 0): 0.3, (2, 0): 0.15, (2, 1): 0.1})


def test_z_operator_null_model_is_outer_product():
    model = CovarianceModel(BlockStructure((2, 1)), np.eye(3))
    x = np.array([1.0, -2.0, 3.0])
    z = z_operator(x, model)
    np.testing.assert_allclose(z[:2, 2], np.array([1.0, -2.0]) * 3.0, atol=0)
    assert np.array_equal(z[:2, :2], np.zeros((2, 2)))
    np.testing.assert_allclose(z, z.T, atol=0)


def test_z_operator_scalar_formula():
    r = 0.4
    model = correlation_model((1, 1), {(1, 0): r})
    a, b = 1.3, -0.7
    z = z_operator(np.array([a, b]), model)
    expected = a * b - 0.5 * (a * a * r + r * b * b)
    assert z[0, 1] == pytest.approx(expected, abs=1e-15)
    assert z[1, 0] == pytest.approx(expected, abs=1e-15)


def test_z_operator_requires_whitened_model():
    model = CovarianceModel(BlockStructure((1, 1)), np.diag([2.0, 1.0]))
    with pytest.raises(ValueError):
        z_operator(np.zeros(2), model)


def test_z_operator_zero_mean_monte_carlo():
    rng = np.random.default_rng(107)
    n = 6000
    data = sample_gaussian(WHITENED_111, n, rng)
    draws = np.array([z_operator(row, WHITENED_111) for row in data.rows])
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(n)
    off = ~np.eye(3, dtype=bool)
    assert np.all(np.abs(mean[off]) < 3 * se[off])


def _whitened_accumulator(model, n, seed, sampler="gaussian", nu=None):
    rng = np.random.default_rng(seed)
    if sampler == "gaussian":
        data = sample_gaussian(model, n, rng)
    else:
        data = sample_student_t(model, nu, n, rng)
    return MomentAccumulator.from_whitened(whiten(data))


def test_accumulator_rejects_raw_data():
    rng = np.random.default_rng(109)
    model = correlation_model((1, 1), {(1, 0): 0.0})
    data = sample_gaussian(model, 200, rng)
    from mslca import Dataset

    scaled = Dataset(data.structure, 3.0 * data.rows)
    with pytest.raises(ValueError):
        MomentAccumulator.from_whitened(scaled)


def test_accumulator_second_moments_cached():
    model = CovarianceModel(BlockStructure((2, 1)), np.eye(3))
    acc = _whitened_accumulator(model, 300, seed=111)
    moments = acc.second_moments
    for k in range(2):
        sl = acc.structure.block_slice(k)
        np.testing.assert_allclose(moments[sl, sl], np.eye(acc.structure.dims[k]), atol=1e-9)
    assert acc.second_moments is moments


def test_fourth_moment_gaussian_oracles():
    model = CovarianceModel(BlockStructure((2, 2)), np.eye(4))
    acc = _whitened_accumulator(model, 30000, seed=113)
    n = acc.n
    # same coordinate four times: Gaussian m4 = 3
    assert acc.fourth_moment(0, 0, 0, 0) == pytest.approx(3.0, abs=4 * np.sqrt(96 / n))
    # two independent unit-variance pairs: product of variances = 1
    assert acc.fourth_moment(0, 0, 3, 3) == pytest.approx(1.0, abs=4 * np.sqrt(8 / n))
    # four distinct coordinates: 0 by independence
    assert acc.fourth_moment(0, 1, 2, 3) == pytest.approx(0.0, abs=4 * np.sqrt(1 / n))
    with pytest.raises(IndexError):
        acc.fourth_moment(0, 0, 0, 4)


def test_gamma_index_map_order():
    structure = BlockStructure((2, 2))
    assert gamma_index_map(structure) == [(1, 0, 0, 0), (1, 0, 1, 0), (1, 0, 0, 1), (1, 0, 1, 1)]
    structure3 = BlockStructure((1, 1, 1))
    assert gamma_index_map(structure3) == [(1, 0, 0, 0), (2, 0, 0, 0), (2, 1, 0, 0)]


def test_build_gamma_entries_match_fourth_moments():
    model = CovarianceModel(BlockStructure((2, 2)), np.eye(4))
    acc = _whitened_accumulator(model, 500, seed=127)
    gamma = build_gamma(acc)
    structure = acc.structure
    index_map = gamma.index_map
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = int(rng.integers(len(index_map)))
        b = int(rng.integers(len(index_map)))
        k, l, i, j = index_map[a]
        r, s, p, t = index_map[b]
        expected = acc.fourth_moment(
            structure.offset(k) + i,
            structure.offset(l) + j,
            structure.offset(r) + p,
            structure.offset(s) + t,
        )
        assert gamma.matrix[a, b] == pytest.approx(expected, rel=1e-12)


def test_build_gamma_gaussian_null_near_identity():
    model = CovarianceModel(BlockStructure((2, 2)), np.eye(4))
    acc = _whitened_accumulator(model, 30000, seed=131)
    gamma = build_gamma(acc)
    assert np.array_equal(gamma.matrix, gamma.matrix.T)
    assert gamma.dimension == 4
    assert np.abs(gamma.matrix - np.eye(4)).max() < 0.08
    assert gamma.eigenvalues().min() >= 0.0


def test_build_gamma_scalar_pair_gaussian():
    model = CovarianceModel(BlockStructure((1, 1)), np.eye(2))
    acc = _whitened_accumulator(model, 20000, seed=137)
    gamma = build_gamma(acc)
    assert gamma.dimension == 1
    assert gamma.matrix[0, 0] == pytest.approx(1.0, abs=0.1)


def test_build_gamma_student_t_diagonal():
    model = CovarianceModel(BlockStructure((1, 1)), np.eye(2))
    acc = _whitened_accumulator(model, 60000, seed=139, sampler="t", nu=10)
    gamma = build_gamma(acc)
    assert gamma.matrix[0, 0] == pytest.approx(4.0 / 3.0, abs=0.15)


def test_gamma_eigenvalue_clamp_and_abort():
    structure = BlockStructure((1, 1))
    index_map = gamma_index_map(structure)
    from mslca import GammaMatrix

    ok = GammaMatrix(structure=structure, matrix=np.array([[1.0]]) * -1e-9, index_map=index_map)
    assert ok.eigenvalues()[0] == 0.0
    bad = GammaMatrix(structure=structure, matrix=np.array([[-1e-3]]), index_map=index_map)
    with pytest.raises(NegativeWeightError):
        bad.eigenvalues()


def test_c_coefficient_null_model_reduces_to_plain_moments():
    model = CovarianceModel(BlockStructure((1, 1, 1)), np.eye(3))
    acc = _whitened_accumulator(model, 400, seed=149)
    solution = solve_mslca(model)
    beta = solution.beta
    scores = [acc.data[:, [k]] @ beta[[k], :] for k in range(3)]
    pairs = [(k, l) for k in range(3) for l in range(3) if k != l]
    for m, r, s, t in [(0, 0, 0, 0), (0, 1, 2, 0), (2, 1, 0, 2)]:
        lam_only = sum(
            float(np.mean(scores[k][:, m] * scores[l][:, r] * scores[j][:, c] * scores[u][:, t]))
            for k, l in pairs
            for j, u in pairs
            for c in [s]
        )
        value = c_coefficient(acc, solution, model, m, r, s, t)
        assert value == pytest.approx(lam_only, abs=1e-12)


def test_c_coefficient_symmetries():
    acc = _whitened_accumulator(WHITENED_111, 500, seed=151)
    solution = solve_mslca(WHITENED_111)
    rng = np.random.default_rng(1)
    for _ in range(5):
        m, r, s, t = (int(i) for i in rng.integers(0, 3, size=4))
        base = c_coefficient(acc, solution, WHITENED_111, m, r, s, t)
        assert c_coefficient(acc, solution, WHITENED_111, r, m, s, t) == pytest.approx(base, abs=1e-9)
        assert c_coefficient(acc, solution, WHITENED_111, m, r, t, s) == pytest.approx(base, abs=1e-9)


def test_c_tensor_matches_c_coefficient():
    acc = _whitened_accumulator(WHITENED_111, 300, seed=157)
    solution = solve_mslca(WHITENED_111)
    tensor = c_tensor(acc, solution, WHITENED_111)
    for m in range(3):
        for r in range(3):
            for s in range(3):
                for t in range(3):
                    assert tensor[m, r, s, t] == pytest.approx(
                        c_coefficient(acc, solution, WHITENED_111, m, r, s, t), abs=1e-10
                    )


def _limit_operator_products_mc(model, solution, n, seed):
    """Independent oracle: average products of eigenbasis-projected limit
    operator entries over fresh draws, evaluating the per-draw sums directly
    (no term-by-term expansion)."""
    rng = np.random.default_rng(seed)
    structure = model.structure
    beta = solution.beta
    data = sample_gaussian(model, n, rng).rows
    q = structure.total_dim
    g = np.zeros((n, q, q))
    for k in range(structure.n_blocks):
        for l in range(structure.n_blocks):
            if k == l:
                continue
            xk = data[:, structure.block_slice(k)]
            xl = data[:, structure.block_slice(l)]
            u_k = xk @ beta[structure.block_slice(k), :]
            u_l = xl @ beta[structure.block_slice(l), :]
            w_kl = xk @ (model.block(k, l) @ beta[structure.block_slice(l), :])
            g += (
                -0.5 * (np.einsum("im,ir->imr", w_kl, u_k) + np.einsum("ir,im->imr", w_kl, u_k))
                + np.einsum("im,ir->imr", u_l, u_k)
            )
    return np.einsum("imr,ist->mrst", g, g) / n, g, data


def test_limit_operator_products_equal_projected_z():
    solution = solve_mslca(WHITENED_111)
    _, g, data = _limit_operator_products_mc(WHITENED_111, solution, 5, seed=163)
    for i in range(5):
        projected = solution.beta.T @ z_operator(data[i], WHITENED_111) @ solution.beta
        np.testing.assert_allclose(g[i], projected, atol=1e-12)


def test_c_plugin_against_independent_oracles():
    solution = solve_mslca(WHITENED_111)
    closed_form = c_tensor_gaussian(WHITENED_111, solution)
    acc = _whitened_accumulator(WHITENED_111, 150_000, seed=167)
    plug_in = c_tensor(acc, solution, WHITENED_111)
    mc_oracle, _, _ = _limit_operator_products_mc(WHITENED_111, solution, 150_000, seed=173)
    assert np.abs(plug_in - mc_oracle).max() < 0.15
    assert np.abs(plug_in - closed_form).max() < 0.15
    assert np.abs(mc_oracle - closed_form).max() < 0.15


def test_sigma_matrix_simple_spectrum():
    solution = solve_mslca(WHITENED_111)
    assert solution.is_simple
    tensor = c_tensor_gaussian(WHITENED_111, solution)
    sigma = sigma_matrix(tensor, solution)
    np.testing.assert_allclose(sigma, sigma.T, atol=1e-9)
    assert np.all(np.diag(sigma) >= -1e-12)
    # callable provider agrees with the tensor form
    sigma_fn = sigma_matrix(lambda m, r, s, t: float(tensor[m, r, s, t]), solution)
    np.testing.assert_allclose(sigma, sigma_fn, atol=0)


def test_sigma_matrix_repeated_eigenvalues_guard():
    model = equicorrelation_model(3, 0.5)
    solution = solve_mslca(model)
    tensor = c_tensor_gaussian(model, solution)
    with pytest.raises(RepeatedEigenvaluesError):
        sigma_matrix(tensor, solution)


def test_quad_form_pvalue_zero_observed():
    dist = EigenChiSquareDist(np.ones(3), draws=10_000, seed=0)
    assert quad_form_pvalue(dist, 0.0) == 1.0


def test_quad_form_pvalue_chi2_twelve_quantile():
    # 21.0261 is the 0.95 quantile of chi-square(12)
    dist = EigenChiSquareDist(np.ones(12), draws=200_000, seed=5)
    assert quad_form_pvalue(dist, 21.0261) == pytest.approx(0.05, abs=0.005)


def test_quad_form_pvalue_single_weight_scaling():
    lam, x = 2.5, 4.0
    dist = EigenChiSquareDist([lam], draws=200_000, seed=7)
    expected = float(stats.chi2.sf(x / lam, df=1))
    assert quad_form_pvalue(dist, x) == pytest.approx(expected, abs=0.005)


def test_quad_form_pvalue_grid_against_chi2_cdf():
    d, draws = 3, 200_000
    dist = EigenChiSquareDist(np.ones(d), draws=draws, seed=11)
    for level in (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99):
        x = float(stats.chi2.ppf(level, df=d))
        p = quad_form_pvalue(dist, x)
        target = 1.0 - level
        se = np.sqrt(target * (1 - target) / draws)
        assert abs(p - target) <= 3 * se + 1e-12


def test_quad_form_pvalue_deterministic():
    dist = EigenChiSquareDist([2.0, 1.0, 0.5], draws=50_000, seed=13)
    assert quad_form_pvalue(dist, 3.7) == quad_form_pvalue(dist, 3.7)


def test_eigen_chi_square_dist_validation():
    with pytest.raises(NegativeWeightError):
        EigenChiSquareDist([1.0, -1e-3])
    dist = EigenChiSquareDist([0.5, 1.0, -1e-9])
    assert np.array_equal(dist.weights, [1.0, 0.5, 0.0])
    with pytest.raises(ValueError):
        quad_form_pvalue(dist, -1.0)


def test_elliptical_scale_plugin_two_point_design():
    from mslca import Dataset

    pattern = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    data = Dataset(BlockStructure((1, 1)), np.tile(pattern, (10, 1)))
    assert elliptical_scale_plugin(data) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_elliptical_scale_plugin_gaussian_and_t():
    model = CovarianceModel(BlockStructure((1, 1)), np.eye(2))
    rng = np.random.default_rng(179)
    gauss = whiten(sample_gaussian(model, 20000, rng))
    assert elliptical_scale_plugin(gauss) == pytest.approx(1.0, abs=0.08)
    heavy = whiten(sample_student_t(model, 10, 20000, rng))
    assert elliptical_scale_plugin(heavy) == pytest.approx(4.0 / 3.0, abs=0.25)


def test_elliptical_scale_plugin_needs_thirty_rows():
    from mslca import Dataset

    pattern = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    data = Dataset(BlockStructure((1, 1)), np.tile(pattern, (2, 1)))
    with pytest.raises(InsufficientSampleError):
        elliptical_scale_plugin(data)
