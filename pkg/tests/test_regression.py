import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from bdd.errors import DegenerateDesign, NonpositiveBandwidth
from bdd.regression import (KERNELS, Kernel, basis_biv, basis_uni, kernel_weight, norm_ppf,
                            wls, z_crit)


def test_basis_uni_examples():
    assert_allclose(basis_uni(0.5, 2), [0.5, 0.25])
    assert basis_uni(0.7, 0).shape == (0,)
    assert_allclose(basis_uni(-2.0, 3), [-2, 4, -8])


def test_basis_biv_examples():
    assert_allclose(basis_biv([1, 2], 1), [1, 2])
    assert_allclose(basis_biv([1, 2], 2), [1, 2, 1, 2, 4])
    assert_allclose(basis_biv([3, 0], 3), [3, 0, 9, 0, 0, 27, 0, 0, 0])


@pytest.mark.parametrize("p", range(6))
def test_basis_biv_length(p):
    assert basis_biv(np.zeros((4, 2)), p).shape == (4, p * (p + 3) // 2)


def test_kernel_examples():
    tri = Kernel("triangular")
    assert kernel_weight(tri, 0.0, 1.0) == 1.0
    assert kernel_weight(tri, 1.0, 1.0) == 0.0
    assert kernel_weight(Kernel("uniform", radial=True), [0.6, 0.8], 1.0) == 1.0
    assert kernel_weight(Kernel("epanechnikov"), 0.5, 1.0) == pytest.approx(0.5625)


def test_kernel_rejects_nonpositive_h():
    with pytest.raises(NonpositiveBandwidth):
        kernel_weight(Kernel(), 0.1, 0.0)


def test_norm_ppf():
    assert z_crit(0.05) == pytest.approx(1.959963984540054, abs=1e-9)
    assert norm_ppf(0.5) == 0.0


def test_wls_weighted_mean():
    fit = wls(np.ones((3, 1)), [1, 2, 3], np.ones(3))
    assert fit.coefficients[0] == pytest.approx(2.0)


def test_wls_exact_line():
    Z = np.column_stack([np.ones(3), [0, 1, 2]])
    fit = wls(Z, [1, 3, 5], np.ones(3))
    assert_allclose(fit.coefficients, [1, 2])
    assert_allclose(fit.residuals, 0, atol=1e-12)
    assert_allclose(fit.covariance, 0, atol=1e-20)


def test_wls_normal_equation_oracle():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((50, 4))
    Y = rng.standard_normal(50)
    W = rng.uniform(0.1, 2, 50)
    beta = np.linalg.solve(Z.T @ (W[:, None] * Z), Z.T @ (W * Y))
    assert_allclose(wls(Z, Y, W).coefficients, beta, rtol=1e-8)


def test_wls_hc0_matches_sandwich_oracle():
    rng = np.random.default_rng(4)
    Z = np.column_stack([np.ones(40), rng.standard_normal((40, 2))])
    Y = rng.standard_normal(40)
    W = rng.uniform(0.5, 1.5, 40)
    fit = wls(Z, Y, W, vce="HC0")
    bread = np.linalg.inv(Z.T @ (W[:, None] * Z))
    e = Y - Z @ fit.coefficients
    meat = (Z * ((W * e) ** 2)[:, None]).T @ Z
    assert_allclose(fit.covariance, bread @ meat @ bread, rtol=1e-8)
    assert_allclose(fit.influence.T @ fit.influence, fit.covariance, rtol=1e-10)


def test_wls_drops_collinear_column():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(30)
    Z = np.column_stack([np.ones(30), x, 2 * x])
    fit = wls(Z, 1 + x, np.ones(30))
    assert fit.dropped_columns == [2]
    assert np.isnan(fit.coefficients[2])
    assert_allclose(fit.coefficients[:2], [1, 1])


def test_wls_zero_weights_error():
    with pytest.raises(DegenerateDesign):
        wls(np.ones((3, 1)), [1, 2, 3], np.zeros(3))


def test_wls_zero_weight_rows_ignored():
    fit = wls(np.ones((4, 1)), [1, 2, 3, 100], [1, 1, 1, 0])
    assert fit.effective_n == 3
    assert fit.coefficients[0] == pytest.approx(2.0)


# -- properties ------------------------------------------------------------------

problem = st.tuples(st.integers(0, 10_000), st.integers(10, 60), st.integers(1, 5))


def _draw(seed, n, k):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((n, k)), rng.standard_normal(n), rng.uniform(0.1, 3, n), rng)


@settings(max_examples=60, deadline=None)
@given(problem, st.floats(1e-3, 1e3), st.sampled_from(["HC0", "HC1", "HC3"]))
def test_weight_scaling_invariance(prob, c, vce):
    Z, Y, W, _ = _draw(*prob)
    a, b = wls(Z, Y, W, vce), wls(Z, Y, c * W, vce)
    assert_allclose(b.coefficients, a.coefficients, rtol=1e-10, atol=1e-12)
    assert_allclose(b.covariance, a.covariance, rtol=1e-8, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(problem)
def test_permutation_invariance(prob):
    Z, Y, W, rng = _draw(*prob)
    perm = rng.permutation(len(Y))
    a, b = wls(Z, Y, W), wls(Z[perm], Y[perm], W[perm])
    assert_allclose(b.coefficients, a.coefficients, rtol=1e-9, atol=1e-12)
    assert_allclose(b.covariance, a.covariance, rtol=1e-8, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(problem)
def test_nesting_orthogonal_column(prob):
    Z, Y, W, rng = _draw(*prob)
    # new column W-orthogonal to Y and to the existing columns
    v = rng.standard_normal(len(Y))
    A = np.column_stack([Z, Y])
    v = v - A @ np.linalg.lstsq(A * np.sqrt(W)[:, None], v * np.sqrt(W), rcond=None)[0]
    a, b = wls(Z, Y, W), wls(np.column_stack([Z, v]), Y, W)
    assert_allclose(b.coefficients[:-1], a.coefficients, rtol=1e-8, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(problem)
def test_covariance_psd_and_normal_equations(prob):
    Z, Y, W, _ = _draw(*prob)
    fit = wls(Z, Y, W)
    assert np.linalg.eigvalsh(fit.covariance).min() >= -1e-12 * np.abs(fit.covariance).max()
    g = Z.T @ (W * (Y - Z @ fit.coefficients))
    assert np.abs(g).max() <= 1e-8 * (np.abs(Z.T @ (W * Y)).max() + 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 5))
def test_basis_consistency(u1, u2, p):
    assert_allclose(basis_biv([u1, u2], p)[:2], [u1, u2])
    b = basis_uni(u1, p)
    assert_allclose(b[1:], u1 * b[:-1])


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(KERNELS), st.floats(1.0001, 50), st.floats(0.01, 10))
def test_kernel_zero_outside_support(kind, ratio, h):
    assert kernel_weight(Kernel(kind), ratio * h, h) == 0.0
    assert kernel_weight(Kernel(kind, radial=True), [0.0, -ratio * h], h) == 0.0
