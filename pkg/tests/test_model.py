import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from epinet.model import (
    CustomKernel,
    FactorKernel,
    KernelBoundsError,
    ModelParams,
    ParameterError,
    PreferentialAttachmentKernel,
    connection_probability,
    expected_degree,
    kernel_bounds,
    kernel_value,
    probability_matrix,
    probability_row,
    update_rate,
)

TOL = 1e-12


# ---------------------------------------------------------------------------
# kernel_value
# ---------------------------------------------------------------------------

def test_factor_kernel_value():
    k = FactorKernel(1.0, 0.5)
    assert kernel_value(k, 0.01, 0.01) == pytest.approx(100.0, rel=TOL)


def test_pa_kernel_value():
    k = PreferentialAttachmentKernel(1.0, 0.5)
    assert kernel_value(k, 0.25, 1.0) == pytest.approx(2.0, rel=TOL)


def test_kernel_value_at_one():
    assert kernel_value(FactorKernel(1.0, 0.3), 1.0, 1.0) == pytest.approx(1.0)
    assert kernel_value(PreferentialAttachmentKernel(1.0, 0.3), 1.0, 1.0) == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [0.0, -0.5, 1.5])
def test_kernel_value_domain(bad):
    k = FactorKernel(1.0, 0.5)
    with pytest.raises(ParameterError):
        kernel_value(k, bad, 0.5)
    with pytest.raises(ParameterError):
        kernel_value(k, 0.5, bad)


@pytest.mark.parametrize("beta,gamma", [(0.0, 0.5), (-1.0, 0.5), (1.0, 0.0), (1.0, 1.0), (1.0, 1.5)])
def test_kernel_param_validation(beta, gamma):
    with pytest.raises(ParameterError):
        FactorKernel(beta, gamma)
    with pytest.raises(ParameterError):
        PreferentialAttachmentKernel(beta, gamma)


@given(
    x=st.floats(1e-3, 1.0),
    y=st.floats(1e-3, 1.0),
    gamma=st.floats(0.05, 0.95),
    beta=st.floats(0.1, 5.0),
)
@settings(max_examples=60, deadline=None)
def test_kernel_symmetry(x, y, gamma, beta):
    for k in (FactorKernel(beta, gamma), PreferentialAttachmentKernel(beta, gamma)):
        assert kernel_value(k, x, y) == pytest.approx(kernel_value(k, y, x), rel=1e-12)


# ---------------------------------------------------------------------------
# connection probabilities and rates
# ---------------------------------------------------------------------------

def _params(n=100, beta=1.0, gamma=0.5, eta=0.0, kappa0=1.0, lam=0.5, kind=FactorKernel):
    return ModelParams(n, kind(beta, gamma), eta, kappa0, lam)


def test_connection_probability_values():
    p = _params()
    assert connection_probability(p, 1, 2) == pytest.approx(0.7071067811865476, rel=1e-10)
    assert connection_probability(p, 99, 100) == pytest.approx(0.010050378, rel=1e-6)


def test_connection_probability_cap():
    p = _params(n=2, beta=100.0)
    assert connection_probability(p, 1, 2) == 1.0


def test_connection_probability_errors():
    p = _params(n=10)
    with pytest.raises(ParameterError):
        connection_probability(p, 3, 3)
    with pytest.raises(ParameterError):
        connection_probability(p, 0, 3)
    with pytest.raises(ParameterError):
        connection_probability(p, 1, 11)


def test_connection_probability_symmetric_and_monotone():
    p = _params(n=50, gamma=0.7, kind=PreferentialAttachmentKernel)
    for i, j in [(1, 2), (3, 40), (10, 50)]:
        assert connection_probability(p, i, j) == connection_probability(p, j, i)
    row1 = probability_row(p, 7)
    # non-increasing over partner index (skipping the zeroed self entry)
    vals = np.delete(row1, 6)
    assert np.all(np.diff(vals) <= 1e-15)


def test_update_rate_values():
    p = _params(n=100, gamma=0.5, eta=1.0, kappa0=2.0)
    assert update_rate(p, 1) == pytest.approx(20.0, rel=TOL)
    assert update_rate(p, 100) == pytest.approx(2.0, rel=TOL)
    p0 = _params(n=100, eta=0.0, kappa0=2.0)
    for i in (1, 17, 100):
        assert update_rate(p0, i) == pytest.approx(2.0, rel=TOL)


def test_update_rate_monotone():
    p = _params(n=64, gamma=0.6, eta=1.5, kappa0=0.7)
    rates = [update_rate(p, i) for i in range(1, 65)]
    assert np.all(np.diff(rates) <= 1e-15)


# ---------------------------------------------------------------------------
# kernel bounds
# ---------------------------------------------------------------------------

def test_kernel_bounds_factor():
    c1, c2 = kernel_bounds(FactorKernel(1.0, 0.5))
    assert c1 == 1.0
    assert 2.0 < c2 < 2.001
    c1, _ = kernel_bounds(FactorKernel(2.0, 0.25))
    assert c1 == 2.0


def test_kernel_bounds_pa():
    c1, c2 = kernel_bounds(PreferentialAttachmentKernel(1.0, 0.5))
    assert c1 == 1.0
    assert 4.0 < c2 < 4.001


@pytest.mark.parametrize(
    "kernel",
    [
        FactorKernel(1.0, 0.5),
        FactorKernel(2.0, 0.25),
        FactorKernel(0.5, 0.8),
        PreferentialAttachmentKernel(1.0, 0.5),
        PreferentialAttachmentKernel(1.5, 0.7),
        PreferentialAttachmentKernel(0.8, 0.2),
    ],
)
def test_kernel_sandwich_on_grid(kernel):
    c1, c2 = kernel_bounds(kernel)
    g = kernel.gamma
    for a in np.linspace(0.005, 0.995, 100):
        lo = c1 * a ** -g
        p_a1 = kernel_value(kernel, a, 1.0)
        integral, _ = quad(lambda s: float(kernel(a, s)), 0.0, 1.0, limit=200)
        assert lo <= p_a1 * (1 + 1e-12)
        assert p_a1 <= integral * (1 + 1e-9)
        assert integral < c2 * a ** -g


# ---------------------------------------------------------------------------
# custom kernels
# ---------------------------------------------------------------------------

def test_custom_kernel_valid():
    # a factor kernel in disguise
    k = CustomKernel(lambda x, y: 0.5 * (x * y) ** -0.3, gamma=0.3, c1=0.5, c2=0.8)
    assert kernel_value(k, 0.5, 0.5) == pytest.approx(0.5 * 0.25 ** -0.3)
    assert kernel_bounds(k) == (0.5, 0.8)


def test_custom_kernel_asymmetric_rejected():
    with pytest.raises(KernelBoundsError):
        CustomKernel(lambda x, y: x ** -0.3 * y ** -0.1, gamma=0.3, c1=0.1, c2=10.0)


def test_custom_kernel_increasing_rejected():
    with pytest.raises(KernelBoundsError):
        CustomKernel(lambda x, y: x * y, gamma=0.3, c1=1e-6, c2=10.0)


def test_custom_kernel_bad_bounds_rejected():
    # c1 too large for p(a,1)
    with pytest.raises(KernelBoundsError):
        CustomKernel(lambda x, y: 0.5 * (x * y) ** -0.3, gamma=0.3, c1=5.0, c2=6.0)


def test_custom_kernel_bound_ordering():
    with pytest.raises(ParameterError):
        CustomKernel(lambda x, y: (x * y) ** -0.3, gamma=0.3, c1=2.0, c2=1.0, validate=False)


# ---------------------------------------------------------------------------
# expected degree
# ---------------------------------------------------------------------------

def test_expected_degree_two_vertices():
    p = _params(n=2)
    assert expected_degree(p, 1) == pytest.approx(connection_probability(p, 1, 2), rel=TOL)


def test_expected_degree_lambda_independent():
    a = _params(n=30, lam=0.1)
    b = _params(n=30, lam=0.9)
    for i in (1, 15, 30):
        assert expected_degree(a, i) == expected_degree(b, i)


def test_expected_degree_brute_force():
    p = _params(n=100)
    for i in (1, 37, 100):
        brute = sum(
            min(1.0, kernel_value(p.kernel, i / 100, j / 100) / 100)
            for j in range(1, 101)
            if j != i
        )
        assert expected_degree(p, i) == pytest.approx(brute, rel=1e-12)


def test_probability_matrix_consistency():
    p = _params(n=40, gamma=0.6, kind=PreferentialAttachmentKernel)
    mat = probability_matrix(p)
    assert np.allclose(mat, mat.T)
    assert np.all(np.diag(mat) == 0)
    assert mat.max() <= 1.0
    assert mat[4, 20] == pytest.approx(connection_probability(p, 5, 21), rel=TOL)


# ---------------------------------------------------------------------------
# ModelParams
# ---------------------------------------------------------------------------

def test_params_reject_negative_eta():
    with pytest.raises(ParameterError):
        ModelParams(10, FactorKernel(1.0, 0.5), eta=-0.1)


def test_params_warn_large_lambda():
    with pytest.warns(UserWarning):
        ModelParams(10, FactorKernel(1.0, 0.5), lam=1.5)


def test_params_lambda_zero_allowed():
    p = ModelParams(10, FactorKernel(1.0, 0.5), lam=0.0)
    assert p.lam == 0.0


def test_params_mapping_round_trip():
    src = {
        "n": "50",
        "kernel": "pa",
        "beta": "1.5",
        "gamma": "0.7",
        "eta": "1.0",
        "kappa0": "2.0",
        "lambda": "0.3",
    }
    p = ModelParams.from_mapping(src)
    assert isinstance(p.kernel, PreferentialAttachmentKernel)
    again = ModelParams.from_mapping(p.to_mapping())
    assert again == p


def test_params_mapping_unknown_key():
    with pytest.raises(ParameterError):
        ModelParams.from_mapping({"n": "5", "kernel": "factor", "bogus": "1"})


def test_params_mapping_bad_kernel():
    with pytest.raises(ParameterError):
        ModelParams.from_mapping({"n": "5", "kernel": "lattice"})
