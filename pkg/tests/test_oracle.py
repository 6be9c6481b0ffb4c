import math

import numpy as np
import pytest

from epinet.model import CustomKernel, FactorKernel, ModelParams, ParameterError
from epinet.oracle import (
    build_generator,
    duality_gap_exact,
    exact_density,
    expected_extinction_time,
    hit_probability,
    survival_probability,
)


def _near_zero_kernel():
    return CustomKernel(lambda x, y: 1e-12 * (x * y) ** -0.1, 0.1, 1e-13, 1e-11, validate=False)


def _params(n, beta=1.0, gamma=0.5, lam=0.5, kappa0=1.0, eta=0.0, kernel=None):
    k = FactorKernel(beta, gamma) if kernel is None else kernel
    return ModelParams(n, k, eta, kappa0, lam)


def test_state_count():
    sp = build_generator(_params(4))
    assert sp.n_states == 1024
    sp5 = build_generator(_params(5, lam=0.2))
    assert sp5.n_states == 32768


def test_size_cap():
    with pytest.raises(ParameterError):
        build_generator(_params(6))


def test_generator_rows_sum_to_zero():
    sp = build_generator(_params(3))
    rows = np.abs(np.asarray(sp.generator.sum(axis=1))).ravel()
    assert rows.max() < 1e-12


def test_generator_offdiag_nonnegative():
    sp = build_generator(_params(3, lam=0.7))
    mat = sp.generator.tocoo()
    off = mat.data[mat.row != mat.col]
    assert off.min() >= 0.0


def test_single_vertex():
    sp = build_generator(_params(1, lam=1.0))
    assert expected_extinction_time(sp) == pytest.approx(1.0, rel=1e-12)


def test_two_vertices_disconnected():
    p = ModelParams(2, _near_zero_kernel(), 0.0, 1.0, 1.0)
    sp = build_generator(p)
    # max of two independent exponentials has mean 3/2
    assert expected_extinction_time(sp) == pytest.approx(1.5, rel=1e-9)


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0])
def test_two_vertices_connected_closed_form(lam):
    # beta=2 caps p_12 at 1; the 3-state chain solves to E[T] = 3/2 + lam/2
    p = _params(2, beta=2.0, lam=lam)
    sp = build_generator(p)
    assert expected_extinction_time(sp) == pytest.approx(1.5 + lam / 2.0, rel=1e-10)


def test_extinction_time_with_explicit_graph():
    p = _params(2, beta=2.0, lam=1.0)
    sp = build_generator(p)
    # with p_12 = 1 the stationary mix is the full graph
    assert expected_extinction_time(sp, edges=[(1, 2)]) == pytest.approx(2.0, rel=1e-10)
    assert expected_extinction_time(sp, infected=[1], edges=[(1, 2)]) > 1.0


def test_exact_density_boundaries():
    sp = build_generator(_params(3))
    assert exact_density(sp, 0.0) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ParameterError):
        exact_density(sp, -1.0)


def test_exact_density_pure_death():
    p = ModelParams(2, _near_zero_kernel(), 0.0, 1.0, 1e-9)
    sp = build_generator(p)
    for t in (0.5, 1.0, 2.0):
        assert exact_density(sp, t) == pytest.approx(math.exp(-t), rel=1e-6)


def test_density_monotone_in_time():
    sp = build_generator(_params(3, lam=0.4))
    vals = [exact_density(sp, t) for t in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_extinction_time_monotone_in_lambda():
    vals = [
        expected_extinction_time(build_generator(_params(3, lam=lam)))
        for lam in (0.1, 0.3, 0.6, 0.9)
    ]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_duality_exact_all_singletons():
    sp = build_generator(_params(3, lam=0.5))
    for a in (1, 2, 3):
        for b in (1, 2, 3):
            p_ab, p_ba = duality_gap_exact(sp, [a], [b], 1.0)
            assert abs(p_ab - p_ba) < 1e-8


def test_duality_exact_sets():
    sp = build_generator(_params(3, lam=0.5))
    p_ab, p_ba = duality_gap_exact(sp, [1, 2], [3], 1.5)
    assert abs(p_ab - p_ba) < 1e-8
    p_ab, p_ba = duality_gap_exact(sp, [1], [2, 3], 0.7)
    assert abs(p_ab - p_ba) < 1e-8


def test_hit_probability_sanity():
    sp = build_generator(_params(3, lam=0.5))
    # target includes the initially infected vertex: probability at t=0 is 1
    assert hit_probability(sp, 0.0, [1], [1, 2]) == pytest.approx(1.0, rel=1e-12)
    assert hit_probability(sp, 0.0, [1], [2]) == pytest.approx(0.0, abs=1e-12)


def test_survival_probability_decreasing():
    sp = build_generator(_params(3, lam=0.5))
    vals = [survival_probability(sp, t) for t in (0.0, 0.5, 1.0, 3.0)]
    assert vals[0] == pytest.approx(1.0, rel=1e-12)
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_write_generator_triplets():
    import io

    sp = build_generator(_params(2, beta=2.0, lam=1.0))
    buf = io.StringIO()
    from epinet.oracle import write_generator

    write_generator(sp, buf)
    lines = [ln.split() for ln in buf.getvalue().splitlines() if ln]
    assert lines
    total = np.zeros(sp.n_states)
    for i, j, rate in lines:
        i, j, rate = int(i), int(j), float(rate)
        assert i != j and rate > 0
        total[i] += rate
    diag = -sp.generator.diagonal()
    assert np.allclose(total, diag, atol=1e-12)
