import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randbq.errors import FactorizationError, InvalidInputError
from randbq.kernels import (MATERN32, RBF, GramSystem, Kernel, gram_matrix, kernel_eval, kernel_matrix,
                            log_det, spd_solve)

finite = st.floats(-50, 50, allow_nan=False)
variants = st.sampled_from([RBF, MATERN32])
positive = st.floats(0.05, 20)


def test_point_values():
    assert kernel_eval(Kernel(RBF), 0.0, 0.0) == 1.0
    assert kernel_eval(Kernel(RBF), 0.0, 1.0) == pytest.approx(0.60653066, rel=1e-8)
    assert kernel_eval(Kernel(MATERN32, 2.0, 1.0), 0.0, 0.0) == 2.0


def test_matern_formula_and_alias():
    k = Kernel("matern-3/2", 1.0, 0.5)
    assert k.variant == MATERN32
    s = math.sqrt(3) * 0.3 / 0.5
    assert kernel_eval(k, 0.1, 0.4) == pytest.approx((1 + s) * math.exp(-s), rel=1e-14)


def test_multidimensional_eval_uses_euclidean_distance():
    k = Kernel(RBF)
    assert kernel_eval(k, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.exp(-12.5))


@pytest.mark.parametrize("bad", [dict(sigma_f2=0.0), dict(ell=-1.0), dict(ell=float("nan"))])
def test_invalid_hyperparameters(bad):
    with pytest.raises(InvalidInputError):
        Kernel(RBF, **bad)


def test_unknown_variant():
    with pytest.raises(InvalidInputError):
        Kernel("cosine")


def test_non_finite_input():
    with pytest.raises(InvalidInputError):
        kernel_eval(Kernel(RBF), float("inf"), 0.0)
    with pytest.raises(InvalidInputError):
        kernel_matrix(Kernel(RBF), [0.0, float("nan")], [0.0])


@given(variants, positive, positive, finite, finite)
def test_symmetry_and_maximum_at_zero(v, s2, ell, x, y):
    k = Kernel(v, s2, ell)
    assert kernel_eval(k, x, y) == kernel_eval(k, y, x)
    assert kernel_eval(k, x, x) == pytest.approx(s2)
    assert kernel_eval(k, x, y) <= kernel_eval(k, x, x)


def test_gram_small_cases():
    g = gram_matrix(Kernel(RBF), [0.0], nugget=0.0)
    np.testing.assert_array_equal(g.matrix, [[1.0]])
    np.testing.assert_array_equal(g.factor, [[1.0]])
    g = gram_matrix(Kernel(RBF), [0.0, 10.0], nugget=0.0)
    np.testing.assert_allclose(g.matrix, np.eye(2), atol=1e-21)
    np.testing.assert_allclose(np.diag(g.factor), [1.0, 1.0])


def test_matern_gram_reconstruction():
    g = gram_matrix(Kernel(MATERN32, 1.0, 0.21), np.linspace(-3, 3, 50), nugget=1e-8)
    rec = g.factor @ g.factor.T
    assert np.linalg.norm(rec - g.matrix) / np.linalg.norm(g.matrix) <= 1e-10
    assert np.all(np.diag(g.factor) > 0)
    np.testing.assert_allclose(g.matrix, g.matrix.T, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(variants, positive, st.floats(0.05, 5), st.lists(finite, min_size=1, max_size=60))
def test_gram_succeeds_with_nugget(v, s2, ell, pts):
    g = gram_matrix(Kernel(v, s2, ell), pts, nugget=1e-8 * s2 + 1e-12 * s2)
    rec = g.factor @ g.factor.T
    assert np.linalg.norm(rec - g.matrix) <= 1e-10 * np.linalg.norm(g.matrix)


def test_gram_is_read_only():
    g = gram_matrix(Kernel(RBF), [0.0, 1.0])
    with pytest.raises(ValueError):
        g.matrix[0, 0] = 5.0


def test_factorization_error_reports_pivot():
    with pytest.raises(FactorizationError) as ei:
        gram_matrix(Kernel(RBF), [0.0, 0.0, 1.0], nugget=0.0)
    assert ei.value.pivot == 2
    with pytest.raises(FactorizationError):
        GramSystem.from_matrix([[1.0, 2.0], [2.0, 1.0]])


def test_spd_solve_examples(rng):
    g = gram_matrix(Kernel(RBF), [0.0, 100.0], nugget=0.0)
    np.testing.assert_allclose(spd_solve(g, [3.0, 4.0]), [3.0, 4.0])
    np.testing.assert_allclose(spd_solve(GramSystem.from_matrix([[2.0]]), [6.0]), [3.0])
    a = rng.standard_normal((10, 10))
    g = GramSystem.from_matrix(a @ a.T + 10 * np.eye(10))
    r = rng.standard_normal(10)
    assert np.max(np.abs(g.matrix @ spd_solve(g, r) - r)) <= 1e-8
    with pytest.raises(InvalidInputError):
        spd_solve(g, np.ones(3))


def test_spd_solve_ill_conditioned(rng):
    q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    m = q @ np.diag(np.logspace(0, -8, 30)) @ q.T
    g = GramSystem.from_matrix(0.5 * (m + m.T))
    r = rng.standard_normal(30)
    resid = g.matrix @ spd_solve(g, r) - r
    assert np.max(np.abs(resid)) <= 1e-8 * np.max(np.abs(r))


def test_log_det_examples():
    assert log_det(GramSystem.from_matrix(np.eye(3))) == 0.0
    assert log_det(GramSystem.from_matrix([[math.e]])) == pytest.approx(1.0)
    assert log_det(GramSystem.from_matrix(np.diag([2.0, 8.0]))) == pytest.approx(math.log(16))
