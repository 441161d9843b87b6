import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from forchmix.errors import ContractError, DomainError
from forchmix.kernel import (ClosureParams, check_sqrt_monotonicity, check_vector_continuity,
                             check_vector_monotonicity, f_array, f_closure, forchheimer_potential, g_array,
                             g_closure, g_jacobian_array, rho, signed_sqrt_difference)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec2 = st.tuples(finite, finite).map(np.array)
positive = st.floats(1e-2, 1e2)


@pytest.mark.parametrize("gamma, s, expected", [(1.0, 4.0, 2.0), (1.0, 0.0, 0.0), (2.0, -9.0, -6.0)])
def test_rho_values(gamma, s, expected):
    assert rho(ClosureParams(gamma=gamma), s) == pytest.approx(expected, abs=1e-15)


def test_rho_rejects_nonfinite():
    with pytest.raises(DomainError):
        rho(ClosureParams(), np.inf)


@pytest.mark.parametrize("alpha, beta, v, expected", [
    (1.0, 1.0, (1, 0), (2, 0)),
    (1.0, 1.0, (0, 0), (0, 0)),
    (2.0, 0.5, (0, 4), (0, 16)),
])
def test_g_closure_values(alpha, beta, v, expected):
    out = g_closure(ClosureParams(alpha, beta), np.array(v, float))
    np.testing.assert_allclose(out, expected, atol=1e-15)


@pytest.mark.parametrize("alpha, beta, g, expected", [
    (1.0, 1.0, (2, 0), (1, 0)),
    (1.0, 1.0, (0, 0), (0, 0)),
    (4.0, 1.0, (0, 5), (0, 1)),
])
def test_f_closure_values(alpha, beta, g, expected):
    # expected magnitudes are the positive roots of beta r^2 + alpha r = |g|
    out = f_closure(ClosureParams(alpha, beta), np.array(g, float))
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_f_closure_rejects_nan():
    with pytest.raises(DomainError):
        f_closure(ClosureParams(), np.array([np.nan, 0.0]))


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(gamma=-1.0), dict(beta=-0.1), dict(smoothing_delta=-1.0)])
def test_params_reject_bad_values(kwargs):
    with pytest.raises(ContractError):
        ClosureParams(**kwargs)


def test_params_reject_nonfinite():
    with pytest.raises(DomainError):
        ClosureParams(alpha=np.nan)


@pytest.mark.parametrize("x, y, expected", [((1, 0), (-1, 0), (4, 4)), ((1, 0), (0, 0), (1, 0.5)), ((3, 4), (3, 4), (0, 0))])
def test_vector_monotonicity_examples(x, y, expected):
    lhs, rhs = check_vector_monotonicity(np.array(x, float), np.array(y, float))
    assert (lhs, rhs) == pytest.approx(expected, abs=1e-14)


def test_vector_checks_reject_dimension_mismatch():
    with pytest.raises(ContractError):
        check_vector_monotonicity(np.zeros(2), np.zeros(3))
    with pytest.raises(ContractError):
        check_vector_continuity(np.zeros(2), np.zeros(3))


def test_sqrt_monotonicity_examples():
    hl, hr, _, _ = check_sqrt_monotonicity(1.0, -1.0)
    assert (hl, hr) == pytest.approx((2.0, 2.0))
    assert check_sqrt_monotonicity(1.0, 0.0) == pytest.approx((1.0, np.sqrt(2.0), 1.0, 1.0))
    _, _, ml, mr = check_sqrt_monotonicity(4.0, 1.0)
    assert (ml, mr) == pytest.approx((3.0, 3.0))
    assert check_sqrt_monotonicity(0.0, 0.0) == (0.0, 0.0, 0.0, 0.0)


def test_signed_sqrt_difference_is_accurate_for_close_values():
    x, y = 1e8 * (1 + 1e-12), 1e8
    # d/dt sqrt(t) = 1/(2 sqrt t)
    assert signed_sqrt_difference(x, y) == pytest.approx((x - y) / (2e4), rel=1e-9)


@given(vec2, vec2)
def test_continuity_inequality(x, y):
    lhs, rhs = check_vector_continuity(x, y)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


@given(vec2, vec2)
def test_monotonicity_inequality(x, y):
    lhs, rhs = check_vector_monotonicity(x, y)
    assert lhs >= rhs * (1 - 1e-12) - 1e-300


@given(finite, finite)
def test_sqrt_inequalities(x, y):
    hl, hr, ml, mr = check_sqrt_monotonicity(x, y)
    assert hl <= hr * (1 + 1e-12) + 1e-300
    assert ml <= mr * (1 + 1e-12) + 1e-300


@given(positive, st.floats(0.0, 1e2), vec2)
def test_round_trip(alpha, beta, g):
    p = ClosureParams(alpha, beta)
    back = g_closure(p, f_closure(p, g))
    assert np.linalg.norm(back - g) <= 1e-10 * (1 + np.linalg.norm(g))


@given(positive, positive, vec2, vec2)
def test_closure_monotonicity(alpha, beta, u, v):
    p = ClosureParams(alpha, beta)
    lhs = (g_closure(p, u) - g_closure(p, v)) @ (u - v)
    rhs = 0.5 * beta * np.linalg.norm(u - v) ** 3
    assert lhs >= rhs * (1 - 1e-12) - 1e-9 * (1 + abs(rhs))


@given(finite, finite, positive)
def test_rho_odd_and_monotone(x, y, gamma):
    p = ClosureParams(gamma=gamma)
    assert rho(p, -x) == -rho(p, x)
    assert (rho(p, x) - rho(p, y)) * (x - y) >= 0


def test_f_is_colinear_and_solves_magnitude_equation():
    rng = np.random.default_rng(3)
    g = rng.standard_normal((50, 2)) * 10
    alpha, beta = 0.7, 2.3
    m = f_array(alpha, beta, g)
    r = np.linalg.norm(m, axis=1)
    np.testing.assert_allclose(beta * r ** 2 + alpha * r, np.linalg.norm(g, axis=1), rtol=1e-13)
    np.testing.assert_allclose(m[:, 0] * g[:, 1] - m[:, 1] * g[:, 0], 0.0, atol=1e-12)


def test_f_small_and_large_arguments():
    for mag in (0.0, 1e-14, 1e6):
        g = np.array([mag, 0.0])
        back = g_array(1.0, 1.0, f_array(1.0, 1.0, g))
        assert np.linalg.norm(back - g) <= 1e-10 * (1 + mag)
    # linear limit
    np.testing.assert_allclose(f_array(2.0, 0.0, np.array([3.0, 1.0])), [1.5, 0.5])


def test_g_jacobian_matches_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.standard_normal(2)
        J = g_jacobian_array(1.3, 0.8, v)
        h = 1e-6
        fd = np.column_stack([(g_array(1.3, 0.8, v + h * e) - g_array(1.3, 0.8, v - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(J, fd, rtol=1e-7, atol=1e-8)


def test_smoothed_jacobian_is_finite_at_zero():
    J = g_jacobian_array(1.0, 1.0, np.zeros(2), delta=1e-6)
    np.testing.assert_allclose(J, (1.0 + 1e-6) * np.eye(2))


def test_potential_derivative_is_flux_magnitude():
    r = np.linspace(0.1, 5, 20)
    h = 1e-5
    for a, b in ((1.0, 1.0), (0.5, 3.0), (2.0, 0.0)):
        d = (forchheimer_potential(a, b, r + h) - forchheimer_potential(a, b, r - h)) / (2 * h)
        expected = np.linalg.norm(f_array(a, b, np.column_stack([r, 0 * r])), axis=1)
        np.testing.assert_allclose(d, expected, rtol=1e-8)
