import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from wassbound import bounds
from wassbound.certify import tandem_rate
from wassbound.distributions import Deterministic, Exponential, Laplace, TwoPoint
from wassbound.models import Tandem, TreeSpec, tree_decompose


def test_polynomial_pareto_value():
    assert math.isclose(bounds.polynomial_bound(0, 2, 91 / 216), 91 / 108, rel_tol=1e-14)
    assert bounds.polynomial_bound(1, 2, 1.0) == pytest.approx(1.0, rel=1e-15)


def _poly_fraction(n, b: Fraction):
    # exact rational product, then one float power for the exponent
    top = math.ceil(b)
    prod = Fraction(1)
    for k in range(1, top):
        prod *= b / (n + k) * Fraction(top - k) / (b - k)
    return float(prod) ** float((b - 1) / (top - 1))


@pytest.mark.parametrize("n, b", [(3, Fraction(5, 2)), (0, Fraction(7, 4)), (17, Fraction(33, 10)),
                                  (1000, Fraction(9, 2))])
def test_polynomial_noninteger_against_rationals(n, b):
    assert math.isclose(bounds.polynomial_bound(n, float(b), 1.0), _poly_fraction(n, b), rel_tol=1e-12)


def test_polynomial_b_one_is_edv():
    assert bounds.polynomial_bound(123, 1.0, 0.7) == 0.7
    # and the b -> 1 limit from above agrees
    assert math.isclose(bounds.polynomial_bound(123, 1 + 1e-9, 0.7), 0.7, rel_tol=1e-6)


@pytest.mark.parametrize("m", [2, 3, 5])
def test_polynomial_continuous_at_integers(m):
    n = np.array([0, 1, 10, 1000])
    assert np.allclose(bounds.polynomial_bound(n, m - 1e-12, 1.0), bounds.polynomial_bound(n, m, 1.0),
                       rtol=1e-8, atol=0)


@pytest.mark.parametrize("b", [1.5, 2.0, 3.7])
def test_polynomial_rate_bounded(b):
    n = np.geomspace(1, 1e6, 200)
    scaled = bounds.polynomial_bound(n, b, 1.0) * n ** (b - 1)
    assert np.all(np.isfinite(scaled)) and scaled.max() <= b ** (b - 1) * 10


def test_polynomial_log_space_large_n():
    v = bounds.polynomial_bound(1e9, 6.0, 1.0)
    assert v > 0 and math.isclose(v, 6 ** 5 * math.prod(1 / (1e9 + k) for k in range(1, 6)), rel_tol=1e-10)


def test_polynomial_rejects_bad_inputs():
    with pytest.raises(ValueError):
        bounds.polynomial_bound(1, 0.5, 1.0)
    with pytest.raises(ValueError):
        bounds.polynomial_bound(-1, 2.0, 1.0)


def test_scaled_examples():
    n = np.arange(0, 50)
    assert np.allclose(bounds.polynomial_bound_scaled(n, 2, 1.0, 91 / 216), (91 / 108) / (n + 1), rtol=1e-14)
    assert np.all(bounds.polynomial_bound_scaled(n, 2, 1.0, 91 / 216) <= 0.9 / (n + 1))
    assert np.allclose(bounds.polynomial_bound_scaled(n, 1, 2.0, 0.8), 0.4)


def test_scaled_nonincreasing():
    v = bounds.polynomial_bound_scaled(np.arange(10_001), 3, 0.7, 1.3)
    assert np.all(np.diff(v) <= 0)


def test_geometric_examples():
    assert bounds.geometric_bound(0, 0.5, 1.0) == 2.0
    assert math.isclose(bounds.geometric_bound(10, 0.5, 1.0), 2.0 ** -9, rel_tol=1e-14)
    v = bounds.geometric_bound(np.arange(30), 0.3, 2.0)
    assert np.allclose(v[1:] / v[:-1], 0.7, rtol=1e-13)
    with pytest.raises(ValueError):
        bounds.geometric_bound(1, 1.0, 1.0)


def test_semi_exponential_examples():
    assert math.isclose(bounds.semi_exponential_rate(math.e, 1.0), 2.0, rel_tol=1e-15)
    assert math.isclose(bounds.semi_exponential_bound(4, math.e, 1.0, 1.0), math.e ** 2 * 4 * math.e ** -4,
                        rel_tol=1e-13)
    assert math.isclose(bounds.semi_exponential_bound(4, math.e, 1.0, 1.0), 0.5413, abs_tol=1e-4)
    assert bounds.semi_exponential_bound(1e6, math.e, 1.0, 1.0) * 1e6 ** 5 < 1e-300
    with pytest.raises(ValueError):
        bounds.semi_exponential_bound(0, math.e, 1.0, 1.0)


def test_semi_exponential_eventually_nonincreasing():
    # log of the curve is maximal at n = ((1 + lam)/c)^(1 + lam), which is 1 here
    v = bounds.semi_exponential_bound(np.arange(1, 2000), math.e, 1.0, 1.0)
    assert np.all(np.diff(v) <= 0)


def test_rbm_parameters_and_degenerate():
    b, lam = bounds.rbm_parameters(1.0, 1.0)
    assert b == 1.0 and math.isclose(lam, math.exp(-0.5), rel_tol=1e-15)
    assert bounds.rbm_bound(3.0, 1.0, 1.0, 1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        bounds.rbm_bound(3.0, 1.0, 1.0, 1.0, 0.9)
    with pytest.raises(ValueError):
        bounds.rbm_bound(1.0, 1.0, 1.0, 1.0, 1.5)


def test_ht_m1_constant():
    Y = Laplace(1.0)
    b = 1.0
    v = bounds.ht_uniform_bound(np.array([1, 10, 1000]), 1, b, Y)
    # E Y+ = 1/2, E(Y+)^2 = 1 for the unit Laplace
    want = 4 * ((1 + 2 * 0.5 + 1.0) / 2 + 2 * 0.5)
    assert np.allclose(v, want, rtol=1e-12)


def test_ht_moments_by_quadrature():
    Y = Laplace(1.0)
    pk = bounds.ht_moment_pack(2, 1.0, Y)
    dens = lambda y: 0.5 * math.exp(-abs(y))  # noqa: E731
    e2y = 2 * integrate.quad(lambda y: (2 + y) ** 2 * dens(y), 0, np.inf)[0]
    e1yp = 0.5 + integrate.quad(lambda y: (1 + y) ** 3 * dens(y), 0, np.inf)[0]
    assert math.isclose(pk["E(2+|Y|)^m"], e2y, rel_tol=1e-9)
    assert math.isclose(pk["E(1+Y+)^(m+1)"], e1yp, rel_tol=1e-9)


@pytest.mark.parametrize("m", [2, 3])
def test_ht_ratio_scaling(m):
    n = np.array([5.0, 50.0, 500.0])
    v1 = bounds.ht_uniform_bound(n, m, 1.0, Laplace(1.0))
    v2 = bounds.ht_uniform_bound(2 * n, m, 1.0, Laplace(1.0))
    assert np.allclose(v1 / v2, 2.0 ** (m - 1), rtol=1e-13)


def test_tandem_bound_closed_form():
    lam = 2 / math.e
    v0 = bounds.tandem_bound(0, 0.5, lam, Exponential(1.0))
    assert math.isclose(v0, 2 / (1 - lam), rel_tol=1e-14)
    v = bounds.tandem_bound(np.arange(20), 0.5, lam, Exponential(1.0))
    assert np.allclose(v[1:] / v[:-1], lam, rtol=1e-13)
    assert bounds.tandem_bound(3, 0.5, lam, Deterministic(0.0)) == 0.0


def test_tandem_premultiplier_reduces_to_closed_form_from_empty():
    model = Tandem((1.5, 1.2), Deterministic(2.0), Exponential(1.0))
    a = 0.4
    est = bounds.tandem_premultiplier(model, np.zeros(2), a, 400_000, seed=3)
    want = (Exponential(1.0).mgf(a) - 1) / a
    assert abs(est.value - want) < 4 * est.stderr


def test_exp_secant():
    assert bounds.exp_secant(1.0, 1.0) == math.e
    assert math.isclose(bounds.exp_secant(1.0, 0.0), math.e - 1, rel_tol=1e-15)
    near = bounds.exp_secant(2.0, 2.0 - 1e-13)
    assert math.isclose(near, math.exp(2.0), rel_tol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_exp_secant_symmetric_and_between(u, v):
    s = bounds.exp_secant(u, v)
    assert math.isclose(s, bounds.exp_secant(v, u), rel_tol=1e-12)
    lo, hi = sorted((math.exp(u), math.exp(v)))
    assert lo * (1 - 1e-12) <= s <= hi * (1 + 1e-12)


def test_tree_single_chain_is_tandem():
    Z, T = Exponential(1.0), Deterministic(2.0)
    tree = TreeSpec(1, 1, (1.5, 1.2), {})
    val, lam, a, _ = bounds.tree_bound(np.arange(5), tree_decompose(tree, Z, T), Z, T)
    a1, lam1 = tandem_rate(Z, T, 1.2, 0.99)
    assert (lam, a) == (lam1, a1)
    assert np.allclose(val, bounds.tandem_bound(np.arange(5), a1, lam1, Z), rtol=1e-15)


def test_tree_symmetric():
    Z, T = Exponential(1.0), Deterministic(2.0)
    tree = TreeSpec(2, 1, (2.0, 0.7, 0.7), {0: (0.5, 0.5)})
    _, lam, a, per = bounds.tree_bound(1, tree_decompose(tree, Z, T), Z, T)
    assert per[0] == per[1] and lam == per[0][1] and a == per[0][0]


def test_tree_asymmetric_takes_slowest():
    Z, T = Exponential(1.0), Deterministic(2.0)
    tree = TreeSpec(2, 2, (0.7, 0.4, 0.45, 0.2, 0.22, 0.25, 0.2), {0: (0.5, 0.5), 1: (0.5, 0.5), 2: (0.5, 0.5)})
    paths = tree_decompose(tree, Z, T)
    _, lam, a, per = bounds.tree_bound(1, paths, Z, T)
    zeta = 0.99 * Z.mgf_boundary()
    for pt, (ap, lp) in zip(paths, per):
        assert (ap, lp) == tandem_rate(Z, T, min(pt.rates), zeta, z_scale=pt.input_scale)
        assert lam >= lp and a >= ap
    assert lam == max(p[1] for p in per)


def test_clt_examples():
    assert bounds.clt_sigma2_bound("geometric", 1.0, 1.0, 0.5) == 6.0
    assert bounds.clt_sigma2_bound("polynomial_b3", 2.0, 0.5) == 13.5
    assert bounds.clt_sigma2_bound("geometric", 1.0, 0.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        bounds.clt_sigma2_bound("geometric", 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(0.01, 0.99), st.floats(0.0, 10.0))
def test_curves_nonincreasing(b, r, e_dv):
    n = np.arange(0, 300)
    lam, delta = r, math.e * r
    peak = ((1 + lam) / bounds.semi_exponential_rate(delta, lam)) ** (1 + lam)
    tail = np.arange(math.ceil(peak), math.ceil(peak) + 300)
    for v in (bounds.polynomial_bound(n, b, e_dv), bounds.geometric_bound(n, r, e_dv),
              bounds.semi_exponential_bound(tail, delta, lam, e_dv)):
        assert np.all(np.diff(v) <= 0)


def test_two_point_bound_sanity():
    # degenerate geometric e_dv is zero when the chain starts at its fixed point
    assert bounds.geometric_bound(5, 0.5, 0.0) == 0.0
    assert TwoPoint(-1, 1).mean() == 0
