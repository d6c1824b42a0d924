import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wassbound import _rng
from wassbound.distributions import Deterministic, Exponential, Normal, Pareto, Shifted, TwoPoint
from wassbound.models import (AR1, GG1, GG1HeavyTraffic, Priority, RBMSkeleton, SGDHeavyTail, SGDMomentum,
                              SGDNonStronglyConvex, Tandem, TreeNetwork, TreeSpec, model_from_dict,
                              priority_drain, simulate_marginal, simulate_marginals, tandem_drain,
                              total_workload_rate_check, tree_decompose)

PARETO_Z = Shifted(Pareto(4.0, 1.0), -2.0)
RAD = TwoPoint(-1.0, 1.0, 0.5)


def _one_step(model, x, xi):
    y, lip = model.apply(np.atleast_1d(np.asarray(x, float)), xi)
    return float(np.squeeze(y)), float(np.squeeze(lip))


def test_gg1_steps():
    assert _one_step(GG1(Deterministic(-1.0)), 0.0, np.array([-1.0])) == (0.0, 0.0)
    assert _one_step(GG1(Deterministic(1.0)), 2.0, np.array([1.0])) == (3.0, 1.0)


def test_gg1_lip_at_zero_crossing():
    # Df = I(x + Z >= 0): the boundary case counts as 1
    assert _one_step(GG1(Deterministic(-1.0)), 1.0, np.array([-1.0])) == (0.0, 1.0)


def test_sgd_nsc_step():
    y, lip = _one_step(SGDNonStronglyConvex(3, 0.1, Deterministic(0.0)), 0.5, np.array([0.0]))
    assert math.isclose(y, 0.475, rel_tol=1e-15) and math.isclose(lip, 0.9, rel_tol=1e-15)
    _, lip_out = _one_step(SGDNonStronglyConvex(3, 0.1, Deterministic(0.0)), 2.0, np.array([0.0]))
    assert math.isclose(lip_out, 0.9, rel_tol=1e-15)


def test_sgd_ht_lip():
    m = SGDHeavyTail(1.5, 0.1, RAD)
    _, inside = _one_step(m, 0.3, np.array([0.0]))
    _, outside = _one_step(m, 4.0, np.array([0.0]))
    assert math.isclose(inside, 0.9) and math.isclose(outside, 1 - 0.1 * 0.5 * 4.0 ** -0.5)


def test_tandem_drain_examples():
    assert np.allclose(tandem_drain((1.0, 2.0), np.array([3.0, 0.0]), 1.0), [2.0, 0.0])
    assert np.allclose(tandem_drain((2.0, 1.0), np.array([2.0, 0.0]), 2.0), [0.0, 0.0])
    assert np.all(tandem_drain((1.3, 0.7, 2.0), np.zeros(3), 5.0) == 0)


def test_tandem_drain_rejects_negative():
    with pytest.raises(ValueError):
        tandem_drain((1.0, 1.0), np.array([-0.1, 0.0]), 1.0)


def _fine_drain(rates, x, t, steps=200_000):
    # direct time-stepping of the fluid line as an independent oracle
    x = np.array(x, float)
    h = t / steps
    for _ in range(steps):
        inflow = 0.0
        for i, r in enumerate(rates):
            cap = r * h
            avail = x[i] + inflow
            out = min(avail, cap)
            x[i] = avail - out
            inflow = out
    return x


@pytest.mark.parametrize("rates, x, t", [((2.0, 1.0), (2.0, 0.0), 2.0), ((1.0, 2.0, 0.5), (1.5, 0.3, 0.0), 1.7),
                                         ((0.8, 1.5, 1.0), (0.4, 2.0, 0.5), 3.0)])
def test_tandem_drain_matches_time_stepping(rates, x, t):
    assert np.allclose(tandem_drain(rates, np.array(x), t), _fine_drain(rates, x, t), atol=1e-4)


def test_total_workload_rate():
    rep = total_workload_rate_check((1.0, 2.0), np.array([[3.0, 0.0]]), np.linspace(0, 4, 41))
    assert rep["ok"]
    rep0 = total_workload_rate_check((1.0, 2.0), np.zeros((1, 2)), np.linspace(0, 4, 41))
    assert rep0["ok"]


def test_total_workload_rate_on_reachable_states():
    model = Tandem((1.5, 1.2, 1.4), Exponential(1.0), Exponential(0.9))
    xs = simulate_marginal(model, np.zeros(3), 25, 100, seed=3)
    rep = total_workload_rate_check(model.rates, xs, np.linspace(0, 6, 61))
    assert rep["ok"], rep["violations"][:3]


def test_priority_drain_order():
    out = priority_drain(np.array([[1.0, 2.0, 3.0]]), np.array([2.5]))
    assert np.allclose(out, [[0.0, 0.5, 3.0]])


def test_tree_decompose_single_chain():
    tree = TreeSpec(1, 1, (1.5, 1.2), {})
    (pt,) = tree_decompose(tree, Exponential(1.0), Deterministic(2.0))
    assert pt.rates == (1.5, 1.2) and pt.input_scale == 1.0


def test_tree_decompose_binary():
    tree = TreeSpec(2, 1, (2.0, 0.7, 0.9), {0: (0.5, 0.5)})
    paths = tree_decompose(tree, Exponential(1.0), Deterministic(2.0))
    assert [p.rates for p in paths] == [(1.0, 0.7), (1.0, 0.9)]
    assert all(p.input_scale == 0.5 for p in paths)
    assert [p.nodes for p in paths] == [(0, 1), (0, 2)]


def test_tree_decompose_names_unstable_path():
    tree = TreeSpec(2, 1, (2.0, 0.7, 0.2), {0: (0.5, 0.5)})
    with pytest.raises(ValueError, match=r"\(2,\)"):
        tree_decompose(tree, Exponential(1.0), Deterministic(2.0))


def test_tree_network_shape_and_observe():
    tree = TreeSpec(2, 1, (2.0, 0.7, 0.9), {0: (0.3, 0.7)})
    net = TreeNetwork(tree, Deterministic(2.0), Exponential(1.0))
    xs = simulate_marginal(net, net.zero(), 10, 50, seed=4)
    assert xs.shape == (50, 2, 2)
    nodes = net.observe(xs)
    assert np.allclose(nodes.sum(-1), xs.sum((-1, -2)))


def test_simulate_marginal_zero_steps():
    x = simulate_marginal(GG1(PARETO_Z), 1.5, 0, 7, seed=1)
    assert np.array_equal(x, np.full(7, 1.5))


def test_ar1_symmetric_mean():
    x = simulate_marginal(AR1(0.5, RAD), 0.0, 60, 20_000, seed=2)
    assert abs(x.mean()) <= 3 * x.std() / math.sqrt(x.size)


def test_gg1_monotone_from_empty():
    m = simulate_marginals(GG1(PARETO_Z), 0.0, [1, 3, 10, 30], 20_000, seed=5)
    means = [m[n].mean() for n in (1, 3, 10, 30)]
    ses = [m[n].std() / math.sqrt(m[n].size) for n in (1, 3, 10, 30)]
    assert all(b >= a - 3 * (sa + sb) for a, b, sa, sb in zip(means, means[1:], ses, ses[1:]))


def test_ht_time_index_rounds_down():
    m = GG1HeavyTraffic(Normal(), 0.3)
    assert m.time_index(1.0) == math.floor(1 / 0.09)
    assert m.Z.mean() == pytest.approx(-0.3)


def test_rbm_exact_and_euler_agree():
    exact = RBMSkeleton(1.0, 1.0, 1.0)
    euler = RBMSkeleton(1.0, 1.0, 1.0, substeps=1024, scheme="euler")
    a = simulate_marginal(exact, 0.0, 1, 20_000, seed=6)
    b = simulate_marginal(euler, 0.0, 1, 20_000, seed=7)
    se = math.hypot(a.std(), b.std()) / math.sqrt(a.size)
    # Euler's grid minimum misses a little reflection: O(sqrt(h)) bias
    assert abs(a.mean() - b.mean()) < 3 * se + 0.02


def test_rbm_substep_doubling_on_mean():
    m = RBMSkeleton(1.0, 1.0, 1.0, substeps=512, scheme="euler")
    rng = _rng.generator(8)
    coarse, fine = m.draw_pair(rng, (4000,))
    x = np.zeros(4000)
    xc, _ = m.apply(x, coarse)
    xf, _ = m.apply(x, fine)
    d = xf - xc
    assert abs(d.mean()) < 2 * math.hypot(xc.std(), xf.std()) / math.sqrt(4000)
    assert np.all(d >= -1e-12)     # the finer grid only finds deeper minima


def _models():
    return [GG1(PARETO_Z), GG1HeavyTraffic(Normal(), 0.2), RBMSkeleton(1.0, 1.0, 1.0),
            Tandem((1.5, 1.2), Deterministic(2.0), Exponential(1.0)),
            Priority(1.0, Exponential(1.0), (Exponential(2.0), Exponential(3.0))),
            SGDNonStronglyConvex(3, 0.2, RAD), SGDHeavyTail(1.5, 0.1, RAD), AR1(0.4, RAD)]


@pytest.mark.parametrize("model", _models(), ids=lambda m: m.kind)
def test_states_finite_and_lip_range(model):
    rng = _rng.generator(9)
    x = np.broadcast_to(np.asarray(model.zero(), float), (500,) + np.shape(model.zero())).copy()
    prod = np.ones(500)
    for _ in range(50):
        x, lip = model.apply(x, model.draw(rng, (500,)))
        assert np.all(np.isfinite(x)) and np.all(lip >= 0)
        if model.kind in ("gg1", "gg1_ht", "tandem", "priority", "rbm_skeleton"):
            assert np.all(x >= 0)
        if model.kind in ("gg1", "gg1_ht", "tandem", "priority"):
            assert set(np.unique(lip)) <= {0.0, 1.0}
            new = prod * lip
            assert np.all(new <= prod)
            prod = new


@pytest.mark.parametrize("model", _models() + [SGDMomentum(0.1, 0.2, RAD),
                                               TreeNetwork(TreeSpec(2, 1, (2.0, 0.7, 0.9), {0: (0.5, 0.5)}),
                                                           Deterministic(2.0), Exponential(1.0))],
                         ids=lambda m: m.kind)
def test_model_round_trip(model):
    assert model_from_dict(model.to_dict()).to_dict() == model.to_dict()


def test_model_from_dict_unknown():
    with pytest.raises(ValueError):
        model_from_dict({"kind": "mm1"})


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 0.24))
def test_sgd_nsc_lip_at_most_one(x, alpha):
    # alpha <= 3/(4 E(1+|Z|)) = 3/8 for Rademacher noise
    _, lip = _one_step(SGDNonStronglyConvex(3, alpha, RAD), x, np.array([1.0]))
    assert 0 <= lip <= 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=2, max_size=2), st.floats(0, 4),
       st.lists(st.floats(0, 3), min_size=2, max_size=2))
def test_priority_total_lindley_float(x, t, z):
    for order in ("after_arrival", "before_service"):
        m = Priority(1.3, Deterministic(1.0), (Exponential(1.0), Exponential(1.0)), order)
        y, _ = m.apply(np.array([x]), (np.array([z]), np.array([t])))
        s, ez, cap = sum(x), sum(z), 1.3 * t
        want = max(s + ez - cap, 0) if order == "before_service" else max(s - cap, 0) + ez
        assert math.isclose(y.sum(), want, rel_tol=1e-12, abs_tol=1e-12)
