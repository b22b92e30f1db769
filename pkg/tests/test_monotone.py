import numpy as np
import pytest

from invkit.geometry import ConeSpec
from invkit.inclusion import ConstantPolicy, ControlSet, stack
from invkit.monotone import (ConeOrder, GammaOrder, OrderError, OrderedPairSample,
                             check_monotone_cone, check_monotone_gamma, cone_boundary_points,
                             diagonal_gamma, order_margin, order_to_gamma,
                             search_order_violation, simulate_order_preservation)
from invkit.scenario import load_scenario
from invkit.verdict import FAIL, PASS

from conftest import constant_inclusion


@pytest.fixture(scope="module")
def fixtures():
    return {name: load_scenario(name) for name in ("cooperative", "sign_flipped", "set_valued_monotone")}


def test_orders_require_pointed_cones():
    with pytest.raises(OrderError):
        ConeOrder(ConeSpec.full(2))
    with pytest.raises(OrderError):
        ConeOrder(ConeSpec.orthant(1), ConeSpec.full(1))


def test_cone_order_relations():
    o = ConeOrder(ConeSpec.orthant(2))
    assert o.geq([1, 2], [0, 2]) and not o.geq([1, 2], [2, 0])
    assert o.controls_geq([0.3], [0.3]) and not o.controls_geq([0.3], [0.2])
    with pytest.raises(OrderError):
        OrderedPairSample.make(o, [0, 0], [1, 0])


def test_swap_symmetry(rng):
    o = ConeOrder(ConeSpec.from_generators([[1, 0], [1, 1]]))
    g = order_to_gamma(o)
    for _ in range(100):
        x1, x2 = rng.normal(size=2), rng.normal(size=2)
        assert o.geq(x1, x2) == o.geq(-x2, -x1) == g.geq(x1, x2)
        d = diagonal_gamma(2)
        assert d.geq(x1, x2) == d.geq(x2, x1)
    assert d.geq([1, 2], [1, 2])


def test_boundary_flag():
    o = ConeOrder(ConeSpec.orthant(2))
    assert OrderedPairSample.make(o, [1, 0], [0, 0]).boundary
    assert OrderedPairSample.make(o, [0, 0], [0, 0]).boundary
    assert not OrderedPairSample.make(o, [1, 1], [0, 0]).boundary


def test_cone_boundary_points_on_faces():
    K = ConeSpec.orthant(2)
    pts = cone_boundary_points(K, 8)
    assert pts[0].tolist() == [0.0, 0.0]
    assert all(np.min(p) == pytest.approx(0.0, abs=1e-12) and np.max(p) >= 0 for p in pts)


def test_fixture_verdicts(fixtures):
    expect = {"cooperative": PASS, "sign_flipped": FAIL, "set_valued_monotone": FAIL}
    for name, sc in fixtures.items():
        cone = check_monotone_cone(sc.inclusion, sc.order)
        gamma = check_monotone_gamma(sc.inclusion, sc.gamma_order)
        assert cone.status == expect[name] == gamma.status, name


def test_sign_flipped_witness_is_on_boundary(fixtures):
    sc = fixtures["sign_flipped"]
    v = check_monotone_cone(sc.inclusion, sc.order)
    w = v.witnesses[0]
    c = w.direction
    assert np.min(c) == pytest.approx(0.0, abs=1e-12)
    assert w.margin > 0
    assert np.allclose(w.velocity, w.extra["v"] - w.extra["w"])


def test_set_valued_fails_on_the_diagonal(fixtures):
    sc = fixtures["set_valued_monotone"]
    v = check_monotone_cone(sc.inclusion, sc.order)
    assert any(not np.any(w.direction) for w in v.witnesses)
    assert check_monotone_gamma(sc.inclusion, diagonal_gamma(1)).status == FAIL


def random_fixture(rng):
    n = int(rng.integers(1, 3))
    values = [[(float(a), float(a) + float(rng.integers(0, 2)))] for a in rng.integers(-1, 2, n)]
    factors = []
    for i in range(n):
        j = int(rng.integers(0, n))
        c = int(rng.integers(-1, 2))
        factors.append(f"1 + {c} * x{j + 1}" if rng.random() < 0.5 else str(int(rng.integers(-1, 3))))
    return constant_inclusion(values, factors, h3=False, h4=True)


def test_cone_and_gamma_checkers_agree(rng):
    for _ in range(50):
        inc = random_fixture(rng)
        order = ConeOrder(ConeSpec.orthant(inc.n))
        a = check_monotone_cone(inc, order, count=16, bases=8)
        b = check_monotone_gamma(inc, order_to_gamma(order), count=32)
        assert a.status == b.status


def test_stacked_velocity_sets_factorise(fixtures):
    inc = fixtures["cooperative"].inclusion
    st = stack(inc, inc)
    x1, x2 = np.array([0.3, -0.1]), np.array([0.0, 0.4])
    u1, u2 = np.array([0.5]), np.array([-1.0])
    v = st.velocity_set(np.concatenate([x1, x2]), np.concatenate([u1, u2]))
    a, b = inc.velocity_set(x1, u1), inc.velocity_set(x2, u2)
    assert [f.pieces for f in v.factors] == [f.pieces for f in a.factors] + [f.pieces for f in b.factors]


def test_cooperative_simulation_preserves_order(fixtures):
    sc = fixtures["cooperative"]
    pair = OrderedPairSample.make(sc.order, [0.5, 0.2], [0.1, 0.2], [0.5], [0.0])
    pols = (ConstantPolicy([1, 1], [0.5]), ConstantPolicy([1, 1], [0.0]))
    assert simulate_order_preservation(sc.inclusion, sc.order, pair, pols, T=5.0, h=1e-3) is None


def test_set_valued_violation_within_budget(fixtures):
    sc = fixtures["set_valued_monotone"]
    pair = OrderedPairSample.make(sc.order, [0.0], [0.0], [0.0], [0.0])
    idx, rec = search_order_violation(sc.inclusion, sc.order, pair, budget=100, T=1.0, h=1e-2)
    assert idx is not None and idx <= 100
    assert rec.margin > 0 and rec.time > 0
    assert rec.margins[rec.index] == rec.margin
    assert rec.to_csv().splitlines()[0] == "t,x1_first,x1_second,margin"


def test_fail_witness_leads_to_violation(fixtures):
    sc = fixtures["sign_flipped"]
    w = check_monotone_cone(sc.inclusion, sc.order).witnesses[0]
    pair = OrderedPairSample.make(sc.order, w.extra["xi1"], w.extra["xi2"], w.extra["u1"], w.extra["u2"])
    idx, rec = search_order_violation(sc.inclusion, sc.order, pair, budget=20, T=0.5, h=1e-3)
    assert rec is not None and rec.margin > 0


def test_order_margin_signs():
    o = ConeOrder(ConeSpec.orthant(2))
    assert order_margin(o, [1, 1], [0, 0]) < 0
    assert order_margin(o, [0, 1], [1, 0]) == pytest.approx(1.0)
    g = order_to_gamma(o)
    assert order_margin(g, [0, 1], [1, 0]) == pytest.approx(1.0)


def test_control_orders():
    c = ControlSet.box([-1.0], [1.0], 3)
    inc = constant_inclusion([[(1, 1)]], ["a1"], c)
    with_ku = ConeOrder(ConeSpec.orthant(1), ConeSpec.orthant(1))
    assert check_monotone_cone(inc, with_ku).status == PASS
    flipped = constant_inclusion([[(-1, -1)]], ["a1"], c)
    assert check_monotone_cone(flipped, with_ku).status == FAIL
    # equal controls only: any constant-in-x dynamics is order preserving
    assert check_monotone_cone(flipped, ConeOrder(ConeSpec.orthant(1))).status == PASS
    assert isinstance(order_to_gamma(with_ku), GammaOrder)


def test_constant_selections_break_order_at_first_step(fixtures):
    sc = fixtures["set_valued_monotone"]
    pair = OrderedPairSample.make(sc.order, [0.0], [0.0], [0.0], [0.0])
    pols = (ConstantPolicy([0.0], [0.0]), ConstantPolicy([1.0], [0.0]))
    rec = simulate_order_preservation(sc.inclusion, sc.order, pair, pols, T=1.0, h=1e-2)
    assert rec.index == 1 and rec.time == pytest.approx(1e-2)


def test_zero_dynamics_never_violate(zero_dynamics):
    o = ConeOrder(ConeSpec.orthant(1))
    pair = OrderedPairSample.make(o, [0.3], [0.1])
    idx, rec = search_order_violation(zero_dynamics, o, pair, budget=10, T=0.5, h=1e-2)
    assert idx is None and rec is None


def test_cone_check_independent_of_equal_pair_order(fixtures):
    sc = fixtures["cooperative"]
    a = check_monotone_cone(sc.inclusion, sc.order, seed=3)
    b = check_monotone_cone(sc.inclusion, sc.order, seed=3)
    assert a.status == b.status and a.resolution == b.resolution
