import numpy as np
import pytest

from invkit.expr import ScalarField
from invkit.geometry import ConeSpec, polar
from invkit.inclusion import (AdversarialPolicy, ConstantPolicy, ControlSet, DisturbanceMap,
                              FeedbackRealization, FiniteInclusion, HypothesisViolation,
                              RandomPolicy, integrate,
                              realization_ccone_check, realization_cone_check, selection_valid,
                              stack, weakly_zeroing_check)
from invkit.intervals import IntervalUnion
from invkit.scenario import load_scenario
from invkit.verdict import FAIL, PASS

from conftest import constant_inclusion
from oracles import hamiltonian_bruteforce


def random_inclusion(rng):
    n = int(rng.integers(1, 4))
    m = int(rng.integers(0, 2))
    values = []
    for _ in range(n):
        pieces = []
        for _ in range(rng.integers(1, 3)):
            a = float(rng.integers(-4, 4)) / 2
            pieces.append((a, a + float(rng.integers(0, 3)) / 2))
        values.append(pieces)
    controls = ControlSet.box([-1.0], [1.0], int(rng.integers(2, 6))) if m else ControlSet.none()
    factors = []
    for i in range(n):
        c = rng.integers(-2, 3)
        factors.append(f"{c} + x{i + 1}^2" + (" * a1" if m else "") if c else "1 + a1" if m else "1")
    return constant_inclusion(values, factors, controls, h3=False, h4=False)


def test_velocity_set_examples(ex21):
    inc = ex21.inclusion
    assert inc.velocity_set([0.0]).factors[0].pieces == ((-1.0, 1.0),)
    assert inc.velocity_set([0.7]).factors[0].pieces == ((-1.0, -1.0), (0.0, 0.0))
    zero = constant_inclusion([[(1, 2)]], ["0"])
    assert zero.velocity_set([3.0]).factors[0].pieces == ((0.0, 0.0),)


def test_negative_factor_flips():
    inc = constant_inclusion([[(0, 1), (3, 4)]], ["-2"])
    assert inc.velocity_set([0.0]).factors[0].pieces == ((-8.0, -6.0), (-2.0, 0.0))


def test_hamiltonian_examples(ex21):
    inc = ex21.inclusion
    assert inc.hamiltonian([0.5], [1.0]) == 0.0
    assert inc.hamiltonian([0.0], [0.0]) == 0.0
    assert inc.hamiltonian([0.0], [2.0]) == 2.0


def test_hamiltonian_matches_bruteforce(rng):
    for _ in range(100):
        inc = random_inclusion(rng)
        x = rng.uniform(-1, 1, inc.n)
        d = rng.normal(size=inc.n)
        assert abs(inc.hamiltonian(x, d) - hamiltonian_bruteforce(inc, x, d)) <= 1e-6


def test_hamiltonian_positively_homogeneous(rng):
    for _ in range(50):
        inc = random_inclusion(rng)
        x, d = rng.uniform(-1, 1, inc.n), rng.normal(size=inc.n)
        for lam in (0.0, 0.5, 3.0):
            assert inc.hamiltonian(x, lam * d) == pytest.approx(lam * inc.hamiltonian(x, d), abs=1e-12)


def test_polar_cross_check(rng):
    # H(x, d) <= 0 for every generator d of N  iff  F(x) lies in the polar of N
    for _ in range(60):
        inc = random_inclusion(rng)
        x = rng.uniform(-1, 1, inc.n)
        gens = rng.integers(-2, 3, size=(2, inc.n)).astype(float)
        gens = gens[np.any(gens != 0, axis=1)]
        if gens.size == 0:
            continue
        N = ConeSpec.from_generators(gens)
        lhs = all(inc.hamiltonian(x, d) <= 1e-12 for d in N.generators())
        P = polar(N)
        rhs = all(P.contains(v, 1e-12) for v in inc.all_extreme_velocities(x))
        assert lhs == rhs


def test_h3_flag_validation():
    with pytest.raises(HypothesisViolation):
        DisturbanceMap.constant(IntervalUnion([(1, 2)]), h3=True)
    with pytest.raises(HypothesisViolation):
        DisturbanceMap.constant(IntervalUnion([(0, 0), (1, 1)]), h4=True)
    with pytest.raises(HypothesisViolation):
        DisturbanceMap.build((), IntervalUnion([(0, 1)]), "full", h3=False, h4=False)


def test_weakly_zeroing():
    inc = constant_inclusion([[(0, 1)], [(-1, 0)]], h3=True)
    v = weakly_zeroing_check(inc, [-1, -1], [1, 1])
    assert v.status == PASS and "structural" in v.reason
    one = constant_inclusion([[(1, 2)]])
    assert weakly_zeroing_check(one, [-1], [1]).status == PASS
    diag = FiniteInclusion(2, lambda x: np.array([[1.0, 1.0]]))
    v = weakly_zeroing_check(diag, [-1, -1], [1, 1], samples=4)
    assert v.status == FAIL
    assert v.witnesses[0].velocity.tolist() == [1.0, 1.0]


def test_realization_checks(ex21):
    inc = ex21.inclusion
    f = FeedbackRealization.parse(["-1"], T=1, gamma=0.35, anchor=[0.7])
    assert realization_ccone_check(inc, f).status == PASS
    zero = FeedbackRealization.parse(["0"], T=1, gamma=0.5, anchor=[0.0])
    assert realization_ccone_check(inc, zero).status == PASS


def test_intro_example_cone_fails_ccone_holds():
    inc = load_scenario("intro_2d").inclusion
    f = FeedbackRealization.parse(["1", "1"], T=1, gamma=0.1, anchor=[0.0, 0.0])
    cone = realization_cone_check(inc, f)
    assert cone.status == FAIL
    assert all(w.x[1] < 0 for w in cone.witnesses)
    # (1, 1) has the sign pattern of (1, 10), so the componentwise cone accepts it
    assert realization_ccone_check(inc, f).status == PASS


def test_stack(ex21):
    inc = ex21.inclusion
    st = stack(inc, inc)
    assert st.n == 2
    x = np.array([0.3, -0.2])
    s = st.velocity_set(x)
    assert s.factors[0].pieces == inc.velocity_set(x[:1]).factors[0].pieces
    assert s.factors[1].pieces == inc.velocity_set(x[1:]).factors[0].pieces


def test_stack_controls_factorise():
    c = ControlSet.box([-1.0], [1.0], 3)
    inc = constant_inclusion([[(0, 1)]], ["1 + a1"], c)
    st = stack(inc, inc)
    assert st.m == 2 and len(st.controls.grid()) == 9
    assert st.hamiltonian([0, 0], [1, 1]) == pytest.approx(2 * inc.hamiltonian([0], [1]))


def test_stacked_realization_passes(ex21):
    inc = ex21.inclusion
    f = FeedbackRealization.parse(["-1", "-1"], T=1, gamma=0.3, anchor=[0.7, 0.8])
    assert realization_ccone_check(stack(inc, inc), f).status == PASS


def test_integrate_toward_origin(ex21):
    pol = AdversarialPolicy([ScalarField.parse("-x1", 1)])
    h = 1e-2
    tr = integrate(ex21.inclusion, pol, [1.0], T=2.0, h=h)
    exact = np.maximum(1 - tr.t, 0)
    assert np.max(np.abs(tr.x[:, 0] - exact)) <= 2 * h
    assert selection_valid(ex21.inclusion, tr)


def test_integrate_zero_policy():
    inc = constant_inclusion([[(-1, 1)], [(0, 2)]])
    tr = integrate(inc, ConstantPolicy([0.0, 0.0]), [0.3, -0.4], T=1, h=0.1)
    assert np.all(tr.x == np.array([0.3, -0.4]))


def test_integrate_escape(zero_one):
    tr = integrate(zero_one.inclusion, ConstantPolicy([1.0]), [0.0], T=0.1, h=1e-3)
    assert np.max(np.abs(tr.x[:, 0] - tr.t)) <= 1e-12


def test_random_selections_are_valid(rng):
    for seed in range(10):
        inc = random_inclusion(rng)
        tr = integrate(inc, RandomPolicy(seed), rng.uniform(-1, 1, inc.n), T=0.2, h=0.02)
        assert selection_valid(inc, tr)


def test_region_switching_selections_valid(ex21):
    for seed in range(5):
        tr = integrate(ex21.inclusion, RandomPolicy(seed), [0.05], T=0.5, h=0.03)
        assert selection_valid(ex21.inclusion, tr)


def test_trajectory_csv_header():
    inc = constant_inclusion([[(0, 1)]], ["1 + a1"], ControlSet.finite([[0.0]]))
    csv = integrate(inc, ConstantPolicy([1.0]), [0.0], T=0.2, h=0.1).to_csv()
    assert csv.splitlines()[0] == "t,x1,a1,delta1"
