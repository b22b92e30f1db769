import numpy as np
import pytest

from invkit.expr import ScalarField
from invkit.geometry import Box, Polyhedron, Singleton, SmoothSublevel
from invkit.inclusion import ControlSet
from invkit.invariance import (CheckRegion, check_hamiltonian_condition,
                               check_normal_cone_condition, check_tangent_condition,
                               falsify_invariance)
from invkit.scenario import load_scenario
from invkit.verdict import FAIL, INCONCLUSIVE, PASS

from conftest import constant_inclusion

HALF = Polyhedron([[1.0, 0.0]], [0.0])


@pytest.fixture(scope="module")
def halfspace():
    return load_scenario("halfspace")


def outward_halfspace():
    return constant_inclusion([[(0, 1)], [(-1, 1)]], ["1", "1"])


def test_check_region_grid():
    r = CheckRegion([-1], [1], 0.5)
    assert r.grid()[:, 0].tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        CheckRegion([1], [0], 0.1)
    with pytest.raises(ValueError):
        CheckRegion([0], [1], 0.0)


def test_ex21_hamiltonian_pass(ex21):
    v = check_hamiltonian_condition(ex21.inclusion, ex21.psi, ex21.region)
    assert v.status == PASS
    assert v.resolution["max_hamiltonian"] == 0.0
    assert v.resolution["points"] == 2001


def test_zero_one_hamiltonian_fail(zero_one):
    v = check_hamiltonian_condition(zero_one.inclusion, zero_one.psi, zero_one.region)
    assert v.status == FAIL
    for w in v.witnesses:
        assert w.x[0] > 0 and w.margin == pytest.approx(2 * w.x[0])
    assert v.witnesses[0].x[0] == pytest.approx(0.1)


def test_zero_dynamics_pass_any_psi(zero_dynamics):
    for text in ("x1^2", "sin(x1)", "-x1^3"):
        v = check_hamiltonian_condition(zero_dynamics, ScalarField.parse(text, 1),
                                        CheckRegion([-1], [1], 0.1))
        assert v.status == PASS


def test_nonsmooth_psi_inconclusive_without_fallback(ex21):
    psi = ScalarField.parse("abs(x1)", 1)
    region = CheckRegion([-1], [1], 0.5)
    v = check_hamiltonian_condition(ex21.inclusion, psi, region)
    assert v.status == INCONCLUSIVE
    # the fallback set supplies the normals at the kink
    v = check_hamiltonian_condition(ex21.inclusion, psi, region, fallback=Singleton([0.0]))
    assert v.status == FAIL and v.witnesses[0].x.tolist() == [0.0]


def test_set_target_skips_outside_points(halfspace):
    v = check_hamiltonian_condition(halfspace.inclusion, HALF, halfspace.region)
    assert v.status == PASS


def test_halfspace_fixture_passes_everything(halfspace):
    inc = halfspace.inclusion
    assert check_hamiltonian_condition(inc, halfspace.psi, halfspace.region).status == PASS
    assert check_normal_cone_condition(inc, HALF, count=32).status == PASS
    v = check_tangent_condition(inc, HALF, count=32)
    assert v.status == PASS and v.resolution["mode"] == "iff"
    assert not falsify_invariance(inc, HALF, [0, 0], budget=20, T=0.5).escaped


def test_coarsening_never_turns_pass_into_fail(ex21, zero_one):
    for sc in (ex21, zero_one):
        fine = check_hamiltonian_condition(sc.inclusion, sc.psi, sc.region)
        for factor in (2, 5, 10):
            coarse = check_hamiltonian_condition(sc.inclusion, sc.psi, sc.region.coarsened(factor))
            if fine.status == PASS:
                assert coarse.status == PASS
            if coarse.status == FAIL:
                assert fine.status == FAIL


def test_normal_cone_polar_agreement(rng):
    sets = [HALF, Box(-np.ones(2), np.ones(2)),
            SmoothSublevel(ScalarField.parse("x1^2 + x2^2 - 1", 2), True, (0.0, 0.0))]
    for j in range(20):
        values = [[(float(a), float(a) + 1)] for a in rng.integers(-2, 2, size=2)]
        inc = constant_inclusion(values, ["1", "1 + x1^2"])
        for s in sets:
            v = check_normal_cone_condition(inc, s, count=16, seed=j)
            assert v.resolution["polar_disagreements"] == 0
            assert v.status in (PASS, FAIL)


def test_singleton_normal_cone_fails(ex21):
    v = check_normal_cone_condition(ex21.inclusion, Singleton([0.0]))
    assert v.status == FAIL and v.witnesses[0].margin == pytest.approx(1.0)


def test_tangent_sufficient_only_mode(ex21):
    v = check_tangent_condition(ex21.inclusion, Singleton([0.0]))
    assert v.status == FAIL
    assert v.resolution["mode"] == "sufficient-only"
    assert "sufficient-only" in v.reason


def test_zero_one_escapes_along_identity(zero_one):
    res = falsify_invariance(zero_one.inclusion, Singleton([0.0]), [0.0], budget=10, T=0.1, h=1e-3)
    assert res.escaped and res.trial == 1
    tr = res.trajectory
    assert np.max(np.abs(tr.x[:, 0] - tr.t)) <= 2e-3
    assert res.verdict().status == FAIL


def test_escape_implies_hamiltonian_fail(zero_one):
    res = falsify_invariance(zero_one.inclusion, zero_one.psi, [0.0], budget=5, T=0.1, h=1e-3)
    assert res.escaped
    v = check_hamiltonian_condition(zero_one.inclusion, zero_one.psi, zero_one.region)
    assert v.status == FAIL


def test_ex21_never_escapes(ex21):
    res = falsify_invariance(ex21.inclusion, Singleton([0.0]), [0.0], budget=50, T=1.0, h=1e-2)
    assert not res.escaped and res.max_measure <= 1e-9
    assert "not a proof" in res.verdict().reason


def test_falsify_rejects_start_outside():
    with pytest.raises(ValueError):
        falsify_invariance(outward_halfspace(), HALF, [1.0, 0.0])


@pytest.mark.parametrize("make,expect_escape", [
    (lambda: load_scenario("halfspace").inclusion, False),
    (outward_halfspace, True),
    (lambda: constant_inclusion([[(-1, 0)], [(0, 2)]], ["1 + x2^2", "1"]), False),
    (lambda: constant_inclusion([[(-1, 1)], [(0, 0)]], ["x2", "1"]), True),
])
def test_tangent_pass_iff_no_escape_on_convex_fixtures(make, expect_escape):
    inc = make()
    assert inc.satisfies_h4()
    tangent = check_tangent_condition(inc, HALF, count=32)
    starts = ([0.0, 0.0], [0.0, 0.5], [0.0, -0.5])
    escaped = any(falsify_invariance(inc, HALF, x0, budget=20, T=0.5).escaped for x0 in starts)
    assert escaped == expect_escape
    assert (tangent.status == PASS) == (not escaped)


def test_tangent_with_controls():
    c = ControlSet.box([-1.0], [1.0], 3)
    inc = constant_inclusion([[(0, 1)], [(0, 0)]], ["a1", "1"], c)
    v = check_tangent_condition(inc, HALF, count=8)
    assert v.status == FAIL and v.witnesses[0].extra["control"].tolist() == [1.0]
