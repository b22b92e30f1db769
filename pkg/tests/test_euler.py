import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invkit.expr import ScalarField
from invkit.inclusion import FeedbackRealization
from invkit.euler import (DescentFailed, EulerConfig, MollifiedFeedback, StepTooLarge,
                          build_arc, bump_constant, delta_of_D, descent_select,
                          feedback_constants, hull_set, make_config, mollifier,
                          mollifier_mass, mollify, refine, sup_distance)

PSI = ScalarField.parse("x1^2", 1)


def feedback(expr, anchor=0.5, gamma=0.4, T=1.0):
    return FeedbackRealization.parse([expr] if isinstance(expr, str) else expr,
                                     T=T, gamma=gamma, anchor=np.atleast_1d(anchor))


def test_mollifier_support_and_peak():
    for eps in (0.1, 0.5, 2.0):
        assert mollifier(eps, eps) == 0.0 and mollifier(-eps, eps) == 0.0
        assert mollifier(0.0, eps) == pytest.approx(bump_constant() * math.exp(-1) / eps, rel=1e-14)


@pytest.mark.parametrize("eps", [0.01, 0.0625, 0.25, 1.0, 3.0])
def test_mollifier_unit_mass(eps):
    assert abs(mollifier_mass(eps) - 1.0) <= 1e-10


def test_mollify_constant_and_linear():
    f = feedback("-1")
    assert mollify(f, 0.1, 0.5, [0.3]) == pytest.approx([-1.0], abs=1e-14)
    lin = feedback("t")
    for t in (0.2, 0.5, 0.8):
        assert abs(mollify(lin, 0.1, t, [0.0])[0] - t) <= 1e-8


def test_mollify_zero_extension_at_ends():
    f = feedback("1")
    assert mollify(f, 0.1, 0.0, [0.0])[0] == pytest.approx(0.5, abs=1e-12)
    assert mollify(f, 0.1, 1.2, [0.0])[0] == 0.0


def test_mollified_step_is_continuous():
    f = feedback("sign(t - 0.5)")
    mf = MollifiedFeedback(f, 0.1)
    gaps = (1e-2, 1e-3, 1e-4, 1e-6)
    jumps = [abs(mf(0.5 + s, [0.0])[0] - mf(0.5 - s, [0.0])[0]) for s in gaps]
    assert all(a > b for a, b in zip(jumps, jumps[1:])) and jumps[-1] < 1e-4
    # near the switch the slope is about 2 * mollifier(0) on each side
    assert jumps[2] == pytest.approx(4 * mollifier(0.0, 0.1) * 1e-4, rel=1e-2)


def test_hull_examples():
    mf = MollifiedFeedback(feedback("x1", anchor=0.0), 0.1)
    lo, hi = hull_set(mf, 0.5, [0.0], 10, 0)
    assert lo == pytest.approx(-0.1, abs=1e-12) and hi == pytest.approx(0.1, abs=1e-12)
    const = MollifiedFeedback(feedback("-2"), 0.1)
    assert hull_set(const, 0.5, [0.3], 4, 0) == pytest.approx((-2.0, -2.0))


def test_hull_width_tracks_modulus():
    f = feedback(["x1 * x2", "sin(x1)"], anchor=[0.2, 0.1], gamma=0.3)
    growth, moduli = feedback_constants(f)
    mf = MollifiedFeedback(f, 0.1, moduli=moduli)
    for r in (2.0, 8.0, 32.0):
        for i in range(2):
            lo, hi = mf.hull(0.5, [0.2, 0.1], r, i)
            assert hi - lo <= 2 * mf.modulus(i, 1.0 / r) + 2 * mf.widening(int(r), 2) + 1e-12 \
                or hi - lo <= 2 * mf.modulus(i, 2.0 / r) + 1e-12


def test_descent_accepts_inward_velocity():
    mf = MollifiedFeedback(feedback("-1"), 0.1)
    h = 1e-3
    v, cert = descent_select(PSI, mf, 0.5, [0.5], h, 1)
    assert v.tolist() == [-1.0]
    assert cert.ok and cert.psi_after < cert.psi_before


def test_descent_constant_psi_prefers_small_velocity():
    mf = MollifiedFeedback(feedback("x1", anchor=0.0), 0.1)
    v, cert = descent_select(ScalarField.parse("3", 1), mf, 0.5, [0.0], 1e-3, 1)
    assert cert.increments == [0.0]
    assert v[0] == 0.0


def test_descent_failure_witness():
    mf = MollifiedFeedback(feedback("1", anchor=0.01), 0.05)
    with pytest.raises(DescentFailed) as e:
        descent_select(PSI, mf, 0.5, [0.01], 1e-4, 200, check_step=False)
    assert e.value.component == 1
    h = 1e-4
    assert e.value.increment == pytest.approx(2 * 0.01 * h + h * h, rel=1e-9)
    assert e.value.increment > e.value.allowed


def test_step_size_precondition():
    mf = MollifiedFeedback(feedback("-1"), 0.1)
    with pytest.raises(StepTooLarge):
        descent_select(PSI, mf, 0.5, [0.5], 0.1, 4)


def test_config_example():
    cfg = EulerConfig(gamma=0.5, T=1.0, k=1, eps=0.5, delta_D=2.0)
    assert cfg.h_k == 0.0078125
    assert cfg.T_prime == 0.0078125
    assert cfg.steps == 1
    cfg = EulerConfig(gamma=0.5, T=0.005, k=1, eps=0.5, delta_D=2.0)
    assert cfg.T_prime == 0.005


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.integers(1, 64), st.floats(1.0, 50.0), st.floats(0.1, 5.0))
def test_config_identities(gamma, k, delta, T):
    cfg = EulerConfig(gamma=gamma, T=T, k=k, eps=1.0 * T, delta_D=delta)
    assert cfg.h_k == gamma / (32 * k * delta)
    assert cfg.T_prime == min(T, gamma / (32 * delta))
    t = cfg.partition()
    assert len(t) == cfg.steps + 1 and t[-1] == cfg.T_prime
    assert np.all(np.diff(t) > 0) and np.all(np.diff(t) <= cfg.h_k * (1 + 1e-12))


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        EulerConfig(gamma=1.0, T=1, k=1, eps=1, delta_D=1)
    with pytest.raises(ValueError):
        EulerConfig(gamma=0.5, T=1, k=1, eps=0.01, delta_D=1)


def test_delta_formula():
    from invkit.expr import estimate_growth
    g = estimate_growth(ScalarField.parse("-1", 1), [-1], [1])
    assert delta_of_D(g, [0.5], 0.4) == 1 + g.c1 + g.c2 * (1 + 0.7)


def ex21_arc(k, expr="-1"):
    f = feedback(expr)
    growth, moduli = feedback_constants(f)
    cfg = make_config(f, k, 1.0 / k, growth)
    return build_arc(f, PSI, cfg, moduli)


@pytest.mark.parametrize("k", [4, 8, 16])
def test_arc_recurrence_bound_and_neighbourhood(k):
    arc = ex21_arc(k)
    steps = np.diff(arc.t)[:, None] * arc.v
    assert np.array_equal(arc.x[1:], arc.x[:-1] + steps)
    assert len(arc.t) == arc.config.steps + 1
    assert arc.certified
    assert np.all(arc.psi <= arc.descent_bound())
    assert arc.in_neighbourhood([0.5], 0.4)


def test_zero_feedback_gives_constant_arc():
    arc = ex21_arc(8, "0")
    assert np.all(arc.x == 0.5) and arc.certified


def test_refine_approaches_exact_flow():
    f = feedback("-1")
    rep = refine(f, PSI, [(4, 0.25), (8, 0.125), (16, 0.0625)],
                 reference=lambda t: (0.5 - t)[:, None])
    d = rep.reference_distances
    assert d[0] > d[1] > d[2]
    assert rep.final_margin <= PSI([0.5]) + (rep.final_arc.config.T_prime + 0.4) / 16
    assert rep.failure is None


def test_refine_constant_feedback_is_stationary():
    rep = refine(feedback("0"), PSI, [(4, 0.25), (8, 0.125)])
    assert rep.sup_distances == [0.0] and rep.converged


def test_refine_rejects_bad_schedule():
    with pytest.raises(ValueError):
        refine(feedback("-1"), PSI, [(8, 0.1), (4, 0.05)])
    with pytest.raises(ValueError):
        refine(feedback("-1"), PSI, [])


def test_refine_reports_failure():
    # outward feedback cannot keep psi from growing at the allowed rate
    rep = refine(feedback("1", anchor=0.3), PSI, [(4, 0.25), (8, 0.125)])
    assert rep.failure is not None and rep.failure.startswith("k=4")
    assert rep.arcs == [] and not rep.converged
    assert "aborted" in rep.to_text()


def test_sup_distance_symmetric():
    a, b = ex21_arc(4), ex21_arc(8)
    assert sup_distance(a, b) == sup_distance(b, a)


def test_arc_csv_columns():
    csv = ex21_arc(4).to_csv().splitlines()
    assert csv[0] == "t,x1,v1,psi"
    assert csv[-1].split(",")[2] == "nan"
