"""Grid and sample checks for strong invariance, plus a trajectory falsifier.

Three sufficient (or, under single-interval disturbances, exact) conditions
are checked on finite point sets:

* the Hamiltonian inequality ``H(x, grad psi(x)) <= 0`` on a box around the
  sublevel set of ``psi``;
* the normal-cone inequality ``H(x, zeta) <= 0`` for proximal normals at
  boundary points of a structured set;
* the tangent containment ``F(x, a)`` inside the contingent cone.

A PASS only holds at the sampled resolution, which every verdict records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .expr import NonsmoothPoint, ScalarField
from .geometry import (ClosedSet, DegenerateBoundary, contains, distance, on_boundary,
                       polar, proximal_normal_cone, sample_boundary, tangent_margin)
from .inclusion import (GreedyAscentPolicy, ProductInclusion, RandomPolicy, SelectionPolicy,
                        Trajectory, integrate)
from .verdict import FAIL, INCONCLUSIVE, PASS, Verdict, Witness, worst_first

MAX_WITNESSES = 10


@dataclass(frozen=True)
class CheckRegion:
    """Closed grid box standing in for an open neighbourhood of the set.

    ``margin`` records how far the box extends beyond the set being
    certified; grids cannot express openness, so it is reported instead.
    """

    lo: np.ndarray
    hi: np.ndarray
    spacing: float
    margin: float = 0.0

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("region needs lo <= hi of equal shape")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return len(self.lo)

    def axes(self) -> List[np.ndarray]:
        out = []
        for a, b in zip(self.lo, self.hi):
            count = int(round((b - a) / self.spacing)) + 1
            out.append(np.linspace(a, b, max(count, 1)))
        return out

    def grid(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def coarsened(self, factor: int) -> "CheckRegion":
        return CheckRegion(self.lo, self.hi, self.spacing * factor, self.margin)

    def resolution(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "spacing": self.spacing,
                "margin": self.margin, "points": int(np.prod([len(a) for a in self.axes()]))}


def _best_velocity(inc: ProductInclusion, x, d):
    """Control, disturbance values and velocity attaining H(x, d)."""
    ds = inc.disturbance_values(x)
    best = None
    for a in inc.controls.grid():
        gs = inc.factor_values(x, a)
        deltas = np.array([D.argsup_linear(float(di * g)) for D, di, g in zip(ds, d, gs)])
        v = gs * deltas
        val = float(v @ d)
        if best is None or val > best[0]:
            best = (val, a, deltas, v)
    return best[1:]


def _witness(inc, x, d, margin, **extra) -> Witness:
    a, _, v = _best_velocity(inc, x, d)
    if inc.m:
        extra["control"] = a
    return Witness(np.array(x, float), np.array(d, float), v, float(margin), extra)


def _finish(witnesses, tol, resolution, inconclusive, what) -> Verdict:
    worst = worst_first(witnesses)[:MAX_WITNESSES]
    if worst:
        return Verdict(FAIL, worst, resolution,
                       f"{what} violated in {len(witnesses)} case(s); max margin {worst[0].margin:.6g} > tol {tol:g}")
    if inconclusive:
        return Verdict(INCONCLUSIVE, [], resolution,
                       f"{len(inconclusive)} point(s) could not be evaluated: {inconclusive[0]}")
    return Verdict(PASS, [], resolution, f"{what} holds at every sampled point within tol {tol:g}")


def _normal_generators(s: ClosedSet, x, tol) -> np.ndarray:
    cone = proximal_normal_cone(s, x, tol)
    gens = cone.generators()
    return gens.reshape(-1, s.n)


# ---------------------------------------------------------------------------
# Hamiltonian condition on a neighbourhood


def check_hamiltonian_condition(inc: ProductInclusion, psi: Union[ScalarField, ClosedSet],
                                region: CheckRegion, tol: float = 1e-9,
                                fallback: Optional[ClosedSet] = None) -> Verdict:
    """H(x, d) <= tol for every grid x and every proximal subgradient d.

    ``psi`` is either a smooth field (subgradient = gradient) or a structured
    set, whose indicator has the proximal normal cone as subdifferential on
    the boundary.  At kinks of a field the ``fallback`` set is used when
    given; otherwise the point makes the verdict INCONCLUSIVE.
    """
    if region.n != inc.n:
        raise ValueError("region dimension differs from the inclusion")
    witnesses, inconclusive = [], []
    max_h = -math.inf
    pts = region.grid()
    for x in pts:
        if not inc.in_domain(x):
            continue
        try:
            if isinstance(psi, ScalarField):
                try:
                    dirs = psi.gradient(x)[None, :]
                except NonsmoothPoint as exc:
                    if fallback is None:
                        inconclusive.append(f"x={x.tolist()}: {exc}")
                        continue
                    if not contains(fallback, x, tol):
                        continue
                    dirs = _normal_generators(fallback, x, tol)
            else:
                if not contains(psi, x, tol):
                    continue  # empty proximal subdifferential outside the set
                dirs = _normal_generators(psi, x, tol)
        except DegenerateBoundary as exc:
            inconclusive.append(f"x={x.tolist()}: {exc}")
            continue
        for d in dirs:
            h = inc.hamiltonian(x, d)
            max_h = max(max_h, h)
            if h > tol:
                witnesses.append(_witness(inc, x, d, h))
    res = region.resolution()
    res.update(tol=tol, max_hamiltonian=max_h if max_h > -math.inf else None,
               nonsmooth_points=len(inconclusive))
    return _finish(witnesses, tol, res, inconclusive, "Hamiltonian inequality")


# ---------------------------------------------------------------------------
# boundary conditions for structured sets


def _boundary_points(s: ClosedSet, samples, count, bounds, seed, tol) -> np.ndarray:
    if samples is not None:
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        return pts.reshape(-1, s.n)
    return sample_boundary(s, count, bounds, seed, tol)


def check_normal_cone_condition(inc: ProductInclusion, s: ClosedSet, samples=None, *,
                                count: int = 64, bounds=None, seed: int = 0,
                                tol: float = 1e-9) -> Verdict:
    """H(x, zeta) <= tol for boundary samples x and normal-cone generators zeta.

    Each point is also tested through the polar description: every extreme
    velocity must lie in the polar of the normal cone.  The two answers
    must agree; a disagreement makes the verdict INCONCLUSIVE.
    """
    pts = _boundary_points(s, samples, count, bounds, seed, tol)
    witnesses, inconclusive = [], []
    disagree = 0
    checked = 0
    for x in pts:
        if not on_boundary(s, x, max(tol, 1e-9)):
            continue
        try:
            cone = proximal_normal_cone(s, x, max(tol, 1e-9))
        except DegenerateBoundary as exc:
            inconclusive.append(f"x={x.tolist()}: {exc}")
            continue
        checked += 1
        gens = cone.generators().reshape(-1, s.n)
        hs = [inc.hamiltonian(x, d) for d in gens]
        ham_ok = all(h <= tol for h in hs)
        pol = polar(cone)
        vel = inc.all_extreme_velocities(x)
        polar_ok = all(pol.contains(v, tol) for v in vel)
        if ham_ok != polar_ok:
            disagree += 1
        for d, h in zip(gens, hs):
            if h > tol:
                witnesses.append(_witness(inc, x, d, h))
    res = {"boundary_points": checked, "tol": tol, "seed": seed, "polar_disagreements": disagree}
    if disagree and not witnesses:
        return Verdict(INCONCLUSIVE, [], res, f"polar cross-check disagreed at {disagree} point(s)")
    if checked == 0 and not inconclusive:
        return Verdict(INCONCLUSIVE, [], res, "no boundary points sampled")
    return _finish(witnesses, tol, res, inconclusive, "normal-cone Hamiltonian inequality")


def check_tangent_condition(inc: ProductInclusion, s: ClosedSet, samples=None, *,
                            count: int = 64, bounds=None, seed: int = 0,
                            tol: float = 1e-9) -> Verdict:
    """Extreme velocities at sampled boundary points lie in the contingent cone.

    Interior points pass automatically.  Without single-interval
    disturbances the condition is only sufficient, which the verdict states.
    """
    pts = _boundary_points(s, samples, count, bounds, seed, tol)
    exact = inc.satisfies_h4()
    witnesses, inconclusive = [], []
    checked = 0
    for x in pts:
        if not contains(s, x, max(tol, 1e-9)):
            continue
        checked += 1
        for a in inc.controls.grid():
            for v in inc.extreme_velocities(x, a):
                try:
                    m = tangent_margin(s, x, v, max(tol, 1e-9))
                except DegenerateBoundary as exc:
                    inconclusive.append(f"x={x.tolist()}: {exc}")
                    continue
                if m > tol:
                    extra = {"control": a} if inc.m else {}
                    witnesses.append(Witness(x.copy(), None, v.copy(), m, extra))
    res = {"points": checked, "tol": tol, "seed": seed,
           "mode": "iff" if exact else "sufficient-only"}
    v = _finish(witnesses, tol, res, inconclusive, "tangent containment")
    if not exact and v.status == FAIL:
        v.reason += " (sufficient-only: failure does not refute invariance)"
    return v


# ---------------------------------------------------------------------------
# falsifier


class GradientAscentPolicy(SelectionPolicy):
    """Maximise <grad psi(x), v>; falls back to one-step lookahead at kinks."""

    def __init__(self, psi: ScalarField):
        self.psi = psi
        self._greedy = GreedyAscentPolicy(psi)

    def select(self, t, x, inc, h):
        try:
            d = self.psi.gradient(x)
        except NonsmoothPoint:
            return self._greedy.select(t, x, inc, h)
        if not np.any(d):
            return self._greedy.select(t, x, inc, h)
        a, deltas, _ = _best_velocity(inc, x, d)
        return a, deltas

    def describe(self):
        return {"policy": "gradient-ascent"}


class _Named(SelectionPolicy):
    def __init__(self, inner, name):
        self.inner, self.name = inner, name

    def select(self, t, x, inc, h):
        return self.inner.select(t, x, inc, h)

    def describe(self):
        return {"policy": self.name}


@dataclass
class FalsifyResult:
    escaped: bool
    trajectory: Optional[Trajectory]
    trial: Optional[int]
    policy: Optional[dict]
    trials: int
    max_measure: float
    exit_tol: float
    per_policy: dict = field(default_factory=dict)
    exit_index: Optional[int] = None
    exit_measure: Optional[float] = None

    @property
    def exit_time(self) -> Optional[float]:
        return None if self.exit_index is None else float(self.trajectory.t[self.exit_index])

    def verdict(self) -> Verdict:
        res = {"trials": self.trials, "exit_tol": self.exit_tol,
               "max_measure": self.max_measure, "per_policy": self.per_policy}
        if not self.escaped:
            return Verdict(PASS, [], res, f"no escape in {self.trials} trial(s) (not a proof)")
        tr = self.trajectory
        i = self.exit_index
        w = Witness(tr.x[i].copy(), None, tr.v[i - 1].copy(), self.exit_measure,
                    {"trial": self.trial, "exit_time": self.exit_time,
                     "policy": self.policy.get("policy")})
        return Verdict(FAIL, [w], res, f"escaping trajectory on trial {self.trial}")


def _measure(target) -> Callable[[np.ndarray], float]:
    if isinstance(target, ScalarField):
        return lambda x: float(target(x))
    return lambda x: float(distance(target, x))


def falsify_invariance(inc: ProductInclusion, target: Union[ScalarField, ClosedSet], x0, *,
                       budget: int = 100, T: float = 1.0, h: float = 1e-2, seed: int = 0,
                       exit_tol: float = 1e-9,
                       policies: Optional[Sequence[SelectionPolicy]] = None) -> FalsifyResult:
    """Search for a trajectory from ``x0`` that leaves the set.

    The first trial is a one-step greedy ascent of the exit measure
    (``psi`` or the distance to the set), the second a gradient ascent when
    ``target`` is a field; the remaining trials use seeded random
    selections.  The first trajectory whose measure exceeds ``exit_tol`` is
    returned whole, with the index of its first exiting node.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    measure = _measure(target)
    if measure(x0) > exit_tol:
        raise ValueError("initial state is not in the set")
    if policies is None:
        policies = [_Named(GreedyAscentPolicy(measure), "greedy")]
        if isinstance(target, ScalarField):
            policies.append(GradientAscentPolicy(target))
    policies = list(policies)[:budget]
    pol_iter = policies + [RandomPolicy(seed + j) for j in range(budget - len(policies))]
    worst = -math.inf
    stats = {}
    for j, pol in enumerate(pol_iter):
        tr = integrate(inc, pol, x0, T, h)
        vals = np.array([measure(p) for p in tr.x])
        worst = max(worst, float(vals.max()))
        name = pol.describe()["policy"]
        stats[name] = max(stats.get(name, -math.inf), float(vals.max()))
        bad = np.nonzero(vals > exit_tol)[0]
        if bad.size:
            i = int(bad[0])
            return FalsifyResult(True, tr, j + 1, pol.describe(), j + 1, float(vals.max()),
                                 exit_tol, stats, i, float(vals[i]))
    return FalsifyResult(False, None, None, None, len(pol_iter), worst, exit_tol, stats)
