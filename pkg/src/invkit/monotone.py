"""Order preservation for product inclusions.

An order is either a positivity cone ``K`` on states (with ``K_u`` on
controls), giving ``x1 >= x2`` iff ``x1 - x2`` is in ``K``, or a closed order
set ``Gamma`` in the doubled state space.  The tangential checks sample
ordered pairs on the boundary of the order and test velocity differences
(or stacked velocities) against the contingent cone there.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .expr import sample_box
from .geometry import (ClosedSet, ConeSpec, PolyhedralCone, Polyhedron, contains, on_boundary,
                       sample_boundary, tangent_margin)
from .inclusion import (ConstantPolicy, ProductInclusion, RandomPolicy, SelectionPolicy,
                        Trajectory, integrate, stack)
from .verdict import FAIL, PASS, Verdict, Witness, worst_first

MAX_WITNESSES = 10


class OrderError(ValueError):
    pass


@dataclass(frozen=True)
class ConeOrder:
    K: ConeSpec
    Ku: Optional[ConeSpec] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.K.pointed:
            raise OrderError("state cone is not pointed")
        if self.Ku is not None and not self.Ku.pointed:
            raise OrderError("control cone is not pointed")

    @property
    def n(self) -> int:
        return self.K.n

    def geq(self, x1, x2, tol: float = 1e-9) -> bool:
        return self.K.contains(np.asarray(x1, float) - np.asarray(x2, float), tol)

    def controls_geq(self, u1, u2, tol: float = 1e-9) -> bool:
        u1, u2 = np.atleast_1d(u1), np.atleast_1d(u2)
        if u1.size == 0:
            return True
        if self.Ku is None:
            return bool(np.allclose(u1, u2))
        return self.Ku.contains(u1 - u2, tol)


@dataclass(frozen=True)
class GammaOrder:
    gamma: ClosedSet
    Ku: Optional[ConeSpec] = None

    @property
    def n(self) -> int:
        return self.gamma.n // 2

    def geq(self, x1, x2, tol: float = 1e-9) -> bool:
        return contains(self.gamma, np.concatenate([np.atleast_1d(x1), np.atleast_1d(x2)]), tol)

    def controls_geq(self, u1, u2, tol: float = 1e-9) -> bool:
        return ConeOrder.controls_geq(self, u1, u2, tol)


def order_to_gamma(order: ConeOrder) -> GammaOrder:
    """Gamma = {(x1, x2) : x1 - x2 in K} as a polyhedron in R^(2n)."""
    rows = order.K.halfspaces()
    rows = rows[np.linalg.norm(rows, axis=1) > 0]
    if rows.shape[0] == 0:
        raise OrderError("K is the whole space; every pair is ordered")
    A = np.hstack([rows, -rows])
    return GammaOrder(Polyhedron(A, np.zeros(A.shape[0])), order.Ku)


def diagonal_gamma(n: int) -> GammaOrder:
    eye = np.eye(n)
    A = np.vstack([np.hstack([eye, -eye]), np.hstack([-eye, eye])])
    return GammaOrder(Polyhedron(A, np.zeros(2 * n)))


@dataclass(frozen=True)
class OrderedPairSample:
    xi1: np.ndarray
    xi2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    boundary: bool

    @classmethod
    def make(cls, order, xi1, xi2, u1=(), u2=(), tol: float = 1e-9) -> "OrderedPairSample":
        xi1, xi2 = np.atleast_1d(np.asarray(xi1, float)), np.atleast_1d(np.asarray(xi2, float))
        u1, u2 = np.atleast_1d(np.asarray(u1, float)), np.atleast_1d(np.asarray(u2, float))
        if not order.geq(xi1, xi2, tol):
            raise OrderError("states are not ordered")
        if not order.controls_geq(u1, u2, tol):
            raise OrderError("controls are not ordered")
        if isinstance(order, ConeOrder):
            bd = on_boundary(PolyhedralCone(order.K), xi1 - xi2, tol) or not np.any(xi1 - xi2)
        else:
            bd = on_boundary(order.gamma, np.concatenate([xi1, xi2]), tol)
        return cls(xi1, xi2, u1, u2, bool(bd))


def ordered_control_pairs(inc: ProductInclusion, order) -> List[Tuple[np.ndarray, np.ndarray]]:
    grid = inc.controls.grid()
    return [(u1, u2) for u1 in grid for u2 in grid if order.controls_geq(u1, u2)]


def cone_boundary_points(K: ConeSpec, count: int = 16, radius: float = 1.0,
                         seed: int = 0) -> np.ndarray:
    """Apex plus per-face samples of bd(K) inside [-radius, radius]^n."""
    n = K.n
    apex = np.zeros((1, n))
    rows = K.halfspaces()
    if rows.size == 0 or not np.any(rows):
        return apex
    pts = sample_boundary(PolyhedralCone(K), count, (-radius * np.ones(n), radius * np.ones(n)), seed)
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-12] if len(pts) else pts
    return np.vstack([apex, pts]) if len(pts) else apex


def _sample_region(order, n, count, radius, seed) -> np.ndarray:
    lo = -radius * np.ones(n) if getattr(order, "lo", None) is None else np.asarray(order.lo, float)
    hi = radius * np.ones(n) if getattr(order, "hi", None) is None else np.asarray(order.hi, float)
    return sample_box(lo, hi, count, seed), lo, hi


def check_monotone_cone(inc: ProductInclusion, order: ConeOrder, *, count: int = 16,
                        bases: int = 8, radius: float = 1.0, seed: int = 0,
                        tol: float = 1e-9) -> Verdict:
    """G(xi1, u1) - G(xi2, u2) inside the contingent cone of K at xi1 - xi2.

    Differences xi1 - xi2 are drawn from bd(K) (apex included), base states
    xi2 from the state box, and control pairs from the ordered grid pairs.
    Extreme velocities suffice because the contingent cone is convex.
    """
    if order.n != inc.n:
        raise ValueError("order and inclusion dimensions differ")
    Kset = PolyhedralCone(order.K)
    diffs = cone_boundary_points(order.K, count, radius, seed)
    base, lo, hi = _sample_region(order, inc.n, bases, radius, seed + 1)
    pairs = ordered_control_pairs(inc, order)
    witnesses = []
    checked = 0
    for c in diffs:
        for xi2 in base:
            xi1 = xi2 + c
            if order.lo is not None and not (np.all(xi1 >= lo) and np.all(xi1 <= hi)):
                continue
            for u1, u2 in pairs:
                V = inc.extreme_velocities(xi1, u1)
                W = inc.extreme_velocities(xi2, u2)
                checked += 1
                for v in V:
                    for w in W:
                        m = tangent_margin(Kset, c, v - w) if np.any(c) else order.K.margin(v - w)
                        if m > tol:
                            witnesses.append(Witness(
                                np.concatenate([xi1, xi2]), c.copy(), v - w, m,
                                {"xi1": xi1, "xi2": xi2, "u1": u1, "u2": u2, "v": v, "w": w}))
    res = {"differences": len(diffs), "bases": len(base), "control_pairs": len(pairs),
           "checked": checked, "radius": radius, "seed": seed, "tol": tol}
    return _verdict(witnesses, res, tol, "velocity differences leave the tangent cone of K")


def check_monotone_gamma(inc: ProductInclusion, order: GammaOrder, *, count: int = 16,
                         radius: float = 1.0, seed: int = 0, tol: float = 1e-9) -> Verdict:
    """Stacked velocities G(xi1, u1) x G(xi2, u2) inside the contingent cone of Gamma."""
    n = inc.n
    if order.gamma.n != 2 * n:
        raise ValueError("order set must live in the doubled state space")
    stacked = stack(inc, inc)
    box = (-radius * np.ones(2 * n), radius * np.ones(2 * n))
    pts = sample_boundary(order.gamma, count, box, seed)
    pairs = ordered_control_pairs(inc, order)
    witnesses = []
    checked = 0
    for xi in pts:
        if not contains(order.gamma, xi, 1e-9):
            continue
        for u1, u2 in pairs:
            checked += 1
            for vw in stacked.extreme_velocities(xi, np.concatenate([u1, u2])):
                m = tangent_margin(order.gamma, xi, vw)
                if m > tol:
                    witnesses.append(Witness(xi.copy(), None, vw, m,
                                             {"u1": u1, "u2": u2, "v": vw[:n], "w": vw[n:]}))
    res = {"boundary_points": len(pts), "control_pairs": len(pairs), "checked": checked,
           "radius": radius, "seed": seed, "tol": tol}
    return _verdict(witnesses, res, tol, "stacked velocities leave the tangent cone of the order set")


def _verdict(witnesses, res, tol, what) -> Verdict:
    if witnesses:
        worst = worst_first(witnesses)[:MAX_WITNESSES]
        return Verdict(FAIL, worst, res,
                       f"{what} in {len(witnesses)} case(s); max margin {worst[0].margin:.6g} > tol {tol:g}")
    return Verdict(PASS, [], res, f"order condition holds on all sampled pairs within tol {tol:g}")


# ---------------------------------------------------------------------------
# simulation


@dataclass
class OrderViolation:
    """First order break of two simulated trajectories on their common time grid."""

    time: float
    margin: float
    index: int
    grid: np.ndarray
    first_states: np.ndarray
    second_states: np.ndarray
    margins: np.ndarray
    first: Trajectory
    second: Trajectory
    policies: Tuple[dict, dict] = ()

    def to_csv(self) -> str:
        n = self.first_states.shape[1]
        head = ["t"] + [f"x{i + 1}_first" for i in range(n)] + \
            [f"x{i + 1}_second" for i in range(n)] + ["margin"]
        lines = [",".join(head)]
        for j, t in enumerate(self.grid):
            row = [t, *self.first_states[j], *self.second_states[j], self.margins[j]]
            lines.append(",".join(repr(float(c)) for c in row))
        return "\n".join(lines) + "\n"


def order_margin(order, x1, x2) -> float:
    """Largest violated order inequality (<= 0 when x1 >= x2)."""
    x1, x2 = np.atleast_1d(x1), np.atleast_1d(x2)
    if isinstance(order, ConeOrder):
        return order.K.margin(x1 - x2)
    xi = np.concatenate([x1, x2])
    if isinstance(order.gamma, Polyhedron):
        return float(np.max(order.gamma.A @ xi - order.gamma.b))
    return -math.inf if contains(order.gamma, xi) else math.inf


def simulate_order_preservation(inc: ProductInclusion, order, pair: OrderedPairSample,
                                policies: Tuple[SelectionPolicy, SelectionPolicy], *,
                                T: float = 1.0, h: float = 1e-3,
                                tol: float = 1e-9) -> Optional[OrderViolation]:
    """Integrate both copies and report the first time the order breaks."""
    p1, p2 = policies
    tr1 = integrate(inc, p1, pair.xi1, T, h)
    tr2 = integrate(inc, p2, pair.xi2, T, h)
    grid = np.union1d(tr1.t, tr2.t)
    a, b = tr1.at(grid), tr2.at(grid)
    margins = np.array([order_margin(order, a[j], b[j]) for j in range(len(grid))])
    bad = np.nonzero(margins > tol)[0]
    if not bad.size:
        return None
    j = int(bad[0])
    return OrderViolation(float(grid[j]), float(margins[j]), j, grid, a, b, margins, tr1, tr2,
                          (p1.describe(), p2.describe()))


class FixedControlPolicy(SelectionPolicy):
    """Wraps a policy and pins the control to a given value."""

    def __init__(self, inner: SelectionPolicy, control):
        self.inner, self.control = inner, control

    def select(self, t, x, inc, h):
        a, deltas = self.inner.select(t, x, inc, h)
        return (a if self.control is None else np.asarray(self.control, float)), deltas

    def describe(self):
        out = dict(self.inner.describe())
        if self.control is not None:
            out["control"] = [float(c) for c in self.control]
        return out


def policy_pairs(inc: ProductInclusion, pair: OrderedPairSample, budget: int,
                 seed: int = 0) -> List[Tuple[SelectionPolicy, SelectionPolicy]]:
    """Constant endpoint selections first, then seeded random pairs."""
    ends = [d(pair.xi1).endpoints() for d in inc.disturbances]
    combos = [np.array(c, float) for c in itertools.product(*ends)]
    u1 = pair.u1 if pair.u1.size else None
    u2 = pair.u2 if pair.u2.size else None
    out = [(ConstantPolicy(c1, u1), ConstantPolicy(c2, u2)) for c1 in combos for c2 in combos]
    out = out[:budget]
    j = 0
    while len(out) < budget:
        out.append((FixedControlPolicy(RandomPolicy(seed + 2 * j), u1),
                    FixedControlPolicy(RandomPolicy(seed + 2 * j + 1), u2)))
        j += 1
    return out


def search_order_violation(inc: ProductInclusion, order, pair: OrderedPairSample, *,
                           budget: int = 100, T: float = 1.0, h: float = 1e-3, seed: int = 0,
                           tol: float = 1e-9):
    """First violating policy pair among ``budget`` candidates, with its index."""
    for j, pols in enumerate(policy_pairs(inc, pair, budget, seed)):
        rec = simulate_order_preservation(inc, order, pair, pols, T=T, h=h, tol=tol)
        if rec is not None:
            return j + 1, rec
    return None, None
