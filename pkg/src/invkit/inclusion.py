"""Product-form controlled inclusions ``x' in prod_i g_i(x, a) D_i(x)``.

The disturbance maps ``D_i`` are piecewise: an ordered list of regions
(first match wins) each carrying an :class:`IntervalUnion`, plus a default.
Piecewise constant values make the maps Borel measurable by construction.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .expr import ScalarField, sample_box
from .geometry import ProductSet, ccone_contains, cone_contains
from .intervals import CONE_TAGS, IntervalUnion
from .verdict import FAIL, PASS, Verdict, Witness, worst_first

SUBSTEPS = 64


class HypothesisViolation(ValueError):
    """Declared hypothesis flags contradict the data."""


class DomainExit(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# regions and disturbance maps

_CMP_RE = re.compile(r"(<=|>=|==|<|>)")
_OPS = {
    "<": lambda v: v < 0, "<=": lambda v: v <= 0, "==": lambda v: v == 0,
    ">": lambda v: v > 0, ">=": lambda v: v >= 0,
}


@dataclass(frozen=True)
class Condition:
    field: ScalarField
    op: str

    @classmethod
    def parse(cls, text: str, n: int) -> "Condition":
        parts = _CMP_RE.split(text)
        if len(parts) != 3:
            raise ValueError(f"condition {text!r} needs exactly one comparison")
        lhs, op, rhs = (p.strip() for p in parts)
        return cls(ScalarField.parse(f"({lhs}) - ({rhs})", n), op)

    def holds(self, x) -> bool:
        return bool(_OPS[self.op](self.field.eval(x)))

    def reindexed(self, n: int, offset: int) -> "Condition":
        return Condition(self.field.reindexed(n, 0, offset, 0), self.op)

    def __str__(self):
        return f"{self.field} {self.op} 0"


@dataclass(frozen=True)
class Region:
    conditions: Tuple[Condition, ...]

    def holds(self, x) -> bool:
        return all(c.holds(x) for c in self.conditions)


def _validate_tag(value: IntervalUnion, tag: Optional[str], where: str) -> str:
    actual = value.cone_tag()
    if tag is not None:
        if tag not in CONE_TAGS:
            raise HypothesisViolation(f"{where}: unknown cone tag {tag!r}")
        if tag != actual:
            raise HypothesisViolation(f"{where}: cone tag {tag!r} but intervals {value} give {actual!r}")
    return actual


@dataclass(frozen=True)
class DisturbanceMap:
    """Piecewise interval-union valued map on R^n with hypothesis flags."""

    regions: Tuple[Tuple[Region, IntervalUnion, str], ...]
    default: IntervalUnion
    default_tag: str
    h3: bool
    h4: bool
    bound: float = field(init=False)

    def __post_init__(self):
        values = [v for _, v, _ in self.regions] + [self.default]
        object.__setattr__(self, "bound", max(max(abs(v.lo), abs(v.hi)) for v in values))
        tags = [t for _, _, t in self.regions] + [self.default_tag]
        if self.h3:
            if any(not v.contains(0.0) for v in values):
                raise HypothesisViolation("H3 flagged but 0 is missing from some region value")
            if len(set(tags)) != 1:
                raise HypothesisViolation(f"H3 flagged but cone{{D}} varies: {sorted(set(tags))}")
        if self.h4:
            if any(not v.is_interval for v in values):
                raise HypothesisViolation("H4 flagged but some region value is not an interval")

    @classmethod
    def build(cls, regions: Sequence[Tuple[Region, IntervalUnion, Optional[str]]],
              default: IntervalUnion, default_tag: Optional[str] = None, *,
              h3: bool, h4: bool) -> "DisturbanceMap":
        regs = tuple((r, v, _validate_tag(v, tag, f"region {i + 1}"))
                     for i, (r, v, tag) in enumerate(regions))
        dtag = _validate_tag(default, default_tag, "default region")
        return cls(regs, default, dtag, h3, h4)

    @classmethod
    def constant(cls, value, *, h3: Optional[bool] = None, h4: Optional[bool] = None):
        value = value if isinstance(value, IntervalUnion) else IntervalUnion(value)
        h3 = value.contains(0.0) if h3 is None else h3
        h4 = value.is_interval if h4 is None else h4
        return cls.build((), value, h3=h3, h4=h4)

    def region_index(self, x) -> int:
        for i, (r, _, _) in enumerate(self.regions):
            if r.holds(x):
                return i
        return len(self.regions)

    def value_at_index(self, i: int) -> IntervalUnion:
        return self.regions[i][1] if i < len(self.regions) else self.default

    def __call__(self, x) -> IntervalUnion:
        return self.value_at_index(self.region_index(x))

    def values(self) -> List[IntervalUnion]:
        return [v for _, v, _ in self.regions] + [self.default]

    def always_contains_zero(self) -> bool:
        return all(v.contains(0.0) for v in self.values())

    def reindexed(self, n: int, offset: int) -> "DisturbanceMap":
        regs = tuple((Region(tuple(c.reindexed(n, offset) for c in r.conditions)), v, t)
                     for r, v, t in self.regions)
        return DisturbanceMap(regs, self.default, self.default_tag, self.h3, self.h4)


# ---------------------------------------------------------------------------
# control sets


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Finite control set, or a box discretised on a per-axis grid."""

    points: np.ndarray
    kind: str = "finite"
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    resolution: int = 1

    @classmethod
    def finite(cls, points, m: Optional[int] = None) -> "ControlSet":
        pts = np.asarray(points, dtype=float)
        if m is not None:
            pts = pts.reshape(-1, m)
        elif pts.ndim < 2:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise ValueError("control set must be nonempty")
        return cls(pts)

    @classmethod
    def box(cls, lo, hi, resolution: int = 5) -> "ControlSet":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(lo > hi):
            raise ValueError("control box needs lo <= hi")
        axes = [np.linspace(a, b, resolution) if b > a else np.array([a]) for a, b in zip(lo, hi)]
        pts = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(lo))
        return cls(pts, "box", lo, hi, resolution)

    @classmethod
    def none(cls) -> "ControlSet":
        return cls(np.zeros((1, 0)))

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def grid(self) -> np.ndarray:
        return self.points

    def product(self, other: "ControlSet") -> "ControlSet":
        if self.kind == "box" and other.kind == "box" and self.resolution == other.resolution:
            return ControlSet.box(np.concatenate([self.lo, other.lo]),
                                  np.concatenate([self.hi, other.hi]), self.resolution)
        pts = [np.concatenate([p, q]) for p in self.points for q in other.points]
        return ControlSet(np.array(pts).reshape(len(pts), self.m + other.m))


# ---------------------------------------------------------------------------
# the inclusion


@dataclass(frozen=True, eq=False)
class ProductInclusion:
    n: int
    factors: Tuple[ScalarField, ...]
    disturbances: Tuple[DisturbanceMap, ...]
    controls: ControlSet
    domain: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be >= 1")
        if len(self.factors) != self.n or len(self.disturbances) != self.n:
            raise ValueError("need one factor and one disturbance map per axis")
        for g in self.factors:
            if g.uses_time:
                raise ValueError("factors may depend on x and a only")
            if g.n != self.n or g.m != self.controls.m:
                raise ValueError("factor dimensions disagree with the inclusion")

    @property
    def m(self) -> int:
        return self.controls.m

    def in_domain(self, x) -> bool:
        if self.domain is None:
            return True
        lo, hi = self.domain
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def region_key(self, x) -> Tuple[int, ...]:
        return tuple(d.region_index(x) for d in self.disturbances)

    def disturbance_values(self, x) -> List[IntervalUnion]:
        return [d(x) for d in self.disturbances]

    def factor_values(self, x, a) -> np.ndarray:
        return np.array([g.eval(x, a) for g in self.factors])

    def velocity_set(self, x, a=None) -> ProductSet:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a = np.zeros(self.m) if a is None else np.atleast_1d(np.asarray(a, dtype=float))
        gs = self.factor_values(x, a)
        return ProductSet([d.scale(float(g)) for g, d in zip(gs, self.disturbance_values(x))])

    def velocity_sets(self, x) -> List[ProductSet]:
        return [self.velocity_set(x, a) for a in self.controls.grid()]

    def hamiltonian(self, x, d) -> float:
        """sup <v, d> over velocities, separable per axis, max over the control grid."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = np.atleast_1d(np.asarray(d, dtype=float))
        ds = self.disturbance_values(x)
        best = -math.inf
        for a in self.controls.grid():
            gs = self.factor_values(x, a)
            best = max(best, sum(D.sup_linear(float(di * g)) for D, di, g in zip(ds, d, gs)))
        return float(best)

    def extreme_velocities(self, x, a=None) -> np.ndarray:
        return self.velocity_set(x, a).vertices()

    def all_extreme_velocities(self, x) -> np.ndarray:
        return np.vstack([self.extreme_velocities(x, a) for a in self.controls.grid()])

    def satisfies_h4(self) -> bool:
        return all(d.h4 for d in self.disturbances)


def stack(inc1: ProductInclusion, inc2: ProductInclusion) -> ProductInclusion:
    """Two independent copies side by side: F(x) = F1(x1) x F2(x2)."""
    n, m = inc1.n + inc2.n, inc1.m + inc2.m
    factors = tuple(g.reindexed(n, m, 0, 0) for g in inc1.factors) + \
        tuple(g.reindexed(n, m, inc1.n, inc1.m) for g in inc2.factors)
    dists = tuple(d.reindexed(n, 0) for d in inc1.disturbances) + \
        tuple(d.reindexed(n, inc1.n) for d in inc2.disturbances)
    domain = None
    if inc1.domain is not None or inc2.domain is not None:
        def box(inc):
            if inc.domain is None:
                return np.full(inc.n, -np.inf), np.full(inc.n, np.inf)
            return inc.domain
        (l1, h1), (l2, h2) = box(inc1), box(inc2)
        domain = (np.concatenate([l1, l2]), np.concatenate([h1, h2]))
    return ProductInclusion(n, factors, dists, inc1.controls.product(inc2.controls), domain)


@dataclass(frozen=True)
class FiniteInclusion:
    """A general (non-product) inclusion with finitely many velocities per state."""

    n: int
    velocities: Callable[[np.ndarray], np.ndarray]

    def hamiltonian(self, x, d) -> float:
        return float(np.max(np.atleast_2d(self.velocities(x)) @ np.asarray(d, float)))


# ---------------------------------------------------------------------------
# feedback realizations


@dataclass(frozen=True)
class FeedbackRealization:
    """Single-valued f(t, x), anchored at ``anchor`` with locality radius ``gamma``."""

    components: Tuple[ScalarField, ...]
    T: float
    gamma: float
    anchor: Tuple[float, ...]

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if len(self.anchor) != self.n:
            raise ValueError("anchor dimension mismatch")

    @classmethod
    def parse(cls, exprs: Sequence, T: float, gamma: float, anchor) -> "FeedbackRealization":
        anchor = tuple(float(v) for v in np.atleast_1d(anchor))
        n = len(anchor)
        return cls(tuple(ScalarField.parse(e, n) for e in exprs), float(T), float(gamma), anchor)

    @property
    def n(self) -> int:
        return len(self.components)

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([c.eval(x, None, t) for c in self.components])

    def eval_batch(self, t: float, xs: np.ndarray) -> np.ndarray:
        """Values at many states, ``xs`` of shape (N, n) -> (N, n)."""
        cols = [np.broadcast_to(c.eval(xs.T, None, t), (xs.shape[0],)) for c in self.components]
        return np.column_stack(cols)


def sample_ball(center, radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic points in a closed Euclidean ball (center and axis extremes included)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    n = len(center)
    pts = sample_box(-np.ones(n), np.ones(n), max(4 * count, 16), seed)
    pts = pts[np.linalg.norm(pts, axis=1) <= 1.0][:count]
    eye = np.eye(n)
    pts = np.vstack([np.zeros((1, n)), eye, -eye, pts])
    return center + radius * pts


# ---------------------------------------------------------------------------
# structural checks


def weakly_zeroing_check(inc, lo, hi, samples: int = 64, seed: int = 0,
                         tol: float = 1e-12) -> Verdict:
    """Axis-embedded velocities must stay admissible."""
    res = {"samples": samples, "region": [list(np.atleast_1d(lo)), list(np.atleast_1d(hi))]}
    if isinstance(inc, ProductInclusion) and all(d.always_contains_zero() for d in inc.disturbances):
        return Verdict(PASS, resolution=res, reason="structural: product form with 0 in every D_i")
    n = inc.n
    if n == 1:
        return Verdict(PASS, resolution=res, reason="single axis")
    pts = sample_box(np.atleast_1d(lo), np.atleast_1d(hi), samples, seed)
    for x in pts:
        if isinstance(inc, ProductInclusion):
            sets = inc.velocity_sets(x)
            cands = np.vstack([s.endpoint_grid() for s in sets])
            member = lambda v: any(s.contains(v, tol) for s in sets)  # noqa: E731
        else:
            cands = np.atleast_2d(inc.velocities(x))
            member = lambda v: bool(np.any(np.all(np.abs(cands - v) <= tol, axis=1)))  # noqa: E731
        for p in cands:
            for i in range(n):
                e = np.zeros(n)
                e[i] = p[i]
                if not member(e):
                    w = Witness(x, velocity=p, margin=float(abs(p[i])) or 1.0,
                                extra={"axis": i + 1, "embedded": e})
                    return Verdict(FAIL, [w], res, reason="axis embedding not admissible")
    return Verdict(PASS, resolution=res, reason="sampled")


def _realization_check(inc: ProductInclusion, f: FeedbackRealization, samples: int,
                       seed: int, member, label: str) -> Verdict:
    rng = np.random.default_rng(seed)
    horizon = min(f.gamma, f.T)
    times = np.sort(rng.uniform(0.0, horizon, size=max(4, int(math.sqrt(samples)))))
    times = np.concatenate([[0.0], times])
    xs = sample_ball(f.anchor, f.gamma, samples, seed)
    res = {"samples": int(len(xs)), "times": int(len(times)), "gamma": f.gamma,
           "control_grid": int(len(inc.controls.grid()))}
    bad = []
    for x in xs:
        sets = inc.velocity_sets(x)
        for t in times:
            q = f(float(t), x)
            if not member(sets, q):
                bad.append(Witness(x, velocity=q, margin=1.0, extra={"t": float(t)}))
    if bad:
        return Verdict(FAIL, worst_first(bad)[:10], res, reason=f"f(t,x) outside {label}{{F(x)}}")
    return Verdict(PASS, resolution=res, reason=f"f(t,x) in {label}{{F(x)}} on all samples")


def realization_ccone_check(inc: ProductInclusion, f: FeedbackRealization,
                            samples: int = 64, seed: int = 0) -> Verdict:
    return _realization_check(inc, f, samples, seed, ccone_contains, "ccone")


def realization_cone_check(inc: ProductInclusion, f: FeedbackRealization,
                           samples: int = 64, seed: int = 0) -> Verdict:
    """The stricter single-multiplier variant, for comparison."""
    return _realization_check(inc, f, samples, seed,
                              lambda sets, q: cone_contains(sets, q), "cone")


# ---------------------------------------------------------------------------
# selection policies


class SelectionPolicy:
    """Chooses (control, raw disturbance values); the integrator projects them."""

    def select(self, t: float, x: np.ndarray, inc: ProductInclusion, h: float):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"policy": type(self).__name__}


@dataclass
class ConstantPolicy(SelectionPolicy):
    deltas: Sequence[float]
    control: Optional[Sequence[float]] = None

    def select(self, t, x, inc, h):
        a = inc.controls.grid()[0] if self.control is None else np.asarray(self.control, float)
        return a, np.asarray(self.deltas, dtype=float)

    def describe(self):
        return {"policy": "constant", "deltas": list(map(float, self.deltas)),
                "control": None if self.control is None else list(map(float, self.control))}


@dataclass
class PiecewiseConstantPolicy(SelectionPolicy):
    times: Sequence[float]
    deltas: Sequence[Sequence[float]]
    controls: Optional[Sequence[Sequence[float]]] = None

    def select(self, t, x, inc, h):
        j = max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)
        a = inc.controls.grid()[0] if self.controls is None else np.asarray(self.controls[j], float)
        return a, np.asarray(self.deltas[j], dtype=float)


@dataclass
class AdversarialPolicy(SelectionPolicy):
    """Maximise <direction(x), v> per step; ties go to the smallest |delta|."""

    direction: Sequence[ScalarField]

    def select(self, t, x, inc, h):
        dvec = np.array([c.eval(x) for c in self.direction])
        ds = inc.disturbance_values(x)
        best = None
        for a in inc.controls.grid():
            gs = inc.factor_values(x, a)
            deltas = np.array([D.argsup_linear(float(di * g)) for D, di, g in zip(ds, dvec, gs)])
            score = float(np.sum(dvec * gs * deltas))
            if best is None or score > best[0] + 1e-15:
                best = (score, a, deltas)
        return best[1], best[2]


@dataclass
class GreedyAscentPolicy(SelectionPolicy):
    """One-step lookahead maximising psi(x + h v) over extreme velocities."""

    psi: Callable[[np.ndarray], float]
    max_combos: int = 256

    def select(self, t, x, inc, h):
        ds = inc.disturbance_values(x)
        choices = [D.endpoints() for D in ds]
        combos = list(itertools.islice(itertools.product(*choices), self.max_combos))
        best = None
        for a in inc.controls.grid():
            gs = inc.factor_values(x, a)
            for c in combos:
                deltas = np.asarray(c, dtype=float)
                v = gs * deltas
                key = (float(self.psi(x + h * v)), -float(np.linalg.norm(v)))
                if best is None or key > best[0]:
                    best = (key, a, deltas)
        return best[1], best[2]


class RandomPolicy(SelectionPolicy):
    """Seeded random selections; endpoints are drawn half of the time."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def select(self, t, x, inc, h):
        grid = inc.controls.grid()
        a = grid[self.rng.integers(len(grid))]
        out = []
        for D in inc.disturbance_values(x):
            lo, hi = D.pieces[self.rng.integers(len(D.pieces))]
            if self.rng.random() < 0.5:
                out.append(lo if self.rng.random() < 0.5 else hi)
            else:
                out.append(self.rng.uniform(lo, hi))
        return a, np.array(out)

    def describe(self):
        return {"policy": "random", "seed": self.seed}


# ---------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    a: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    policy: dict = field(default_factory=dict)

    def at(self, times) -> np.ndarray:
        """Piecewise-linear interpolation of the states."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.column_stack([np.interp(times, self.t, self.x[:, j])
                                for j in range(self.x.shape[1])])

    def to_csv(self) -> str:
        n, m = self.x.shape[1], self.a.shape[1]
        head = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"a{i + 1}" for i in range(m)] + \
            [f"delta{i + 1}" for i in range(n)]
        lines = [",".join(head)]
        for k in range(len(self.t)):
            if k < len(self.a):
                tail = [repr(float(c)) for c in self.a[k]] + [repr(float(c)) for c in self.delta[k]]
            else:
                tail = ["nan"] * (m + n)
            lines.append(",".join([repr(float(self.t[k]))] + [repr(float(c)) for c in self.x[k]] + tail))
        return "\n".join(lines) + "\n"


def _first_change(inc, x, v, length, key) -> Optional[int]:
    """Index j in 1..SUBSTEPS of the first sub-step landing in another region."""
    if inc.region_key(x + length * v) == key:
        return None
    sub = length / SUBSTEPS
    for j in range(1, SUBSTEPS + 1):
        if inc.region_key(x + j * sub * v) != key:
            return j
    return None


def integrate(inc: ProductInclusion, policy: SelectionPolicy, x0, T: float,
              h: float) -> Trajectory:
    """Explicit Euler path with valid selections and region-boundary refinement.

    Each applied disturbance value lies in ``D_i`` of the region containing
    the node it is applied from.  A step that would cross into another
    region is cut back to the last sub-step (``h/64``) before the crossing.
    When the very first sub-step already crosses, the selection is
    re-projected onto the entered region's values; it is kept if it is also
    admissible at the current node, which lets states rest on a boundary.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if not inc.in_domain(x):
        raise DomainExit(f"initial state {x} outside the domain")
    ts, xs, as_, dl, vs = [0.0], [x.copy()], [], [], []
    t = 0.0
    eps_t = 1e-12 * max(T, 1.0)
    while t < T - eps_t:
        length = min(h, T - t)
        a, raw = policy.select(t, x, inc, length)
        a = np.atleast_1d(np.asarray(a, dtype=float)).reshape(inc.m)
        key = inc.region_key(x)
        ds = [inc.disturbances[i].value_at_index(key[i]) for i in range(inc.n)]
        delta = np.array([D.project(float(r)) for D, r in zip(ds, raw)])
        g = inc.factor_values(x, a)
        v = g * delta
        j = _first_change(inc, x, v, length, key)
        sub = length / SUBSTEPS
        if j is not None and j > 1:
            length = (j - 1) * sub
        elif j == 1:
            entered = inc.disturbance_values(x + sub * v)
            alt = np.array([E.project(float(d)) for E, d in zip(entered, delta)])
            if all(D.contains(float(c)) for D, c in zip(ds, alt)):
                v_alt = g * alt
                j_alt = _first_change(inc, x, v_alt, length, key)
                if j_alt is None:
                    delta, v = alt, v_alt
                elif j_alt > 1:
                    delta, v, length = alt, v_alt, (j_alt - 1) * sub
                else:
                    length = sub
            else:
                length = sub
        x = x + length * v
        t = t + length
        if not inc.in_domain(x):
            raise DomainExit(f"state {x} left the domain at t={t:g}")
        ts.append(t)
        xs.append(x.copy())
        as_.append(a)
        dl.append(delta)
        vs.append(v)
    k = len(dl)
    return Trajectory(np.array(ts), np.array(xs),
                      np.array(as_, dtype=float).reshape(k, inc.m),
                      np.array(dl, dtype=float).reshape(k, inc.n),
                      np.array(vs, dtype=float).reshape(k, inc.n), policy.describe())


def selection_valid(inc: ProductInclusion, traj: Trajectory) -> bool:
    """Every applied delta lies in D_i at its node and v = g * delta."""
    for k in range(len(traj.delta)):
        x = traj.x[k]
        ds = inc.disturbance_values(x)
        if not all(D.contains(float(d)) for D, d in zip(ds, traj.delta[k])):
            return False
        if not np.array_equal(inc.factor_values(x, traj.a[k]) * traj.delta[k], traj.v[k]):
            return False
    return True
