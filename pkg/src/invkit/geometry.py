"""Structured closed sets, polyhedral cones, normal and tangent cones.

All cones here are polyhedral.  A :class:`ConeSpec` carries a halfspace
description ``{v : rows @ v <= 0}`` and/or a generator description
``{sum lambda_j g_j : lambda >= 0}``; the missing one is computed on demand
by exact rational ray enumeration (supported for n <= 4).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog, lsq_linear

from .expr import ScalarField, sample_box
from .intervals import IntervalUnion, ratio_set

MAX_ENUM_DIM = 4
TANGENT_STEPS = (1e-2, 1e-3, 1e-4)


class DegenerateBoundary(ArithmeticError):
    """Zero gradient of the defining function at a boundary point."""


class NonConvexVariant(ValueError):
    pass


class DimensionTooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# exact rational helpers


def _frac_matrix(a) -> List[List[Fraction]]:
    return [[Fraction(float(v)) for v in row] for row in np.atleast_2d(a)]


def _rref(rows: List[List[Fraction]], n: int):
    m = [r[:] for r in rows]
    pivots = []
    r = 0
    for c in range(n):
        p = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def _nullspace(rows: List[List[Fraction]], n: int) -> List[List[Fraction]]:
    if not rows:
        return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    red, pivots = _rref(rows, n)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -red[i][fc]
        basis.append(v)
    return basis


def _normalize(v: List[Fraction]) -> Tuple[Fraction, ...]:
    s = max(abs(c) for c in v)
    return tuple(c / s for c in v)


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _enumerate_rays(rows: List[List[Fraction]], n: int) -> List[Tuple[Fraction, ...]]:
    """Generators (lineality +/- basis and extreme rays) of {v : rows v <= 0}."""
    lin = _nullspace(rows, n)
    gens = []
    for b in lin:
        nb = _normalize(b)
        gens.append(nb)
        gens.append(tuple(-c for c in nb))
    # extreme rays of C intersected with the orthogonal complement of lineality
    eq = [list(b) for b in lin]
    d = n - len(lin)
    if d == 0:
        return sorted(set(gens))
    rays = set()
    for combo in itertools.combinations(range(len(rows)), d - 1):
        sub = [rows[i] for i in combo] + eq
        ns = _nullspace(sub, n)
        if len(ns) != 1:
            continue
        r = _normalize(ns[0])
        for s in (1, -1):
            cand = tuple(s * c for c in r)
            if all(_dot(row, cand) <= 0 for row in rows):
                rays.add(cand)
    return sorted(set(gens)) + sorted(rays)


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Polyhedral convex cone in R^n."""

    n: int
    rows: Optional[np.ndarray] = None
    gens: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.rows is None and self.gens is None:
            raise ValueError("cone needs rows or generators")
        for name in ("rows", "gens"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float).reshape(-1, self.n)
                object.__setattr__(self, name, arr)

    @classmethod
    def from_rows(cls, rows, n: Optional[int] = None) -> "ConeSpec":
        rows = np.asarray(rows, dtype=float)
        n = rows.shape[-1] if n is None else n
        return cls(n, rows=rows.reshape(-1, n))

    @classmethod
    def from_generators(cls, gens, n: Optional[int] = None) -> "ConeSpec":
        gens = np.asarray(gens, dtype=float)
        n = gens.shape[-1] if n is None else n
        return cls(n, gens=gens.reshape(-1, n))

    @classmethod
    def orthant(cls, n: int, sign: int = 1) -> "ConeSpec":
        eye = np.eye(n)
        return cls(n, rows=-sign * eye, gens=sign * eye)

    @classmethod
    def full(cls, n: int) -> "ConeSpec":
        eye = np.eye(n)
        return cls(n, rows=np.zeros((0, n)), gens=np.vstack([eye, -eye]))

    @classmethod
    def zero(cls, n: int) -> "ConeSpec":
        eye = np.eye(n)
        return cls(n, rows=np.vstack([eye, -eye]), gens=np.zeros((0, n)))

    def halfspaces(self) -> np.ndarray:
        if self.rows is None:
            if "rows" not in self._cache:
                self._cache["rows"] = _convert(self.gens, self.n)
            return self._cache["rows"]
        return self.rows

    def generators(self) -> np.ndarray:
        if self.gens is None:
            if "gens" not in self._cache:
                self._cache["gens"] = _convert(self.rows, self.n)
            return self._cache["gens"]
        return self.gens

    def contains(self, v, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        if self.rows is not None or self.n <= MAX_ENUM_DIM:
            h = self.halfspaces()
            return bool(h.size == 0 or np.all(h @ v <= tol))
        g = self.gens
        if g.size == 0:
            return bool(np.linalg.norm(v) <= tol)
        # bounded least squares; scipy's nnls misreports some rank-deficient cases
        fit = lsq_linear(g.T, v, bounds=(0.0, np.inf))
        return bool(np.linalg.norm(g.T @ fit.x - v) <= tol)

    def margin(self, v) -> float:
        """max_j rows_j . v (<= 0 inside); 0 for the full space."""
        h = self.halfspaces()
        return float(np.max(h @ np.asarray(v, float))) if h.size else -math.inf

    @property
    def pointed(self) -> bool:
        if "pointed" not in self._cache:
            self._cache["pointed"] = _is_pointed(self.generators())
        return self._cache["pointed"]

    @property
    def convex(self) -> bool:
        return True

    def is_full(self) -> bool:
        return self.halfspaces().size == 0 or not np.any(self.halfspaces())


def _convert(mat: np.ndarray, n: int) -> np.ndarray:
    """Generators of {v : mat v <= 0}; also rows of a cone from its generators."""
    if n > MAX_ENUM_DIM:
        raise DimensionTooLarge(f"ray enumeration supports n <= {MAX_ENUM_DIM}; use halfspace queries")
    rows = [r for r in _frac_matrix(mat) if any(r)] if mat.size else []
    rays = _enumerate_rays(rows, n)
    if not rays:
        return np.zeros((0, n))
    return np.array([[float(c) for c in r] for r in rays])


def _is_pointed(gens: np.ndarray) -> bool:
    """No nonzero lambda >= 0 with sum lambda_j g_j = 0 (LP feasibility)."""
    gens = gens[np.linalg.norm(gens, axis=1) > 0] if gens.size else gens
    if gens.shape[0] == 0:
        return True
    k, n = gens.shape
    a_eq = np.vstack([gens.T, np.ones((1, k))])
    b_eq = np.concatenate([np.zeros(n), [1.0]])
    res = linprog(np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
    return res.status != 0


def polar(cone: ConeSpec) -> ConeSpec:
    """Polar cone: rows and generators swap roles."""
    return ConeSpec(cone.n, rows=cone.generators(), gens=cone.halfspaces())


def same_cone(c1: ConeSpec, c2: ConeSpec, tol: float = 1e-9) -> bool:
    return (all(c2.contains(g, tol) for g in c1.generators())
            and all(c1.contains(g, tol) for g in c2.generators()))


# ---------------------------------------------------------------------------
# component cone / cone of finite or product sets


class ProductSet:
    """Cartesian product of one-dimensional interval unions."""

    def __init__(self, factors: Sequence[IntervalUnion]):
        self.factors = tuple(f if isinstance(f, IntervalUnion) else IntervalUnion([f])
                             for f in factors)

    @classmethod
    def box(cls, lo, hi) -> "ProductSet":
        return cls([IntervalUnion([(a, b)]) for a, b in zip(lo, hi)])

    @property
    def n(self) -> int:
        return len(self.factors)

    def vertices(self) -> np.ndarray:
        """Endpoint combinations: extreme points of the convex hull are among them."""
        return np.array(list(itertools.product(*[(f.lo, f.hi) for f in self.factors])))

    def endpoint_grid(self) -> np.ndarray:
        return np.array(list(itertools.product(*[f.endpoints() for f in self.factors])))

    def contains(self, v, tol: float = 0.0) -> bool:
        return all(f.contains(float(c), tol) for f, c in zip(self.factors, v))

    def __iter__(self):
        return iter(self.factors)

    def __str__(self) -> str:
        return " x ".join(f"({f})" for f in self.factors)


PointSets = Union[np.ndarray, ProductSet, Sequence[ProductSet]]


def _as_candidates(P) -> Tuple[str, list]:
    if isinstance(P, ProductSet):
        return "product", [P]
    if isinstance(P, (list, tuple)) and P and isinstance(P[0], ProductSet):
        return "product", list(P)
    arr = np.atleast_2d(np.asarray(P, dtype=float))
    if arr.size == 0:
        raise ValueError("point set must be nonempty")
    return "points", list(arr)


def ccone_contains(P: PointSets, q, tol: float = 0.0) -> bool:
    """q in ccone{P}: some p in P with q_i in cone{p_i} for every i."""
    q = np.asarray(q, dtype=float)
    kind, cands = _as_candidates(P)
    for p in cands:
        ok = True
        for i, qi in enumerate(q):
            if abs(qi) <= tol:
                continue
            if kind == "points":
                pi = p[i]
                good = (qi > 0 and pi > 0) or (qi < 0 and pi < 0)
            else:
                f = p.factors[i]
                good = f.has_positive() if qi > 0 else f.has_negative()
            if not good:
                ok = False
                break
        if ok:
            return True
    return False


def cone_contains(P: PointSets, q, tol: float = 1e-12) -> bool:
    """q in cone{P}: q = lambda p for some p in P and lambda >= 0."""
    q = np.asarray(q, dtype=float)
    if np.all(np.abs(q) <= tol):
        return True
    kind, cands = _as_candidates(P)
    for p in cands:
        if kind == "points":
            p = np.asarray(p, float)
            j = int(np.argmax(np.abs(p)))
            if p[j] == 0:
                continue
            lam = q[j] / p[j]
            if lam >= 0 and np.allclose(lam * p, q, rtol=0, atol=tol * (1 + abs(lam))):
                return True
        else:
            # shared multiplier mu = 1/lambda > 0 with mu q_i in factor i
            feas = [(0.0, math.inf)]
            for f, qi in zip(p.factors, q):
                rs = ratio_set(f, float(qi))
                feas = [(max(a, c), min(b, d)) for a, b in feas for c, d in rs
                        if max(a, c) <= min(b, d)]
                if not feas:
                    break
            if any(b > 0 and (a < b or a > 0) for a, b in feas):
                return True
    return False


# ---------------------------------------------------------------------------
# closed sets


@dataclass(frozen=True)
class SmoothSublevel:
    """{x : psi(x) <= 0}; ``convex`` is a user certificate."""

    psi: ScalarField
    convex: bool = False
    anchor: Optional[Tuple[float, ...]] = None

    @property
    def n(self) -> int:
        return self.psi.n


@dataclass(frozen=True, eq=False)
class Polyhedron:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b row counts differ")
        if np.any(np.linalg.norm(A, axis=1) == 0):
            raise ValueError("polyhedron rows must be nonzero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    cone: ConeSpec

    @property
    def n(self) -> int:
        return self.cone.n


@dataclass(frozen=True, eq=False)
class Singleton:
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))

    @property
    def n(self) -> int:
        return len(self.p)


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return len(self.lo)


ClosedSet = Union[SmoothSublevel, Polyhedron, PolyhedralCone, Singleton, Box]
_CONVEX = (Polyhedron, PolyhedralCone, Singleton, Box)


def as_polyhedron(s: ClosedSet) -> Optional[Polyhedron]:
    if isinstance(s, Polyhedron):
        return s
    if isinstance(s, Box):
        eye = np.eye(s.n)
        return Polyhedron(np.vstack([eye, -eye]), np.concatenate([s.hi, -s.lo]))
    if isinstance(s, PolyhedralCone):
        rows = s.cone.halfspaces()
        rows = rows[np.linalg.norm(rows, axis=1) > 0]
        if rows.shape[0] == 0:
            return None
        return Polyhedron(rows, np.zeros(rows.shape[0]))
    return None


def _check_dim(s: ClosedSet, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (s.n,):
        raise ValueError(f"point of shape {x.shape} for a set in R^{s.n}")
    return x


def contains(s: ClosedSet, x, tol: float = 1e-9) -> bool:
    x = _check_dim(s, x)
    if isinstance(s, SmoothSublevel):
        return s.psi(x) <= tol
    if isinstance(s, Singleton):
        return float(np.linalg.norm(x - s.p)) <= tol
    if isinstance(s, Box):
        return bool(np.all(x >= s.lo - tol) and np.all(x <= s.hi + tol))
    poly = as_polyhedron(s)
    if poly is None:
        return True
    return bool(np.all(poly.A @ x <= poly.b + tol))


def _active_rows(poly: Polyhedron, x, tol: float) -> np.ndarray:
    return poly.A[np.abs(poly.A @ x - poly.b) <= tol * (1 + np.abs(poly.b))]


def on_boundary(s: ClosedSet, x, tol: float = 1e-9) -> bool:
    x = _check_dim(s, x)
    if isinstance(s, SmoothSublevel):
        return abs(s.psi(x)) <= tol
    if isinstance(s, Singleton):
        return contains(s, x, tol)
    poly = as_polyhedron(s)
    if poly is None:
        return False
    return contains(s, x, tol) and _active_rows(poly, x, tol).shape[0] > 0


def proximal_normal_cone(s: ClosedSet, x, tol: float = 1e-9) -> ConeSpec:
    """Proximal normal cone at a point of the set (``{0}`` in the interior)."""
    x = _check_dim(s, x)
    n = s.n
    if not contains(s, x, tol):
        raise ValueError("point is not in the set")
    if isinstance(s, Singleton):
        return ConeSpec.full(n)
    if isinstance(s, SmoothSublevel):
        if s.psi(x) < -tol:
            return ConeSpec.zero(n)
        g = s.psi.gradient(x)
        if np.linalg.norm(g) <= tol:
            raise DegenerateBoundary(f"zero gradient of the sublevel function at {x}")
        return ConeSpec.from_generators(g[None, :])
    poly = as_polyhedron(s)
    if poly is None:
        return ConeSpec.zero(n)
    act = _active_rows(poly, x, tol)
    if act.shape[0] == 0:
        return ConeSpec.zero(n)
    return ConeSpec.from_generators(act)


def bouligand_contains(s: ClosedSet, x, v, tol: float = 1e-9) -> bool:
    """v in the contingent cone of the set at x (exact for structured variants)."""
    x = _check_dim(s, x)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if isinstance(s, Singleton):
        return float(np.linalg.norm(v)) <= tol
    if isinstance(s, SmoothSublevel):
        if s.psi(x) < -tol:
            return True
        g = s.psi.gradient(x)
        if np.linalg.norm(g) <= tol:
            raise DegenerateBoundary(f"zero gradient of the sublevel function at {x}")
        return float(g @ v) <= tol
    poly = as_polyhedron(s)
    if poly is None:
        return True
    act = _active_rows(poly, x, tol)
    return bool(act.shape[0] == 0 or np.all(act @ v <= tol))


def tangent_margin(s: ClosedSet, x, v, tol: float = 1e-9) -> float:
    """Largest violated active inequality for the contingent-cone test (<= 0 inside)."""
    x = _check_dim(s, x)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if isinstance(s, Singleton):
        return float(np.linalg.norm(v))
    if isinstance(s, SmoothSublevel):
        if s.psi(x) < -tol:
            return -math.inf
        return float(s.psi.gradient(x) @ v)
    poly = as_polyhedron(s)
    if poly is None:
        return -math.inf
    act = _active_rows(poly, x, tol)
    return float(np.max(act @ v)) if act.shape[0] else -math.inf


def clarke_tangent_contains(s: ClosedSet, x, v, tol: float = 1e-9) -> bool:
    """Clarke tangent cone membership; equals the contingent cone on convex sets."""
    if isinstance(s, SmoothSublevel) and not s.convex:
        raise NonConvexVariant("sublevel set is not certified convex")
    return bouligand_contains(s, x, v, tol)


# ---------------------------------------------------------------------------
# distance oracle and numeric tangent fallback


def _project_polyhedron(poly: Polyhedron, y: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection by active-set enumeration (small problems)."""
    if np.all(poly.A @ y <= poly.b + 1e-15):
        return y.copy()
    n = poly.n
    best, best_d = None, math.inf
    k = poly.A.shape[0]
    for size in range(1, min(n, k) + 1):
        for combo in itertools.combinations(range(k), size):
            A = poly.A[list(combo)]
            b = poly.b[list(combo)]
            gram = A @ A.T
            if abs(np.linalg.det(gram)) < 1e-14:
                continue
            lam = np.linalg.solve(gram, A @ y - b)
            if np.any(lam < -1e-12):
                continue
            z = y - A.T @ lam
            if np.all(poly.A @ z <= poly.b + 1e-10):
                d = float(np.linalg.norm(z - y))
                if d < best_d:
                    best, best_d = z, d
    if best is None:
        res = linprog(np.zeros(n), A_ub=poly.A, b_ub=poly.b, bounds=[(None, None)] * n,
                      method="highs")
        if res.status != 0:
            raise ValueError("empty polyhedron")
        return res.x
    return best


def _project_sublevel(s: SmoothSublevel, y: np.ndarray, iters: int = 50) -> np.ndarray:
    """Newton pull-back to the zero level set, then tangential projected descent."""
    psi = s.psi
    z = y.copy()
    for _ in range(iters):
        val = psi(z)
        if abs(val) <= 1e-15:
            break
        g = psi.gradient(z)
        gg = float(g @ g)
        if gg == 0:
            raise DegenerateBoundary("zero gradient while projecting")
        z = z - val * g / gg
    for _ in range(iters):
        g = psi.gradient(z)
        nrm = np.linalg.norm(g)
        if nrm == 0:
            break
        u = g / nrm
        r = y - z
        step = r - (r @ u) * u
        if np.linalg.norm(step) <= 1e-15 * (1 + np.linalg.norm(r)):
            break
        z = z + 0.5 * step
        for _ in range(20):
            val = psi(z)
            if abs(val) <= 1e-15:
                break
            g = psi.gradient(z)
            z = z - val * g / float(g @ g)
    return z


def distance(s: ClosedSet, y) -> float:
    y = _check_dim(s, y)
    if contains(s, y, 0.0):
        return 0.0
    if isinstance(s, Singleton):
        return float(np.linalg.norm(y - s.p))
    if isinstance(s, Box):
        return float(np.linalg.norm(y - np.clip(y, s.lo, s.hi)))
    if isinstance(s, SmoothSublevel):
        return float(np.linalg.norm(y - _project_sublevel(s, y)))
    poly = as_polyhedron(s)
    return float(np.linalg.norm(y - _project_polyhedron(poly, y)))


def bouligand_contains_numeric(s: ClosedSet, x, v, tol: float = 1e-3,
                               steps: Sequence[float] = TANGENT_STEPS) -> bool:
    """Distance-quotient test: dist(x + t v, S) / t small and nonincreasing in t."""
    x = _check_dim(s, x)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    q = [distance(s, x + t * v) / t for t in steps]
    nonincreasing = all(b <= a + 1e-9 for a, b in zip(q, q[1:]))
    return bool(nonincreasing and q[-1] <= tol)


# ---------------------------------------------------------------------------
# boundary sampling


def sample_boundary(s: ClosedSet, count: int = 64, bounds=None, seed: int = 0,
                    tol: float = 1e-9) -> np.ndarray:
    """Deterministic boundary points of a structured set, shape ``(k, n)``.

    Polyhedra: points projected onto each face (every active-row subset) of
    a bounding box.  Sublevel sets: bisection along rays from an interior
    anchor.  ``bounds`` is ``(lo, hi)``; defaults to ``[-1, 1]^n``.
    """
    n = s.n
    if isinstance(s, Singleton):
        return s.p[None, :].copy()
    lo, hi = (np.full(n, -1.0), np.full(n, 1.0)) if bounds is None else map(np.asarray, bounds)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if isinstance(s, SmoothSublevel):
        return _sample_sublevel_boundary(s, count, lo, hi, seed)
    poly = as_polyhedron(s)
    if poly is None:
        return np.zeros((0, n))
    pts = sample_box(lo, hi, count, seed)
    out = []
    k = poly.A.shape[0]
    for size in range(1, min(n, k) + 1):
        for combo in itertools.combinations(range(k), size):
            A = poly.A[list(combo)]
            b = poly.b[list(combo)]
            gram = A @ A.T
            if abs(np.linalg.det(gram)) < 1e-12:
                continue
            lam = np.linalg.solve(gram, A @ pts.T - b[:, None])
            proj = pts - (A.T @ lam).T
            face_pts = proj if size < n else proj[:1]
            for z in face_pts:
                if np.all(poly.A @ z <= poly.b + tol) and np.all(z >= lo - tol) \
                        and np.all(z <= hi + tol):
                    out.append(z)
    if not out:
        return np.zeros((0, n))
    arr = np.round(np.array(out), 14)
    _, idx = np.unique(arr, axis=0, return_index=True)
    return np.array(out)[np.sort(idx)]


def _sample_sublevel_boundary(s: SmoothSublevel, count, lo, hi, seed) -> np.ndarray:
    n = s.n
    psi = s.psi
    if s.anchor is not None:
        anchor = np.asarray(s.anchor, float)
    else:
        cand = sample_box(lo, hi, 256, seed)
        vals = psi.eval(cand.T)
        anchor = cand[int(np.argmin(vals))]
    if psi(anchor) >= 0:
        return np.zeros((0, n))
    dirs = sample_box(-np.ones(n), np.ones(n), count, seed + 1)
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    out = []
    radius = float(np.linalg.norm(hi - lo))
    for d in dirs:
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        d = d / nd
        a, b = 0.0, radius
        if psi(anchor + b * d) <= 0:
            continue
        for _ in range(80):
            mid = 0.5 * (a + b)
            if psi(anchor + mid * d) <= 0:
                a = mid
            else:
                b = mid
        out.append(anchor + a * d)
    return np.array(out) if out else np.zeros((0, n))
