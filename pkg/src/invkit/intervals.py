"""Finite unions of closed bounded intervals of the real line."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

MAX_PIECES = 8
CONE_TAGS = ("zero", "nonneg", "nonpos", "full")


@dataclass(frozen=True)
class IntervalUnion:
    """Sorted, disjoint closed intervals ``[(lo, hi), ...]``.

    At most :data:`MAX_PIECES` pieces are kept; beyond that the two pieces
    with the smallest gap are merged (the result is then a superset).
    """

    pieces: Tuple[Tuple[float, float], ...]

    def __init__(self, pieces: Iterable[Sequence[float]]):
        items = []
        for p in pieces:
            if isinstance(p, (int, float)):
                lo = hi = float(p)
            else:
                lo, hi = float(p[0]), float(p[1])
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("interval endpoints must be finite")
            if lo > hi:
                raise ValueError(f"interval [{lo}, {hi}] is empty")
            items.append((lo, hi))
        if not items:
            raise ValueError("empty interval union")
        items.sort()
        merged = [items[0]]
        for lo, hi in items[1:]:
            plo, phi = merged[-1]
            if lo <= phi:
                merged[-1] = (plo, max(phi, hi))
            else:
                merged.append((lo, hi))
        while len(merged) > MAX_PIECES:
            gaps = [merged[i + 1][0] - merged[i][1] for i in range(len(merged) - 1)]
            i = gaps.index(min(gaps))
            merged[i:i + 2] = [(merged[i][0], merged[i + 1][1])]
        object.__setattr__(self, "pieces", tuple(merged))

    @classmethod
    def point(cls, v: float) -> "IntervalUnion":
        return cls([(v, v)])

    @property
    def lo(self) -> float:
        return self.pieces[0][0]

    @property
    def hi(self) -> float:
        return self.pieces[-1][1]

    @property
    def is_interval(self) -> bool:
        return len(self.pieces) == 1

    def endpoints(self) -> Tuple[float, ...]:
        out = []
        for lo, hi in self.pieces:
            out.append(lo)
            if hi != lo:
                out.append(hi)
        return tuple(out)

    def contains(self, v: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= v <= hi + tol for lo, hi in self.pieces)

    def project(self, v: float) -> float:
        """Nearest point; ties go to the smaller magnitude."""
        best, dist = None, math.inf
        for lo, hi in self.pieces:
            c = min(max(v, lo), hi)
            d = abs(c - v)
            if d < dist or (d == dist and abs(c) < abs(best)):
                best, dist = c, d
        return best

    def scale(self, c: float) -> "IntervalUnion":
        if c == 0:
            return IntervalUnion.point(0.0)
        return IntervalUnion(sorted((c * lo, c * hi) if c > 0 else (c * hi, c * lo)
                                    for lo, hi in self.pieces))

    def union(self, other: "IntervalUnion") -> "IntervalUnion":
        return IntervalUnion(self.pieces + other.pieces)

    def intersect(self, other: "IntervalUnion"):
        out = []
        for a, b in self.pieces:
            for c, d in other.pieces:
                lo, hi = max(a, c), min(b, d)
                if lo <= hi:
                    out.append((lo, hi))
        return IntervalUnion(out) if out else None

    def sup_linear(self, d: float) -> float:
        """sup{d * v : v in self}."""
        return max(d * self.lo, d * self.hi)

    def argsup_linear(self, d: float) -> float:
        """Maximiser of ``d * v``; ties go to the smallest magnitude."""
        if d > 0:
            return self.hi
        if d < 0:
            return self.lo
        return self.project(0.0)

    def cone_tag(self) -> str:
        """Tag of cone{self}: one of zero, nonneg, nonpos, full."""
        if self.lo < 0 < self.hi:
            return "full"
        if self.hi > 0:
            return "nonneg"
        if self.lo < 0:
            return "nonpos"
        return "zero"

    def has_positive(self) -> bool:
        return self.hi > 0

    def has_negative(self) -> bool:
        return self.lo < 0

    def __str__(self) -> str:
        return " u ".join(f"[{lo:g}, {hi:g}]" for lo, hi in self.pieces)


def hull(u: IntervalUnion) -> IntervalUnion:
    return IntervalUnion([(u.lo, u.hi)])


def ratio_set(u: IntervalUnion, q: float):
    """Set of mu > 0 with ``mu * q`` in ``u`` as a list of (lo, hi), hi may be inf.

    Used to decide ``q in cone{u}`` coordinate-wise with a shared multiplier.
    """
    if q == 0:
        return [(0.0, math.inf)] if u.contains(0.0) else []
    out = []
    for lo, hi in u.pieces:
        a, b = lo / q, hi / q
        if q < 0:
            a, b = b, a
        a = max(a, 0.0)
        if a <= b and b > 0:
            out.append((a, b))
    return out
