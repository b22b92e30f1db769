"""YAML scenario files: dynamics, sets, regions, orders and run settings.

Hypothesis flags ``h3`` and ``h4`` must be given for every disturbance map;
nothing is inferred, so a check never quietly upgrades a sufficient
condition into a characterisation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .expr import ExpressionError, ScalarField
from .geometry import Box, ClosedSet, ConeSpec, PolyhedralCone, Polyhedron, Singleton, SmoothSublevel
from .inclusion import (Condition, ControlSet, DisturbanceMap, FeedbackRealization,
                        HypothesisViolation, ProductInclusion, Region)
from .intervals import IntervalUnion
from .invariance import CheckRegion
from .monotone import ConeOrder, GammaOrder, diagonal_gamma, order_to_gamma

SUFFIX = ".scenario"


class ParseError(ValueError):
    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.where = where


class MissingSection(KeyError):
    def __str__(self):
        return f"scenario has no '{self.args[0]}' section"


@dataclass
class Scenario:
    name: str
    n: int
    m: int
    inclusion: ProductInclusion
    raw: Dict[str, Any]
    digest: str
    psi: Optional[ScalarField] = None
    set: Optional[ClosedSet] = None
    region: Optional[CheckRegion] = None
    order: Optional[ConeOrder] = None
    gamma_order: Optional[GammaOrder] = None
    feedback: Optional[FeedbackRealization] = None
    seed: int = 0
    tol: float = 1e-9
    flags: List[Tuple[bool, bool]] = field(default_factory=list)

    def section(self, key: str) -> Dict[str, Any]:
        if key not in self.raw:
            raise MissingSection(key)
        return self.raw[key] or {}

    def need(self, attr: str):
        val = getattr(self, attr)
        if val is None:
            raise MissingSection(attr)
        return val

    def banner(self) -> str:
        flags = ", ".join(f"x{i + 1}: h3={h3} h4={h4}" for i, (h3, h4) in enumerate(self.flags))
        lines = [f"scenario {self.name} (n={self.n}, m={self.m})", f"hypotheses: {flags}"]
        if self.order is not None or self.gamma_order is not None:
            ap = (self.raw.get("order") or {}).get("approximation_property", "not asserted")
            lines.append(f"order approximation property: {ap} (user assertion, never checked)")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# field helpers


def _get(d: dict, key: str, where: str, default=...):
    if not isinstance(d, dict):
        raise ParseError(where, "expected a mapping")
    if key not in d:
        if default is ...:
            raise ParseError(f"{where}.{key}", "required field missing")
        return default
    return d[key]


def _vector(val, where: str, length: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.atleast_1d(np.asarray(val, dtype=float))
    except (TypeError, ValueError):
        raise ParseError(where, f"expected numbers, got {val!r}") from None
    if arr.ndim != 1 or (length is not None and arr.shape[0] != length):
        raise ParseError(where, f"expected a vector of length {length}")
    if not np.all(np.isfinite(arr)):
        raise ParseError(where, "values must be finite")
    return arr


def _matrix(val, where: str, cols: int) -> np.ndarray:
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(where, f"expected a matrix, got {val!r}") from None
    if arr.ndim == 1 and arr.size == cols:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != cols:
        raise ParseError(where, f"expected rows of length {cols}")
    return arr


def _field(text, where: str, n: int, m: int = 0) -> ScalarField:
    try:
        return ScalarField.parse(text, n, m)
    except ExpressionError as exc:
        raise ParseError(where, str(exc)) from None


def _interval_union(val, where: str) -> IntervalUnion:
    """A number, a pair [lo, hi], or a list of pairs."""
    try:
        if isinstance(val, (int, float)):
            return IntervalUnion([(float(val), float(val))])
        if isinstance(val, list) and len(val) == 2 and all(isinstance(c, (int, float)) for c in val):
            return IntervalUnion([(float(val[0]), float(val[1]))])
        pieces = []
        for p in val:
            if isinstance(p, (int, float)):
                pieces.append((float(p), float(p)))
            else:
                lo, hi = p
                pieces.append((float(lo), float(hi)))
        return IntervalUnion(pieces)
    except (TypeError, ValueError) as exc:
        raise ParseError(where, f"bad interval union {val!r}: {exc}") from None


def _flag(d: dict, key: str, where: str) -> bool:
    val = _get(d, key, where)
    if not isinstance(val, bool):
        raise ParseError(f"{where}.{key}", "hypothesis flags must be true or false")
    return val


# ---------------------------------------------------------------------------
# sections


def _disturbance(d, where: str, n: int) -> DisturbanceMap:
    if not isinstance(d, dict):
        raise ParseError(where, "disturbance entries are mappings with h3, h4 and default")
    h3, h4 = _flag(d, "h3", where), _flag(d, "h4", where)
    regions = []
    for j, r in enumerate(_get(d, "regions", where, [])):
        rw = f"{where}.regions[{j}]"
        when = _get(r, "when", rw)
        when = [when] if isinstance(when, str) else when
        conds = []
        for c in when:
            try:
                conds.append(Condition.parse(c, n))
            except (ExpressionError, ValueError) as exc:
                raise ParseError(f"{rw}.when", str(exc)) from None
        regions.append((Region(tuple(conds)), _interval_union(_get(r, "value", rw), f"{rw}.value"),
                        r.get("cone")))
    dflt = _get(d, "default", where)
    if isinstance(dflt, dict):
        dval, dtag = _interval_union(_get(dflt, "value", f"{where}.default"), f"{where}.default.value"), dflt.get("cone")
    else:
        dval, dtag = _interval_union(dflt, f"{where}.default"), None
    return DisturbanceMap.build(regions, dval, dtag, h3=h3, h4=h4)


def _controls(c, where: str) -> ControlSet:
    if c is None or c == "none":
        return ControlSet.none()
    if "finite" in c:
        pts = np.asarray(c["finite"], dtype=float)
        return ControlSet.finite(pts.reshape(len(pts), -1))
    if "box" in c:
        b = c["box"]
        lo = _vector(_get(b, "lo", f"{where}.box"), f"{where}.box.lo")
        hi = _vector(_get(b, "hi", f"{where}.box"), f"{where}.box.hi", len(lo))
        return ControlSet.box(lo, hi, int(b.get("resolution", 5)))
    raise ParseError(where, "controls must be 'none', {finite: ...} or {box: ...}")


def _cone(c, where: str, n: int) -> ConeSpec:
    if "orthant" in c:
        return ConeSpec.orthant(n, int(c["orthant"]))
    if "rows" in c:
        return ConeSpec.from_rows(_matrix(c["rows"], f"{where}.rows", n), n)
    if "generators" in c:
        return ConeSpec.from_generators(_matrix(c["generators"], f"{where}.generators", n), n)
    if c.get("zero"):
        return ConeSpec.zero(n)
    raise ParseError(where, "cone needs orthant, rows or generators")


def _closed_set(s, where: str, n: int) -> ClosedSet:
    if not isinstance(s, dict) or len(s) != 1:
        raise ParseError(where, "set must have exactly one variant key")
    (kind, val), = s.items()
    w = f"{where}.{kind}"
    try:
        if kind == "singleton":
            return Singleton(_vector(val, w, n))
        if kind == "box":
            return Box(_vector(_get(val, "lo", w), f"{w}.lo", n), _vector(_get(val, "hi", w), f"{w}.hi", n))
        if kind == "polyhedron":
            A = _matrix(_get(val, "A", w), f"{w}.A", n)
            return Polyhedron(A, _vector(_get(val, "b", w), f"{w}.b", A.shape[0]))
        if kind == "cone":
            return PolyhedralCone(_cone(val, w, n))
        if kind == "sublevel":
            anchor = val.get("anchor")
            return SmoothSublevel(_field(_get(val, "psi", w), f"{w}.psi", n),
                                  bool(val.get("convex", False)),
                                  None if anchor is None else tuple(_vector(anchor, f"{w}.anchor", n)))
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(w, str(exc)) from None
    raise ParseError(where, f"unknown set variant '{kind}'")


def _order(o, where: str, n: int, m: int):
    ku = _cone(o["Ku"], f"{where}.Ku", m) if o.get("Ku") is not None and m else None
    if "gamma" in o:
        g = o["gamma"]
        if g == "diagonal":
            return None, GammaOrder(diagonal_gamma(n).gamma, ku)
        return None, GammaOrder(_closed_set(g, f"{where}.gamma", 2 * n), ku)
    K = _cone(_get(o, "K", where), f"{where}.K", n)
    lo = o.get("lo")
    hi = o.get("hi")
    order = ConeOrder(K, ku, None if lo is None else _vector(lo, f"{where}.lo", n),
                      None if hi is None else _vector(hi, f"{where}.hi", n))
    return order, order_to_gamma(order)


# ---------------------------------------------------------------------------
# loading


def bundled_path(name: str) -> Optional[Path]:
    base = resources.files("invkit") / "scenarios"
    for cand in (name, name + SUFFIX):
        p = base / cand
        if p.is_file():
            return Path(str(p))
    return None


def bundled_names() -> List[str]:
    base = resources.files("invkit") / "scenarios"
    return sorted(p.name[: -len(SUFFIX)] for p in base.iterdir() if p.name.endswith(SUFFIX))


def resolve(path: str) -> Path:
    p = Path(path)
    if p.is_file():
        return p
    b = bundled_path(p.name)
    if b is None:
        raise FileNotFoundError(f"no scenario file '{path}' (bundled: {', '.join(bundled_names())})")
    return b


def load_scenario(path) -> Scenario:
    p = resolve(str(path))
    data = p.read_bytes()
    return parse_scenario(data.decode("utf-8"), p.stem, hashlib.sha256(data).hexdigest())


def parse_scenario(text: str, name: str = "scenario", digest: str = "") -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "yaml"
        raise ParseError(where, getattr(exc, "problem", None) or str(exc)) from None
    if not raw:
        raise ParseError("file", "empty scenario")
    if not isinstance(raw, dict):
        raise ParseError("file", "top level must be a mapping")
    n = int(_get(raw, "n", "scenario"))
    if n < 1:
        raise ParseError("scenario.n", "state dimension must be positive")
    controls = _controls(raw.get("controls"), "controls")
    m = int(raw.get("m", controls.m))
    if m != controls.m:
        raise ParseError("scenario.m", f"declared m={m} but controls have dimension {controls.m}")
    dyn = _get(raw, "dynamics", "scenario")
    factors = _get(dyn, "factors", "dynamics")
    dists = _get(dyn, "disturbances", "dynamics")
    if len(factors) != n or len(dists) != n:
        raise ParseError("dynamics", f"need {n} factors and {n} disturbances")
    gs = tuple(_field(f, f"dynamics.factors[{i}]", n, m) for i, f in enumerate(factors))
    ds = []
    for i, d in enumerate(dists):
        where = f"dynamics.disturbances[{i}]"
        try:
            ds.append(_disturbance(d, where, n))
        except HypothesisViolation as exc:
            raise HypothesisViolation(f"{where}: {exc}") from None
    try:
        inc = ProductInclusion(n, gs, tuple(ds), controls)
    except ValueError as exc:
        raise ParseError("dynamics", str(exc)) from None
    sc = Scenario(str(raw.get("name", name)), n, m, inc, raw, digest,
                  seed=int(raw.get("seed", 0)), tol=float(raw.get("tol", 1e-9)),
                  flags=[(d.h3, d.h4) for d in ds])
    if "psi" in raw:
        sc.psi = _field(raw["psi"], "psi", n)
    if "set" in raw:
        sc.set = _closed_set(raw["set"], "set", n)
    if "region" in raw:
        r = raw["region"]
        try:
            sc.region = CheckRegion(_vector(_get(r, "lo", "region"), "region.lo", n),
                                    _vector(_get(r, "hi", "region"), "region.hi", n),
                                    float(_get(r, "spacing", "region")), float(r.get("margin", 0.0)))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError("region", str(exc)) from None
    if "order" in raw:
        sc.order, sc.gamma_order = _order(raw["order"], "order", n, m)
    if "euler" in raw:
        e = raw["euler"]
        comps = _get(e, "feedback", "euler")
        if len(comps) != n:
            raise ParseError("euler.feedback", f"need {n} components")
        fields = [_field(c, f"euler.feedback[{i}]", n) for i, c in enumerate(comps)]
        try:
            sc.feedback = FeedbackRealization(tuple(fields), float(_get(e, "T", "euler")),
                                              float(_get(e, "gamma", "euler")),
                                              tuple(_vector(_get(e, "anchor", "euler"), "euler.anchor", n)))
        except ValueError as exc:
            raise ParseError("euler", str(exc)) from None
    return sc
