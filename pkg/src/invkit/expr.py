"""Scalar expression fields over state ``x``, control ``a`` and time ``t``.

Expressions are written in a small infix grammar::

    x1, x2, ...      state variables (1-based)
    a1, a2, ...      control variables (1-based)
    t                time
    + - * /          arithmetic (``/`` is guarded)
    ^ or **          integer powers
    min max abs sign exp sin cos

Parsing goes through :mod:`ast`; the resulting tree is immutable and every
evaluation is pure.  Evaluation works on floats and on numpy arrays of
matching shape, so grid checks can be vectorised.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

DIVIDE_GUARD = 1e-12
KINK_TOL = 1e-9

_NONSMOOTH = {"min", "max", "abs", "sign"}
_UNARY = {"abs", "sign", "exp", "sin", "cos", "neg"}
_BINARY = {"add", "sub", "mul", "div", "min", "max"}
_VAR_RE = re.compile(r"^([xa])([1-9][0-9]*)$")


class ExpressionError(ValueError):
    """Malformed expression text."""


class DivideGuard(ArithmeticError):
    """Denominator magnitude fell below the guard threshold."""


class DimensionMismatch(ValueError):
    pass


class NonsmoothPoint(ArithmeticError):
    """A min/max/abs/sign node is at its kink; no gradient exists there."""


class GrowthViolated(ArithmeticError):
    pass


@dataclass(frozen=True)
class Node:
    kind: str
    value: float = 0.0
    index: int = 0
    args: Tuple["Node", ...] = ()


def const(v: float) -> Node:
    return Node("const", value=float(v))


def _walk(node: Node):
    yield node
    for a in node.args:
        yield from _walk(a)


# ---------------------------------------------------------------------------
# parsing


_FUNCS = {"min": 2, "max": 2, "abs": 1, "sign": 1, "exp": 1, "sin": 1, "cos": 1}
_BINOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div"}


def _convert(tree: ast.AST, text: str) -> Node:
    if isinstance(tree, ast.Expression):
        return _convert(tree.body, text)
    if isinstance(tree, ast.Constant) and isinstance(tree.value, (int, float)) \
            and not isinstance(tree.value, bool):
        return const(tree.value)
    if isinstance(tree, ast.Name):
        if tree.id == "t":
            return Node("t")
        m = _VAR_RE.match(tree.id)
        if m is None:
            raise ExpressionError(f"unknown name {tree.id!r} in {text!r}")
        kind = "x" if m.group(1) == "x" else "a"
        return Node(kind, index=int(m.group(2)) - 1)
    if isinstance(tree, ast.UnaryOp):
        arg = _convert(tree.operand, text)
        if isinstance(tree.op, ast.USub):
            if arg.kind == "const":
                return const(-arg.value)
            return Node("neg", args=(arg,))
        if isinstance(tree.op, ast.UAdd):
            return arg
    if isinstance(tree, ast.BinOp):
        left = _convert(tree.left, text)
        right = _convert(tree.right, text)
        if isinstance(tree.op, ast.Pow):
            if right.kind != "const" or right.value != int(right.value) or right.value < 0:
                raise ExpressionError(f"only nonnegative integer powers allowed in {text!r}")
            return Node("pow", index=int(right.value), args=(left,))
        op = _BINOPS.get(type(tree.op))
        if op is not None:
            return Node(op, args=(left, right))
    if isinstance(tree, ast.Call) and isinstance(tree.func, ast.Name):
        name = tree.func.id
        if name in _FUNCS and not tree.keywords:
            if len(tree.args) != _FUNCS[name]:
                raise ExpressionError(f"{name} takes {_FUNCS[name]} argument(s) in {text!r}")
            return Node(name, args=tuple(_convert(a, text) for a in tree.args))
    raise ExpressionError(f"unsupported construct in {text!r}: {ast.dump(tree)[:60]}")


def parse_tree(text: str) -> Node:
    src = str(text).strip().replace("^", "**")
    if not src:
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree, text)


# ---------------------------------------------------------------------------
# evaluation


def _ev(node: Node, x, a, t):
    k = node.kind
    if k == "const":
        return node.value
    if k == "x":
        return x[node.index]
    if k == "a":
        return a[node.index]
    if k == "t":
        return t
    if k in _UNARY:
        u = _ev(node.args[0], x, a, t)
        if k == "neg":
            return -u
        if k == "abs":
            return np.abs(u)
        if k == "sign":
            return np.sign(u)
        if k == "exp":
            return np.exp(u)
        if k == "sin":
            return np.sin(u)
        return np.cos(u)
    if k == "pow":
        u = _ev(node.args[0], x, a, t)
        return u ** node.index
    l = _ev(node.args[0], x, a, t)
    r = _ev(node.args[1], x, a, t)
    if k == "add":
        return l + r
    if k == "sub":
        return l - r
    if k == "mul":
        return l * r
    if k == "div":
        if np.any(np.abs(r) < DIVIDE_GUARD):
            raise DivideGuard("denominator below 1e-12")
        return l / r
    if k == "min":
        return np.minimum(l, r)
    return np.maximum(l, r)


def _grad(node: Node, x, a, t, n):
    """Forward-mode pass returning (value, d value / d x)."""
    k = node.kind
    if k in ("const", "a", "t"):
        return _ev(node, x, a, t), np.zeros(n)
    if k == "x":
        g = np.zeros(n)
        g[node.index] = 1.0
        return x[node.index], g
    if k in _UNARY:
        u, du = _grad(node.args[0], x, a, t, n)
        if k == "neg":
            return -u, -du
        if k in ("abs", "sign"):
            if abs(u) <= KINK_TOL:
                raise NonsmoothPoint(f"{k} kink at argument {u:.3g}")
            if k == "abs":
                return abs(u), np.sign(u) * du
            return float(np.sign(u)), np.zeros(n)
        if k == "exp":
            e = np.exp(u)
            return e, e * du
        if k == "sin":
            return np.sin(u), np.cos(u) * du
        return np.cos(u), -np.sin(u) * du
    if k == "pow":
        u, du = _grad(node.args[0], x, a, t, n)
        p = node.index
        if p == 0:
            return 1.0, np.zeros(n)
        return u ** p, p * u ** (p - 1) * du
    l, dl = _grad(node.args[0], x, a, t, n)
    r, dr = _grad(node.args[1], x, a, t, n)
    if k == "add":
        return l + r, dl + dr
    if k == "sub":
        return l - r, dl - dr
    if k == "mul":
        return l * r, dl * r + l * dr
    if k == "div":
        if abs(r) < DIVIDE_GUARD:
            raise DivideGuard("denominator below 1e-12")
        return l / r, (dl * r - l * dr) / (r * r)
    if abs(l - r) <= KINK_TOL:
        raise NonsmoothPoint(f"{k} kink: arguments differ by {abs(l - r):.3g}")
    if k == "min":
        return (l, dl) if l < r else (r, dr)
    return (l, dl) if l > r else (r, dr)


def _reindex(node: Node, x_off: int, a_off: int) -> Node:
    if node.kind == "x":
        return Node("x", index=node.index + x_off)
    if node.kind == "a":
        return Node("a", index=node.index + a_off)
    if not node.args:
        return node
    return Node(node.kind, node.value, node.index,
                tuple(_reindex(c, x_off, a_off) for c in node.args))


def _to_text(node: Node) -> str:
    k = node.kind
    if k == "const":
        return repr(node.value)
    if k in ("x", "a"):
        return f"{k}{node.index + 1}"
    if k == "t":
        return "t"
    if k == "neg":
        return f"(-{_to_text(node.args[0])})"
    if k == "pow":
        return f"({_to_text(node.args[0])})^{node.index}"
    if k in ("abs", "sign", "exp", "sin", "cos"):
        return f"{k}({_to_text(node.args[0])})"
    if k in ("min", "max"):
        return f"{k}({_to_text(node.args[0])}, {_to_text(node.args[1])})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
    return f"({_to_text(node.args[0])} {sym} {_to_text(node.args[1])})"


# ---------------------------------------------------------------------------
# public field type


@dataclass(frozen=True)
class ScalarField:
    """Immutable scalar expression with declared state/control dimensions."""

    root: Node
    n: int
    m: int = 0
    smooth: bool = field(init=False)
    uses_time: bool = field(init=False)

    def __post_init__(self):
        kinds = [nd for nd in _walk(self.root)]
        for nd in kinds:
            if nd.kind == "x" and nd.index >= self.n:
                raise DimensionMismatch(f"x{nd.index + 1} exceeds state dimension {self.n}")
            if nd.kind == "a" and nd.index >= self.m:
                raise DimensionMismatch(f"a{nd.index + 1} exceeds control dimension {self.m}")
        object.__setattr__(self, "smooth", not any(nd.kind in _NONSMOOTH for nd in kinds))
        object.__setattr__(self, "uses_time", any(nd.kind == "t" for nd in kinds))

    @classmethod
    def parse(cls, text: Union[str, float, int], n: int, m: int = 0) -> "ScalarField":
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            return cls(const(text), n, m)
        return cls(parse_tree(text), n, m)

    @property
    def uses_control(self) -> bool:
        return any(nd.kind == "a" for nd in _walk(self.root))

    def _args(self, x, a, t):
        x = np.asarray(x, dtype=float)
        if x.shape[:1] != (self.n,):
            raise DimensionMismatch(f"state has shape {x.shape}, expected leading {self.n}")
        if a is None:
            a = np.zeros(self.m)
        a = np.asarray(a, dtype=float)
        if a.shape[:1] != (self.m,):
            raise DimensionMismatch(f"control has shape {a.shape}, expected leading {self.m}")
        return x, a

    def eval(self, x, a=None, t: float = 0.0):
        """Evaluate at ``x`` (shape ``(n,)`` or ``(n, N)`` for a batch)."""
        x, a = self._args(x, a, t)
        out = _ev(self.root, x, a, t)
        if np.ndim(out) == 0 and x.ndim > 1:
            out = np.full(x.shape[1:], float(out))
        return out if x.ndim > 1 else float(out)

    __call__ = eval

    def gradient(self, x, a=None, t: float = 0.0) -> np.ndarray:
        """Exact state gradient; raises :class:`NonsmoothPoint` at kinks."""
        x, a = self._args(x, a, t)
        if x.ndim != 1:
            raise DimensionMismatch("gradient takes a single point")
        _, g = _grad(self.root, x, a, t, self.n)
        return np.asarray(g, dtype=float)

    def reindexed(self, n: int, m: int, x_offset: int = 0, a_offset: int = 0) -> "ScalarField":
        """Embed into a larger (n, m) space, shifting variable indices."""
        return ScalarField(_reindex(self.root, x_offset, a_offset), n, m)

    def __str__(self) -> str:
        return _to_text(self.root)


# ---------------------------------------------------------------------------
# growth / modulus estimation


@dataclass(frozen=True)
class GrowthConstants:
    c1: float
    c2: float
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def bound(self, x) -> float:
        return self.c1 + self.c2 * float(np.linalg.norm(x))


def sample_box(lo, hi, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic scrambled-Sobol points in a box, shape ``(count, n)``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    sob = qmc.Sobol(d=len(lo), scramble=True, seed=seed)
    u = sob.random_base2(max(1, math.ceil(math.log2(max(count, 2)))))[:count]
    return lo + u * (hi - lo)


def _vector_values(fields, pts, times, controls):
    """max over (t, a) of the Euclidean norm of the stacked field values."""
    best = np.zeros(len(pts))
    for t in times:
        for a in controls:
            vals = np.array([np.broadcast_to(f.eval(pts.T, a, t), (len(pts),)) for f in fields])
            best = np.maximum(best, np.linalg.norm(vals, axis=0))
    return best


def estimate_growth(fields, lo, hi, samples: int = 256, *, times: Sequence[float] = (0.0,),
                    controls: Optional[Sequence] = None, seed: int = 0,
                    margin: float = 0.10) -> GrowthConstants:
    """Affine majorant ``|value| <= c1 + c2 |x|`` over sampled points of a box.

    ``fields`` may be a single :class:`ScalarField` or a sequence (treated as
    a vector field, Euclidean norm).  The least-squares line is clipped to
    nonnegative coefficients, shifted up to majorise every sample, then
    inflated by ``margin``.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    if isinstance(fields, ScalarField):
        fields = [fields]
    fields = list(fields)
    m = fields[0].m
    controls = [np.zeros(m)] if controls is None else [np.asarray(c, float) for c in controls]
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("empty region")
    pts = sample_box(lo, hi, samples, seed)
    vals = _vector_values(fields, pts, times, controls)
    if not np.all(np.isfinite(vals)):
        raise GrowthViolated("non-finite field values in region")
    r = np.linalg.norm(pts, axis=1)
    design = np.column_stack([np.ones_like(r), r])
    (c1, c2), *_ = np.linalg.lstsq(design, vals, rcond=None)
    c1, c2 = max(float(c1), 0.0), max(float(c2), 0.0)
    if c2 < 1e-12:
        c2 = 0.0
    c1 = max(c1, float(np.max(vals - c2 * r)), 0.0)
    c1, c2 = c1 * (1 + margin), c2 * (1 + margin)
    if np.any(vals > c1 + c2 * r + 1e-12 * (1 + vals)):
        raise GrowthViolated("no affine majorant after inflation")
    return GrowthConstants(c1, c2, tuple(lo), tuple(hi))


@dataclass(frozen=True)
class ModulusTable:
    """Empirical modulus of continuity on a radius grid.

    Sound only on the sampled pairs; between grid radii the value at the next
    grid radius is returned, beyond the grid the last value.
    """

    radii: np.ndarray
    values: np.ndarray

    def __call__(self, r: float) -> float:
        if r <= 0:
            return 0.0
        j = int(np.searchsorted(self.radii, r, side="left"))
        return float(self.values[min(j, len(self.values) - 1)])


def estimate_modulus(fields, lo, hi, samples: int = 200, *, radii: int = 64,
                     max_radius: Optional[float] = None, times: Sequence[float] = (0.0,),
                     controls: Optional[Sequence] = None, seed: int = 0) -> ModulusTable:
    if isinstance(fields, ScalarField):
        fields = [fields]
    fields = list(fields)
    m = fields[0].m
    controls = [np.zeros(m)] if controls is None else [np.asarray(c, float) for c in controls]
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pts = sample_box(lo, hi, samples, seed)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    iu = np.triu_indices(len(pts), k=1)
    d = dist[iu]
    dv = np.zeros_like(d)
    for t in times:
        for a in controls:
            vals = np.array([np.broadcast_to(f.eval(pts.T, a, t), (len(pts),)) for f in fields])
            jump = np.linalg.norm(vals[:, :, None] - vals[:, None, :], axis=0)[iu]
            dv = np.maximum(dv, jump)
    rmax = float(np.max(d)) if max_radius is None else float(max_radius)
    grid = np.linspace(0.0, rmax, radii + 1)
    order = np.argsort(d)
    d_sorted, dv_run = d[order], np.maximum.accumulate(dv[order])
    idx = np.searchsorted(d_sorted, grid, side="right") - 1
    values = np.where(idx >= 0, dv_run[np.clip(idx, 0, None)], 0.0)
    values[0] = 0.0
    values = np.maximum.accumulate(values)
    return ModulusTable(grid, values)
