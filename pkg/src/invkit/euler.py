"""Constructive Euler polygonal arcs that keep a verification function from growing.

The feedback ``f(t, x)`` is mollified in time, hull intervals of its
components over small balls are sampled, and each Euler velocity is chosen
one coordinate at a time by a derivative-free line search so that
``psi(x + h v) <= psi(x) + h / k``.  With the step ``h_k = gamma / (32 k delta(D))``
the nodes of the resulting arc satisfy ``psi(x_i) <= psi(x_bar) + (T' + gamma) / k``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from .expr import GrowthConstants, ModulusTable, estimate_growth, estimate_modulus
from .inclusion import FeedbackRealization, sample_ball

log = logging.getLogger(__name__)

GOLDEN_ITERS = 40
DEFAULT_NODES = 64
INVPHI = (math.sqrt(5) - 1) / 2


class DescentFailed(ArithmeticError):
    """No coordinate velocity achieved the allowed increase."""

    def __init__(self, msg, *, t=None, x=None, component=None, increment=None, allowed=None,
                 step_index=None):
        super().__init__(msg)
        self.t, self.x, self.component = t, x, component
        self.increment, self.allowed, self.step_index = increment, allowed, step_index


class StepTooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# mollifier


def _bump(s: float) -> float:
    return math.exp(1.0 / (s * s - 1.0)) if abs(s) < 1 else 0.0


@lru_cache(maxsize=1)
def bump_constant() -> float:
    """C with C * int_{-1}^{1} exp(1/(s^2 - 1)) ds = 1."""
    val, _ = quad(_bump, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / val


def mollifier(t: float, eps: float) -> float:
    if eps <= 0:
        raise ValueError("width must be positive")
    return bump_constant() * _bump(t / eps) / eps


def mollifier_mass(eps: float) -> float:
    val, _ = quad(lambda s: mollifier(s, eps), -eps, eps, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def kernel_nodes(t: float, eps: float, T: float, nodes: int = DEFAULT_NODES):
    """Quadrature nodes in [0, T] under the kernel at t, with normalised weights.

    The grid is fixed (spacing T/N <= 2 eps / nodes, aligned with 0 and T)
    so every weight is a continuous function of t; trapezoid weights are
    halved at 0 and T.  Normalising by the kernel sum over the unclipped
    grid makes the weights of an interior t add up to 1 exactly.
    """
    N = max(1, math.ceil(T * nodes / (2 * eps) - 1e-9))
    step = T / N
    j = np.arange(math.floor((t - eps) / step), math.ceil((t + eps) / step) + 1)
    s = j * step
    k = np.array([mollifier(t - sj, eps) for sj in s])
    total = k.sum()
    inside = (j >= 0) & (j <= N)
    w = np.where((j == 0) | (j == N), 0.5, 1.0) * k
    if total == 0.0:
        return s[:0], w[:0]
    return s[inside], w[inside] / total


# ---------------------------------------------------------------------------
# mollified feedback


@dataclass
class MollifiedFeedback:
    """Time mollification of a feedback with per-component moduli in x."""

    f: FeedbackRealization
    eps: float
    nodes: int = DEFAULT_NODES
    ball_samples: int = 64
    moduli: Optional[List[ModulusTable]] = None

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("width must be positive")
        self._cache = {}

    def _weights(self, t: float):
        if t not in self._cache:
            self._cache[t] = kernel_nodes(t, self.eps, self.f.T, self.nodes)
        return self._cache[t]

    def __call__(self, t: float, x) -> np.ndarray:
        s, w = self._weights(float(t))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(self.f.n)
        for sj, wj in zip(s, w):
            out += wj * self.f(float(sj), x)
        return out

    def batch(self, t: float, xs: np.ndarray) -> np.ndarray:
        s, w = self._weights(float(t))
        out = np.zeros((xs.shape[0], self.f.n))
        for sj, wj in zip(s, w):
            out += wj * self.f.eval_batch(float(sj), xs)
        return out

    def modulus(self, i: int, r: float) -> float:
        return 0.0 if self.moduli is None else self.moduli[i](r)

    def hull(self, t: float, x, r: float, i: int) -> Tuple[float, float]:
        """Sampled closed convex hull of component i over the ball |y - x| <= 1/r."""
        if r <= 0:
            raise ValueError("radius parameter must be positive")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = len(x)
        ys = sample_ball(x, 1.0 / r, self.ball_samples)
        vals = self.batch(t, ys)[:, i]
        spacing = (2.0 / r) / max(self.ball_samples, 1) ** (1.0 / n)
        widen = self.modulus(i, spacing)
        return float(vals.min() - widen), float(vals.max() + widen)

    def widening(self, k: int, n: int) -> float:
        r = 16 * k
        spacing = (2.0 / r) / max(self.ball_samples, 1) ** (1.0 / n)
        return max((self.modulus(i, spacing) for i in range(self.f.n)), default=0.0)


def mollify(f: FeedbackRealization, eps: float, t: float, x, nodes: int = DEFAULT_NODES):
    return MollifiedFeedback(f, eps, nodes)(t, x)


def hull_set(mf: MollifiedFeedback, t: float, x, r: float, i: int) -> Tuple[float, float]:
    return mf.hull(t, x, r, i)


# ---------------------------------------------------------------------------
# coordinate descent selection


def _golden(phi, lo: float, hi: float, iters: int = GOLDEN_ITERS) -> float:
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = phi(d)
    return c if fc <= fd else d


@dataclass
class StepCertificate:
    """Per-step record; ``allowed`` is h/k."""

    t: float
    x: np.ndarray
    v: np.ndarray
    h: float
    psi_before: float
    psi_after: float
    increments: List[float]
    allowed: float

    @property
    def ok(self) -> bool:
        return self.psi_after <= self.psi_before + self.allowed


def g_bound(mf: MollifiedFeedback, t: float, x, r: float) -> float:
    """1 + sup |p| over the product of hull intervals."""
    ends = [mf.hull(t, x, r, i) for i in range(mf.f.n)]
    return 1.0 + math.sqrt(sum(max(abs(lo), abs(hi)) ** 2 for lo, hi in ends))


def descent_select(psi, mf: MollifiedFeedback, t: float, x, h: float, k: int,
                   check_step: bool = True):
    """Velocity v with psi(x + h v) <= psi(x) + h/k, built one coordinate at a time.

    Returns ``(v, StepCertificate)``; raises :class:`DescentFailed` with the
    offending component when no hull value keeps the partial increase
    within ``h / (n k)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(x)
    if h <= 0:
        raise StepTooLarge("step must be positive")
    if check_step:
        gf = g_bound(mf, t, x, k / n)
        if h > 1.0 / (32 * k * gf):
            raise StepTooLarge(f"h={h:g} exceeds 1/(32 k g_f)={1.0 / (32 * k * gf):g}")
    allowed = h / (n * k)
    v = np.zeros(n)
    cur = x.copy()
    psi_cur = float(psi(cur))
    psi0 = psi_cur
    incs = []
    for i in range(n):
        lo, hi = mf.hull(t, cur, 16 * k, i)
        base = cur.copy()

        def phi(w, base=base, i=i):
            y = base.copy()
            y[i] += h * w
            return float(psi(y))

        cands = [lo, hi, _golden(phi, lo, hi) if hi > lo else lo]
        if lo <= 0.0 <= hi:
            cands.append(0.0)
        scored = sorted((phi(w), abs(w), w) for w in cands)
        best_val, _, w = scored[0]
        inc = best_val - psi_cur
        incs.append(inc)
        if inc > allowed:
            raise DescentFailed(
                f"component {i + 1}: best increment {inc:.3g} > h/(nk) = {allowed:.3g}",
                t=t, x=x.copy(), component=i + 1, increment=inc, allowed=allowed)
        v[i] = w
        cur[i] = base[i] + h * w
        psi_cur = best_val
    x_next = x + h * v
    return v, StepCertificate(t, x.copy(), v.copy(), h, psi0, float(psi(x_next)), incs, h / k)


# ---------------------------------------------------------------------------
# configuration and arcs


@dataclass(frozen=True)
class EulerConfig:
    gamma: float
    T: float
    k: int
    eps: float
    delta_D: float
    nodes: int = DEFAULT_NODES
    ball_samples: int = 64

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.k < 1 or self.T <= 0 or self.eps <= 0 or self.delta_D <= 0:
            raise ValueError("k, T, eps and delta(D) must be positive")
        if self.eps < 2 * self.T / self.nodes:
            raise ValueError(f"eps={self.eps:g} below 2T/M={2 * self.T / self.nodes:g}")

    @property
    def h_k(self) -> float:
        return self.gamma / (32 * self.k * self.delta_D)

    @property
    def T_prime(self) -> float:
        return min(self.T, self.gamma / (32 * self.delta_D))

    @property
    def steps(self) -> int:
        # guards against T'/h_k landing a rounding error above an integer
        return max(1, math.ceil(self.T_prime / self.h_k - 1e-9))

    def partition(self) -> np.ndarray:
        c = self.steps
        t = np.array([i * self.h_k for i in range(c + 1)])
        t[-1] = self.T_prime
        return t


def delta_of_D(growth: GrowthConstants, anchor, gamma: float) -> float:
    """1 + c1 + n c2 + c2 max{|v| : v in anchor + (gamma/2) B}."""
    anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
    n = len(anchor)
    far = float(np.linalg.norm(anchor)) + gamma / 2
    return 1.0 + growth.c1 + n * growth.c2 + growth.c2 * far


def feedback_constants(f: FeedbackRealization, samples: int = 256, seed: int = 0):
    """Growth constants and per-component moduli on K = D + n B (bounding box)."""
    anchor = np.asarray(f.anchor, dtype=float)
    n = len(anchor)
    rad = f.gamma / 2 + n
    lo, hi = anchor - rad, anchor + rad
    times = tuple(np.linspace(0.0, f.T, 9))
    growth = estimate_growth(list(f.components), lo, hi, samples, times=times, seed=seed)
    moduli = [estimate_modulus(c, lo, hi, min(samples, 200), times=times, seed=seed)
              for c in f.components]
    return growth, moduli


def make_config(f: FeedbackRealization, k: int, eps: float, growth: GrowthConstants,
                T: Optional[float] = None, **kw) -> EulerConfig:
    T = f.T if T is None else T
    return EulerConfig(f.gamma, T, k, eps, delta_of_D(growth, f.anchor, f.gamma), **kw)


@dataclass
class PolygonalArc:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    k: int
    eps: float
    feedback_id: str = ""
    certificates: List[StepCertificate] = field(default_factory=list)
    config: Optional[EulerConfig] = None

    def at(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.column_stack([np.interp(times, self.t, self.x[:, j])
                                for j in range(self.x.shape[1])])

    @property
    def certified(self) -> bool:
        return all(c.ok for c in self.certificates)

    def descent_bound(self) -> float:
        cfg = self.config
        return float(self.psi[0] + (cfg.T_prime + cfg.gamma) / cfg.k)

    def in_neighbourhood(self, anchor, gamma) -> bool:
        d = np.linalg.norm(self.x - np.asarray(anchor, float), axis=1)
        return bool(np.all(d <= gamma / 2 + 1e-12))

    def to_csv(self) -> str:
        n = self.x.shape[1]
        head = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["psi"]
        lines = [",".join(head)]
        for j in range(len(self.t)):
            vs = self.v[j] if j < len(self.v) else [math.nan] * n
            row = [self.t[j], *self.x[j], *vs, self.psi[j]]
            lines.append(",".join(repr(float(c)) for c in row))
        return "\n".join(lines) + "\n"


def build_arc(f: FeedbackRealization, psi, cfg: EulerConfig,
              moduli: Optional[List[ModulusTable]] = None, feedback_id: str = "f") -> PolygonalArc:
    """Polygonal arc from the anchor of ``f`` with the configured constants."""
    anchor = np.asarray(f.anchor, dtype=float)
    if psi(anchor) > 0:
        log.info("anchor has psi = %.3g > 0; the bound is relative to psi(anchor)", psi(anchor))
    mf = MollifiedFeedback(f, cfg.eps, cfg.nodes, cfg.ball_samples, moduli)
    ts = cfg.partition()
    xs = [anchor.copy()]
    vs, certs = [], []
    for i in range(len(ts) - 1):
        h = float(ts[i + 1] - ts[i])
        try:
            v, cert = descent_select(psi, mf, float(ts[i]), xs[-1], h, cfg.k)
        except DescentFailed as exc:
            exc.step_index = i
            raise
        xs.append(xs[-1] + h * v)
        vs.append(v)
        certs.append(cert)
    x = np.array(xs)
    psis = np.array([float(psi(p)) for p in x])
    return PolygonalArc(ts, x, np.array(vs).reshape(-1, len(anchor)), psis, cfg.k, cfg.eps,
                        feedback_id, certs, cfg)


def sup_distance(a: PolygonalArc, b: PolygonalArc) -> float:
    grid = np.union1d(a.t, b.t)
    grid = grid[grid <= min(a.t[-1], b.t[-1])]
    return float(np.max(np.abs(a.at(grid) - b.at(grid))))


@dataclass
class RefinementReport:
    schedule: List[Tuple[int, float]]
    arcs: List[PolygonalArc]
    sup_distances: List[float]
    reference_distances: List[float]
    final_margin: float
    converged: bool
    tol: float
    failure: Optional[str] = None
    growth: Optional[GrowthConstants] = None

    @property
    def final_arc(self) -> Optional[PolygonalArc]:
        return self.arcs[-1] if self.arcs else None

    def to_text(self) -> str:
        lines = ["refinement report", f"stages: {len(self.arcs)} of {len(self.schedule)}"]
        if self.growth is not None:
            lines.append(f"growth constants (sampled, heuristic): c1={self.growth.c1!r} c2={self.growth.c2!r}")
        for j, arc in enumerate(self.arcs):
            cfg = arc.config
            lines.append(
                f"stage {j + 1}: k={arc.k} eps={arc.eps!r} delta_D={cfg.delta_D!r} h_k={cfg.h_k!r} "
                f"T'={cfg.T_prime!r} steps={cfg.steps} max_psi={float(arc.psi.max())!r} "
                f"bound={arc.descent_bound()!r} certified={arc.certified}")
            if j > 0:
                lines.append(f"  sup distance to previous stage: {self.sup_distances[j - 1]!r}")
            if self.reference_distances:
                lines.append(f"  sup distance to reference: {self.reference_distances[j]!r}")
        lines.append(f"final margin max psi: {self.final_margin!r}")
        lines.append(f"cauchy tolerance {self.tol!r}: {'converged' if self.converged else 'not converged'}")
        if self.failure:
            lines.append(f"aborted: {self.failure}")
        return "\n".join(lines) + "\n"


def refine(f: FeedbackRealization, psi, schedule: Sequence[Tuple[int, float]], *,
           tol: float = 1e-3, reference=None, nodes: int = DEFAULT_NODES,
           ball_samples: int = 64, seed: int = 0) -> RefinementReport:
    """Arcs for each (k, eps) stage and their pairwise sup distances.

    ``reference`` is an optional callable ``t -> x(t)`` (array of times to
    array of states) used only for reporting.
    """
    schedule = [(int(k), float(e)) for k, e in schedule]
    if not schedule:
        raise ValueError("empty schedule")
    ks = [k for k, _ in schedule]
    es = [e for _, e in schedule]
    if ks != sorted(ks) or es != sorted(es, reverse=True):
        raise ValueError("k must be nondecreasing and eps nonincreasing")
    growth, moduli = feedback_constants(f, seed=seed)
    arcs, dists, refs = [], [], []
    failure = None
    for k, eps in schedule:
        cfg = make_config(f, k, eps, growth, nodes=nodes, ball_samples=ball_samples)
        try:
            arc = build_arc(f, psi, cfg, moduli)
        except DescentFailed as exc:
            failure = f"k={k} eps={eps}: step {exc.step_index}: {exc}"
            break
        if arcs:
            dists.append(sup_distance(arcs[-1], arc))
        if reference is not None:
            refs.append(float(np.max(np.abs(arc.x - reference(arc.t)))))
        arcs.append(arc)
    margin = float(arcs[-1].psi.max()) if arcs else math.inf
    converged = failure is None and bool(dists) and dists[-1] < tol
    return RefinementReport(schedule, arcs, dists, refs, margin, converged, tol, failure, growth)
