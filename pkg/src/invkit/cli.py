"""Command line front end: ``invkit COMMAND SCENARIO [options]``.

Every run writes its outputs plus a ``manifest.txt`` into ``--out``.  The
manifest holds the arguments and the SHA-256 of the scenario and of each
output file, and no timestamps, so ``--manifest`` reruns are byte-identical.
Exit codes: 0 PASS, 1 FAIL, 2 INCONCLUSIVE, 64 bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from .euler import refine
from .expr import ExpressionError
from .geometry import DegenerateBoundary, DimensionTooLarge, distance
from .inclusion import (ConstantPolicy, DomainExit, GreedyAscentPolicy, HypothesisViolation,
                        RandomPolicy, integrate, selection_valid)
from .invariance import (CheckRegion, check_hamiltonian_condition, check_normal_cone_condition,
                         check_tangent_condition, falsify_invariance)
from .monotone import (OrderError, OrderedPairSample, check_monotone_cone, check_monotone_gamma,
                       search_order_violation)
from .scenario import MissingSection, ParseError, Scenario, load_scenario
from .verdict import FAIL, INCONCLUSIVE, PASS, Verdict

COMMANDS = ("check-hamiltonian", "check-normal-cone", "check-tangent", "check-monotone",
            "simulate", "viable-euler", "falsify")
EXIT_INPUT = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="invkit", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("scenario_pos", nargs="?", metavar="SCENARIO",
                   help="scenario file or bundled scenario name")
    p.add_argument("--scenario", help="scenario file or bundled scenario name")
    p.add_argument("--out", default="invkit-out", help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--tol", type=float, help="override the scenario tolerance")
    p.add_argument("--grid", type=float, help="override the check-region grid spacing")
    p.add_argument("--budget", type=int, help="override trial / sample budgets")
    p.add_argument("--manifest", help="rerun with the arguments stored in a manifest")
    p.add_argument("--quiet", action="store_true", help="suppress the banner and summary")
    p.add_argument("--version", action="version", version=f"invkit {__version__}")
    return p


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    return repr(float(v))


def witnesses_csv(verdict: Verdict) -> str:
    ws = verdict.witnesses
    n = max((len(np.atleast_1d(w.x)) for w in ws), default=0)
    k = max((len(np.atleast_1d(w.direction)) for w in ws if w.direction is not None), default=0)
    q = max((len(np.atleast_1d(w.velocity)) for w in ws if w.velocity is not None), default=0)
    head = ["rank", "margin"] + [f"x{i + 1}" for i in range(n)] + \
        [f"d{i + 1}" for i in range(k)] + [f"v{i + 1}" for i in range(q)]
    lines = [",".join(head)]
    for r, w in enumerate(ws):
        def cols(v, size):
            vals = [] if v is None else [_fmt(c) for c in np.atleast_1d(v)]
            return vals + [""] * (size - len(vals))
        lines.append(",".join([str(r + 1), _fmt(w.margin)] + cols(w.x, n) + cols(w.direction, k)
                              + cols(w.velocity, q)))
    return "\n".join(lines) + "\n"


class Run:
    def __init__(self, out: Path):
        self.out = out
        self.files: Dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def verdict(self, v: Verdict, stem: str = "verdict"):
        self.write(f"{stem}.txt", v.to_text())
        if v.witnesses:
            self.write(f"{stem}_witnesses.csv", witnesses_csv(v))


# ---------------------------------------------------------------------------
# commands


def _boundary_kw(sc: Scenario, budget: Optional[int]) -> dict:
    b = sc.raw.get("boundary") or {}
    kw = {"count": int(budget or b.get("count", 64)), "seed": sc.seed, "tol": sc.tol}
    if "lo" in b and "hi" in b:
        kw["bounds"] = (np.asarray(b["lo"], float), np.asarray(b["hi"], float))
    return kw


def cmd_check_hamiltonian(sc, run, args) -> Verdict:
    target = sc.psi if sc.psi is not None else sc.need("set")
    region = sc.need("region")
    if args.grid:
        region = CheckRegion(region.lo, region.hi, args.grid, region.margin)
    v = check_hamiltonian_condition(sc.inclusion, target, region, sc.tol, fallback=sc.set)
    run.verdict(v)
    return v


def cmd_check_normal_cone(sc, run, args) -> Verdict:
    v = check_normal_cone_condition(sc.inclusion, sc.need("set"), **_boundary_kw(sc, args.budget))
    run.verdict(v)
    return v


def cmd_check_tangent(sc, run, args) -> Verdict:
    v = check_tangent_condition(sc.inclusion, sc.need("set"), **_boundary_kw(sc, args.budget))
    run.verdict(v)
    return v


def cmd_check_monotone(sc, run, args) -> Verdict:
    if sc.gamma_order is None:
        raise MissingSection("order")
    mo = sc.raw.get("monotone") or {}
    radius = float(mo.get("radius", 1.0))
    count = int(mo.get("count", 16))
    gam = check_monotone_gamma(sc.inclusion, sc.gamma_order, count=count, radius=radius,
                               seed=sc.seed, tol=sc.tol)
    run.verdict(gam, "verdict_gamma")
    if sc.order is None:
        run.verdict(gam)
        return gam
    cone = check_monotone_cone(sc.inclusion, sc.order, count=count, bases=int(mo.get("bases", 8)),
                               radius=radius, seed=sc.seed, tol=sc.tol)
    run.verdict(cone, "verdict_cone")
    final = Verdict(cone.status, cone.witnesses, dict(cone.resolution), cone.reason)
    final.resolution["gamma_status"] = gam.status
    final.resolution["agree"] = cone.status == gam.status
    if cone.status != gam.status:
        final.status = INCONCLUSIVE
        final.reason = f"cone check {cone.status} but order-set check {gam.status}"
    if cone.status == FAIL:
        pair = _violation_pair(sc, cone, mo)
        idx, rec = search_order_violation(
            sc.inclusion, sc.order, pair, budget=int(args.budget or mo.get("budget", 100)),
            T=float(mo.get("T", 1.0)), h=float(mo.get("h", 1e-2)), seed=sc.seed, tol=sc.tol)
        final.resolution["violation_search"] = {
            "found": rec is not None, "policy_pair": idx,
            "time": None if rec is None else rec.time,
            "start": [pair.xi1.tolist(), pair.xi2.tolist()]}
        if rec is not None:
            run.write("violation.csv", rec.to_csv())
    run.verdict(final)
    return final


def _violation_pair(sc, cone: Verdict, mo) -> OrderedPairSample:
    p = mo.get("pair")
    if p is not None:
        return OrderedPairSample.make(sc.order, p["xi1"], p["xi2"], p.get("u1", ()), p.get("u2", ()))
    w = cone.witnesses[0].extra
    return OrderedPairSample.make(sc.order, w["xi1"], w["xi2"], w["u1"], w["u2"])


def _policy(sc: Scenario, spec: dict, measure=None):
    kind = spec.get("kind", "random")
    if kind == "random":
        return RandomPolicy(int(spec.get("seed", sc.seed)))
    if kind == "constant":
        return ConstantPolicy(spec["deltas"], spec.get("control"))
    if kind == "greedy":
        if measure is None:
            raise MissingSection("psi")
        return GreedyAscentPolicy(measure)
    raise ParseError("simulate.policy.kind", f"unknown policy '{kind}'")


def _measure(sc: Scenario):
    if sc.psi is not None:
        return lambda x: float(sc.psi(x))
    if sc.set is not None:
        return lambda x: float(distance(sc.set, x))
    return None


def cmd_simulate(sc, run, args) -> Verdict:
    s = sc.section("simulate")
    pol = _policy(sc, s.get("policy") or {}, _measure(sc))
    tr = integrate(sc.inclusion, pol, s["x0"], float(s.get("T", 1.0)), float(s.get("h", 1e-2)))
    run.write("trajectory.csv", tr.to_csv())
    res = {"steps": len(tr.t) - 1, "T": float(tr.t[-1]), "policy": tr.policy,
           "selections_valid": selection_valid(sc.inclusion, tr)}
    if sc.set is not None:
        res["max_distance_to_set"] = max(float(distance(sc.set, p)) for p in tr.x)
    v = Verdict(PASS, [], res, "trajectory written")
    run.verdict(v)
    return v


def cmd_viable_euler(sc, run, args) -> Verdict:
    e = sc.section("euler")
    f = sc.need("feedback")
    psi = sc.need("psi")
    rep = refine(f, psi, e.get("schedule", [[4, 0.25], [8, 0.125], [16, 0.0625]]),
                 tol=float(e.get("tol", 1e-3)), nodes=int(e.get("nodes", 64)),
                 ball_samples=int(e.get("ball_samples", 64)), seed=sc.seed)
    run.write("report.txt", rep.to_text())
    budget = float(e.get("quadrature_budget", 1e-6))
    bound_ok = True
    for arc in rep.arcs:
        run.write(f"arc_k{arc.k}.csv", arc.to_csv())
        bound_ok &= bool(np.all(arc.psi <= arc.descent_bound() + budget)) and arc.certified
    res = {"stages": len(rep.arcs), "final_margin": rep.final_margin,
           "sup_distances": rep.sup_distances, "converged": rep.converged}
    if rep.failure or not bound_ok:
        v = Verdict(FAIL, [], res, rep.failure or "descent bound violated")
    elif not rep.converged:
        v = Verdict(INCONCLUSIVE, [], res, "arcs did not meet the Cauchy tolerance")
    else:
        v = Verdict(PASS, [], res, "every arc satisfies the descent bound; refinement converged")
    run.verdict(v)
    return v


def cmd_falsify(sc, run, args) -> Verdict:
    s = sc.section("falsify")
    target = sc.need("set") if s.get("target", "set") == "set" else sc.need("psi")
    r = falsify_invariance(sc.inclusion, target, s["x0"], budget=int(args.budget or s.get("budget", 100)),
                           T=float(s.get("T", 1.0)), h=float(s.get("h", 1e-2)), seed=sc.seed,
                           exit_tol=sc.tol)
    v = r.verdict()
    if r.escaped:
        run.write("trajectory.csv", r.trajectory.to_csv())
    run.verdict(v)
    return v


HANDLERS = {
    "check-hamiltonian": cmd_check_hamiltonian,
    "check-normal-cone": cmd_check_normal_cone,
    "check-tangent": cmd_check_tangent,
    "check-monotone": cmd_check_monotone,
    "simulate": cmd_simulate,
    "viable-euler": cmd_viable_euler,
    "falsify": cmd_falsify,
}


# ---------------------------------------------------------------------------
# entry point


def _from_manifest(args, parser):
    data = yaml.safe_load(Path(args.manifest).read_text())
    stored = data.get("arguments") or {}
    args.command = args.command or data.get("command")
    if not (args.scenario or args.scenario_pos):
        args.scenario = data.get("scenario")
    for key in ("seed", "tol", "grid", "budget"):
        if getattr(args, key) is None:
            setattr(args, key, stored.get(key))
    return data


def manifest_text(args, sc: Scenario, run: Run, verdict: Verdict, source: str) -> str:
    doc = {
        "invkit_version": __version__,
        "command": args.command,
        "scenario": source,
        "scenario_name": sc.name,
        "scenario_sha256": sc.digest,
        "arguments": {"seed": args.seed, "tol": args.tol, "grid": args.grid, "budget": args.budget},
        "effective": {"seed": sc.seed, "tol": sc.tol},
        "status": verdict.status,
        "exit_code": verdict.exit_code,
        "outputs": dict(sorted(run.files.items())),
    }
    return yaml.safe_dump(doc, sort_keys=True)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    expected = None
    if args.manifest:
        expected = _from_manifest(args, parser)
    source = args.scenario or args.scenario_pos
    if args.command is None or source is None:
        parser.error("a command and a scenario are required")
    try:
        sc = load_scenario(source)
        if expected and expected.get("scenario_sha256") not in (None, sc.digest):
            print("warning: scenario differs from the manifest", file=sys.stderr)
        if args.seed is not None:
            sc.seed = args.seed
        if args.tol is not None:
            sc.tol = args.tol
        if not args.quiet:
            print(sc.banner())
        out = Run(Path(args.out))
        verdict = HANDLERS[args.command](sc, out, args)
    except (ParseError, HypothesisViolation, MissingSection, FileNotFoundError, OrderError,
            ExpressionError) as exc:
        print(f"invkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateBoundary, DomainExit, DimensionTooLarge) as exc:
        print(f"invkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    out.write("manifest.txt", manifest_text(args, sc, out, verdict, str(source)))
    if not args.quiet:
        print(f"{args.command}: {verdict.status} ({verdict.reason})")
        print(f"outputs in {out.out}")
    return verdict.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
