"""``ebincurv`` command line.

Exit codes: 0 pass, 1 check failed, 2 configuration error, 3 numerical
horizon reached (output truncated). Set ``EBINCURV_WORKERS`` to choose the
worker count; results do not depend on it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .. import strata
from ..cluster import (ClusterHypothesisError, NoAdmissibleClustering, block_decompose,
                       check_cluster_hypothesis, propose_clustering)
from ..curvature import GeodesicSpec, curvature_trace, relative_discrepancy
from ..field import save_field
from ..genericity import (BudgetExhausted, TransversalityImpossible, perturb_to_generic,
                          posstr_frame_perturbation, singular_locus)
from ..symcore import ExpOverflowError
from . import builtins, suites
from .scenario import Scenario, ScenarioError, build, load

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_HORIZON = 0, 1, 2, 3


def _num(x) -> str:
    return repr(float(x))


def _dump(obj) -> str:
    return json.dumps(suites.jsonable(obj), sort_keys=True, indent=2)


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _scenario(args) -> tuple[Scenario, Path]:
    src = args.scenario
    if src is None:
        raise ScenarioError("--scenario is required")
    if src in builtins.NAMES:
        s, base = builtins.get(src), Path(".")
    else:
        s, base = load(src), Path(src).resolve().parent
    if getattr(args, "res", None):
        s = s.with_res(args.res)
    return s, base


def _seed(args, s: Scenario | None) -> int:
    if args.seed is not None:
        return args.seed
    return s.seed if s is not None else 0


# --- strata ---------------------------------------------------------------

def cmd_strata(args) -> int:
    if not 2 <= args.n <= 10:
        raise ScenarioError("--n must lie in 2..10")
    max_codim = args.n if args.max_codim is None else args.max_codim
    rows = []
    for f in strata.enumerate_multiplicities(args.n, max_codim):
        trip = strata.enumerate_triplets(f.m)
        rows.append({"n": args.n, "m": list(f.m), "codim": f.codim, "count": len(trip),
                     "triplets": [list(t) for t in trip]})
    check = None
    if args.check_paper:
        if args.n not in (4, 5, 6):
            raise ScenarioError("--check-paper has reference tables for n = 4, 5, 6 only")
        check = strata.check_reference_table(args.n)
    if args.json:
        out = {"rows": rows}
        if check is not None:
            out["check"] = {"passed": check.passed, "problems": check.problems}
        print(_dump(out))
    else:
        width = max((len(str(tuple(r["m"]))) for r in rows), default=1)
        print(f"{'m':<{width}}  codim  count  triplets")
        for r in rows:
            trip = " ".join("(" + ",".join(map(str, t)) + ")" for t in r["triplets"])
            print(f"{str(tuple(r['m'])):<{width}}  {r['codim']:>5}  {r['count']:>5}  {trip}")
        if check is not None:
            print(f"reference table n={args.n}: {'pass' if check.passed else 'FAIL'}")
            for p in check.problems:
                print(f"  {p}")
    return EXIT_OK if check is None or check.passed else EXIT_FAIL


# --- cluster --------------------------------------------------------------

def cmd_cluster(args) -> int:
    s, base = _scenario(args)
    b = build(s, base)
    region = b.region(args.region)
    eps_div = args.eps_divisor or s.tolerances.eps_divisor
    out = {"scenario": s.name, "region": region.name}
    try:
        spec = propose_clustering(b.H, region, eps_div)
    except NoAdmissibleClustering as exc:
        out.update(admissible=False, reason=str(exc))
        print(_dump(out) if args.json else f"no admissible clustering: {exc}")
        return EXIT_FAIL
    hyp = check_cluster_hypothesis(b.H, spec, region)
    out.update(admissible=True, m=spec.m, lambda_star=spec.lambda_star, r=spec.r, eps=spec.eps,
               margin=hyp.margin)
    try:
        bf = block_decompose(b.H, spec, region, b.g0)
        out["invariants"] = bf.invariants(b.H, b.g0)
        ok = all(v for k, v in out["invariants"].items() if k.endswith("_ok"))
    except ClusterHypothesisError as exc:
        out["invariants"] = {"error": str(exc), "location": exc.location}
        ok = False
    if args.json:
        print(_dump(out))
    else:
        print(f"m = {spec.m}")
        print("lambda* = " + ", ".join(f"{v:.6g}" for v in spec.lambda_star))
        print(f"r = {spec.r:.6g}  eps = {spec.eps:.6g}  interval margin = {hyp.margin:.6g}")
        for k, v in out["invariants"].items():
            print(f"{k}: {v}")
    return EXIT_OK if ok else EXIT_FAIL


# --- trace ----------------------------------------------------------------

def cmd_trace(args) -> int:
    s, base = _scenario(args)
    b = build(s, base)
    region = b.region(args.region)
    spec = GeodesicSpec(b.g0, b.H, b.times, b.block_frame())
    keep = args.compare_oracle or args.dump is not None
    tr = curvature_trace(spec, args.method, region, s.tolerances.order, keep_fields=keep)
    cols = ["t", "sup_R", "inf_R", "mean_R"]
    ref = None
    if args.compare_oracle:
        ref = curvature_trace(spec, "oracle", region, s.tolerances.order, keep_fields=True)
        cols += ["oracle_sup_R", "oracle_inf_R", "oracle_mean_R", "rel_discrepancy"]
    lines = [",".join(cols)]
    worst = 0.0
    for k, t in enumerate(tr.times):
        row = [_num(t), _num(tr.sup[k]), _num(tr.inf[k]), _num(tr.mean[k])]
        if ref is not None:
            d = relative_discrepancy(tr.fields[k], ref.fields[k])
            worst = max(worst, d)
            row += [_num(ref.sup[k]), _num(ref.inf[k]), _num(ref.mean[k]), _num(d)]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.dump is not None:
        d = Path(args.dump)
        d.mkdir(parents=True, exist_ok=True)
        for k, t in enumerate(tr.times):
            save_field(d / f"R_{k:04d}.field", b.grid, tr.fields[k])
    if ref is not None:
        _err(f"max relative discrepancy vs oracle: {worst:.3e}")
    if tr.truncated:
        _err(f"numerical horizon t = {tr.horizon:.6g}: later times omitted")
        return EXIT_HORIZON
    return EXIT_OK


# --- asymp ----------------------------------------------------------------

def cmd_asymp(args) -> int:
    s, base = _scenario(args)
    if args.window:
        s = replace(s, tolerances=replace(s.tolerances, fit_window=tuple(args.window)))
    rep = suites.decay_report(s, args.method, base)
    if args.json:
        print(_dump(rep))
    else:
        print(f"{s.name}: {'member' if rep['member'] else 'not member'}")
        if "predicted_rate" in rep:
            print(f"predicted rate {rep['predicted_rate']:.6g} (floor {rep['floor']:.6g}, "
                  f"delta {rep['delta']:.6g})")
        if "C2" in rep:
            print(f"fitted C2 {rep['C2']:.6g}, ratio {rep['ratio']:.4f}, C1 {rep['C1']:.6g}")
            print(f"sup R < 0 for t >= 2: {rep['sup_negative_from_2']}")
        if "reason" in rep:
            print(f"reason: {rep['reason']}")
        print("pass" if rep["passed"] else "FAIL")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


# --- generic --------------------------------------------------------------

def cmd_generic(args) -> int:
    s, base = _scenario(args)
    b = build(s, base)
    gap_tol = args.gap_tol or suites.default_gap_tol(b)
    margin_tol = args.margin_tol or s.tolerances.margin_tol
    hits = singular_locus(b.H, gap_tol, margin_tol)
    table = suites._hit_table(hits)
    ok = all(h.transversal for h in hits)
    if args.json:
        print(_dump({"scenario": s.name, "gap_tol": gap_tol, "hits": table, "passed": ok}))
    else:
        print(f"{'location':<32} {'m':<12} {'gap':>10} {'margin':>10}  verdict")
        for h in hits:
            loc = "(" + ", ".join(f"{v:.5f}" for v in h.point) + ")"
            verdict = "transversal" if h.transversal else ("non-transversal " + h.note).strip()
            print(f"{loc:<32} {str(h.m):<12} {h.gap:>10.3e} {h.margin:>10.3e}  {verdict}")
        print(f"{len(hits)} hit(s), {'all transversal' if ok else 'NOT all transversal'}")
    return EXIT_OK if ok else EXIT_FAIL


# --- verify ---------------------------------------------------------------

def cmd_verify(args) -> int:
    s, base = _scenario(args) if args.scenario else (None, ".")
    rep = suites.run_suite(args.suite, s, _seed(args, s), base)
    text = _dump(rep) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    _err(f"{args.suite}: {'pass' if rep['passed'] else 'FAIL'}")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


# --- perturb --------------------------------------------------------------

def _pairs(text: str | None, n: int) -> list[tuple[int, int]]:
    if not text:
        return [(j, k) for j in range(1, n) for k in range(j + 1, n)]
    out = []
    for item in text.split(","):
        try:
            j, k = (int(v) for v in item.split("-"))
        except ValueError:
            raise ScenarioError(f"bad pair {item!r}; use j-k with 1-based indices") from None
        if not 1 < j < k <= n:
            raise ScenarioError(f"pair {item!r} needs 1 < j < k <= {n}")
        out.append((j - 1, k - 1))
    return out


def cmd_perturb(args) -> int:
    s, base = _scenario(args)
    b = build(s, base)
    seed = _seed(args, s)
    if args.mode == "generic":
        gap_tol = args.gap_tol or suites.default_gap_tol(b)
        try:
            res = perturb_to_generic(b.H, seed, args.magnitude, gap_tol, s.tolerances.margin_tol,
                                     args.budget)
        except BudgetExhausted as exc:
            _err(str(exc))
            return EXIT_FAIL
        out = {"scenario": s.name, "mode": "generic", "seed": seed, "candidate": res.candidate,
               "hits": suites._hit_table(res.hits)}
        if args.out:
            save_field(args.out, b.grid, res.H.Hf)
    else:
        region = b.region(args.region)
        bf = b.block_frame()
        if bf is None:
            bf = block_decompose(b.H, propose_clustering(b.H, region, s.tolerances.eps_divisor), region, b.g0)
        try:
            res = posstr_frame_perturbation(bf, region, _pairs(args.pairs, b.grid.n), seed, b.g0,
                                            args.magnitude, args.budget, order=s.tolerances.order)
        except BudgetExhausted as exc:
            _err(str(exc))
            return EXIT_FAIL
        out = {"scenario": s.name, "mode": "posstr", "seed": seed, "candidate": res.candidate,
               "min_sum": res.min_sum}
        if args.out:
            save_field(args.out, b.grid, res.block_frame.frame.E)
    print(_dump(out) if args.json else "\n".join(f"{k}: {v}" for k, v in suites.jsonable(out).items()))
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="NAME|PATH",
                        help=f"scenario file or built-in name ({', '.join(builtins.NAMES)})")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--json", action="store_true", help="emit JSON instead of text")
    common.add_argument("--res", type=int, default=None, help="override the grid resolution")

    p = argparse.ArgumentParser(prog="ebincurv", description=__doc__.splitlines()[0],
                                epilog="exit codes: 0 pass, 1 check failed, 2 configuration error, "
                                       "3 numerical horizon")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    q = sub.add_parser("strata", parents=[common], help="multiplicity faces and triplet tables")
    q.add_argument("--n", type=int, required=True, help="matrix size, 2..10")
    q.add_argument("--max-codim", type=int, default=None, help="largest face codimension (default n)")
    q.add_argument("--check-paper", action="store_true",
                   help="compare with the embedded reference tables (n = 4, 5, 6)")
    q.set_defaults(func=cmd_strata)

    q = sub.add_parser("cluster", parents=[common], help="clustering, margins and block-frame residuals")
    q.add_argument("--region", default=None, help="named region (default whole grid)")
    q.add_argument("--eps-divisor", type=float, default=None, help="eps = r / divisor")
    q.set_defaults(func=cmd_cluster)

    q = sub.add_parser("trace", parents=[common], help="CSV of scalar curvature along the geodesic")
    q.add_argument("--method", choices=("frame", "diagonal", "oracle"), default="frame")
    q.add_argument("--region", default=None, help="named region (default whole grid)")
    q.add_argument("--compare-oracle", action="store_true",
                   help="add oracle columns and per-time relative discrepancy")
    q.add_argument("--dump", metavar="DIR", default=None, help="write each curvature field to DIR")
    q.add_argument("--output", "-o", default=None, help="CSV path (default stdout)")
    q.set_defaults(func=cmd_trace)

    q = sub.add_parser("asymp", parents=[common], help="decay fit against the predicted rate")
    q.add_argument("--method", choices=("frame", "diagonal", "oracle"), default="frame")
    q.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"), default=None)
    q.set_defaults(func=cmd_asymp)

    q = sub.add_parser("generic", parents=[common], help="singular locus hits and transversality")
    q.add_argument("--gap-tol", type=float, default=None)
    q.add_argument("--margin-tol", type=float, default=None)
    q.set_defaults(func=cmd_generic)

    q = sub.add_parser("verify", parents=[common], help="run a named verification suite")
    q.add_argument("--suite", required=True, choices=sorted(suites.SUITES))
    q.add_argument("--output", "-o", default=None, help="JSON path (default stdout)")
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("perturb", parents=[common], help="seeded perturbation searches")
    q.add_argument("--mode", choices=("generic", "posstr"), default="generic")
    q.add_argument("--magnitude", type=float, default=0.05,
                   help="sup Frobenius norm (generic) or frame rotation amplitude (posstr)")
    q.add_argument("--budget", type=int, default=16, help="number of seeded candidates")
    q.add_argument("--gap-tol", type=float, default=None)
    q.add_argument("--region", default=None)
    q.add_argument("--pairs", default=None, help="posstr pairs as j-k list, 1-based, 1 < j < k")
    q.add_argument("--out", default=None, help="write the perturbed matrix (generic) or frame (posstr)")
    q.set_defaults(func=cmd_perturb)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except ExpOverflowError as exc:
        _err(f"numerical horizon: {exc}")
        return EXIT_HORIZON
    except (TransversalityImpossible, ValueError) as exc:
        _err(f"error: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
