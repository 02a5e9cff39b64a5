"""Acceptance criteria, one test each.

Every test appends a ``[PASS]``/``[FAIL]`` line to the terminal summary. The
verify suites run as ``ebincurv verify`` subprocesses, once with one worker and
once with two; the first run feeds the metric checks, the pair feeds the
determinism check.

Run as a script with ``python3 tests/test_acceptance.py``.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # pragma: no cover - collected from another rootdir
    ACCEPTANCE_LINES = []

from ebincurv import strata
from ebincurv.cli import builtins
from ebincurv.cli.scenario import build
from ebincurv.cli.suites import SUITES
from ebincurv.curvature import CurvatureEvaluator, GeodesicSpec, geodesic_metric

SUITE_CRITERIA = {
    4: "whitney-a", 5: "normal-form", 6: "diagonal-formula", 7: "frame-vs-oracle",
    8: "decay", 9: "bounds", 10: "spike3d", 11: "generic",
}
_runs: dict[tuple[str, int], tuple[str, float]] = {}


def record(number: int, title: str, ok: bool, metric: str, seconds: float) -> None:
    tag = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES.append(f"[{tag}] criterion {number:2d}: {title} ({metric}; {seconds:.2f} s)")


def verify(suite: str, workers: int = 1) -> tuple[str, float]:
    """Stdout and wall time of ``ebincurv verify --suite SUITE`` with ``workers`` threads."""
    key = (suite, workers)
    if key not in _runs:
        env = dict(os.environ, EBINCURV_WORKERS=str(workers))
        start = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "ebincurv", "verify", "--suite", suite, "--seed", "0"],
                              capture_output=True, text=True, env=env)
        elapsed = time.perf_counter() - start
        if proc.returncode not in (0, 1):
            raise RuntimeError(f"verify {suite} exited {proc.returncode}: {proc.stderr}")
        _runs[key] = (proc.stdout, elapsed)
    return _runs[key]


def report(suite: str) -> tuple[dict, float]:
    out, elapsed = verify(suite)
    return json.loads(out), elapsed


# --- combinatorics ----------------------------------------------------------

def test_criterion_01_reference_tables():
    start = time.perf_counter()
    checks = {n: strata.check_reference_table(n) for n in (4, 5, 6)}
    rows = {n: len(strata.enumerate_multiplicities(n, n)) for n in (4, 5, 6)}
    seconds = time.perf_counter() - start
    ok = all(c.passed for c in checks.values()) and rows == {4: 5, 5: 11, 6: 17} and seconds < 1.0
    problems = [p for c in checks.values() for p in c.problems]
    metric = f"rows {rows[4]}/{rows[5]}/{rows[6]}, {len(problems)} mismatches"
    if problems:
        metric += ": " + "; ".join(problems)
    record(1, "reference tables n=4,5,6", ok, metric, seconds)
    assert ok, problems


def test_criterion_02_triplet_bound():
    start = time.perf_counter()
    reps = [strata.verify_triplet_bound(n) for n in range(6, 11)]
    seconds = time.perf_counter() - start
    ok = all(r.passed for r in reps) and seconds < 10.0
    margin = min(r.min_count - (r.n + 1) for r in reps)
    record(2, "triplet bound n=6..10", ok,
           f"{sum(r.checked for r in reps)} faces, min surplus {margin}", seconds)
    assert ok


def test_criterion_03_closure_equivalence():
    tol = 1e-8
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    pairs = bad = 0
    for n in range(1, 6):
        comps = strata.compositions(n)
        for m in comps:
            for mt in comps:
                pairs += 1
                below = strata.leq(m, mt)
                for _ in range(5):
                    centers = np.cumsum(rng.uniform(0.5, 1.5, len(m)))
                    lam = np.repeat(centers, m)
                    lam -= lam.mean()
                    # numerical side: lam lies in the closure of F(mt) iff the distance vanishes
                    approx = strata.face_distance(lam, mt) <= tol
                    if below:
                        near = strata.split_spectrum(lam, m, mt, 0.5 * tol, rng)
                        gaps = np.diff(near)
                        runs = tuple(np.diff(np.flatnonzero(np.r_[True, gaps > 0.01 * tol, True])))
                        approx = approx and runs == tuple(mt) and np.max(np.abs(near - lam)) <= tol
                    bad += below != approx
    seconds = time.perf_counter() - start
    ok = bad == 0 and seconds < 30.0
    record(3, "order <=> closure, n<=5, tol 1e-8", ok, f"{pairs} pairs, {bad} disagreements", seconds)
    assert ok


# --- verify suites ----------------------------------------------------------

def test_criterion_04_whitney_a():
    rep, seconds = report("whitney-a")
    pairs = rep["pairs"]
    n_pairs = sum(len(strata.adjacent_pairs(n)) for n in range(2, 6))
    worst = max(p["worst"] for p in pairs)
    ok = (len(pairs) == n_pairs and rep["samples"] >= 100 and worst <= 1e-10 and seconds < 60.0)
    record(4, "Whitney (a) containment", ok, f"{len(pairs)} pairs x {rep['samples']}, worst {worst:.3g}", seconds)
    assert ok


def test_criterion_05_normal_form():
    rep, seconds = report("normal-form")
    rows = rep["round_trip"]
    worst = max(r["round_trip"] for r in rows)
    dims = all(r["d"] == r["expected_d"] for r in rows) and [r["m"] for r in rows] == list(range(1, 7))
    ok = worst <= 1e-14 and dims and rep["det_worst"] <= 1e-10
    record(5, "normal form and sym_exp determinant", ok,
           f"round trip {worst:.3g}, det {rep['det_worst']:.3g}", seconds)
    assert ok


def _convergence_ok(run: dict, res: int, times: list[float]) -> bool:
    last = run["levels"][-1]
    order = run["orders"][-1]
    return (last["res"] == res and run["times"] == times and last["max"] <= 1e-3
            and order is not None and order >= 3.0)


def test_criterion_06_diagonal_formula():
    rep, seconds = report("diagonal-formula")
    runs = rep["runs"]
    ok = ([r["scenario"] for r in runs] == ["rotation3", "variable3", "mixed3"]
          and all(_convergence_ok(r, 64, [0.0, 0.5, 1.0, 2.0]) for r in runs) and seconds < 300.0)
    metric = ", ".join(f"{r['scenario']} {r['levels'][-1]['max']:.2g} order {r['orders'][-1]:.2f}" for r in runs)
    record(6, "diagonal closed form vs oracle", ok, metric, seconds)
    assert ok


def test_criterion_07_frame_vs_oracle():
    rep, seconds = report("frame-vs-oracle")
    run = rep["runs"][0]
    m = build(builtins.get(run["scenario"]).with_res(8)).block_frame().m
    ok = tuple(m) == (2, 1, 1, 1) and _convergence_ok(run, 16, [0.0, 0.5, 1.0]) and seconds < 600.0
    record(7, "frame formula vs oracle, m=(2,1,1,1)", ok,
           f"{run['levels'][-1]['max']:.2g} at res 16, order {run['orders'][-1]:.2f}", seconds)
    assert ok


def test_criterion_08_decay():
    rep, seconds = report("decay")
    ok = (rep["member"] and rep["delta"] > 0 and rep["window"] == [3.0, 6.0] and rep["C2"] > 0
          and abs(rep["C2"] / rep["predicted_rate"] - 1) <= 0.1 and rep["sup_negative_from_2"] and seconds < 300.0)
    record(8, "decay rate and negative supremum", ok,
           f"C2 {rep['C2']:.4f} vs predicted {rep['predicted_rate']:.4f}, sup<0 from t={rep['T']}", seconds)
    assert ok


def test_criterion_09_bounds():
    rep, seconds = report("bounds")
    ok = (rep["samples"] == 10_000 and rep["lower_violations"] == 0 and rep["upper_violations"] == 0
          and seconds < 120.0)
    record(9, "frame bound audit", ok,
           f"{rep['samples']} samples, violations {rep['lower_violations']}/{rep['upper_violations']}", seconds)
    assert ok


def test_criterion_10_spike3d():
    rep, seconds = report("spike3d")
    rate = rep["fitted_rate"]
    ok = rate is not None and rate > 0 and rep["member"] is False and seconds < 300.0
    record(10, "spike: positive rate at p, not a member", ok,
           f"rate {rate}, member {rep['member']} ({rep['member_reason']})", seconds)
    assert ok


def test_criterion_11_generic():
    rep, seconds = report("generic")
    counts = [c["hits"] for c in rep["n2"]["counts"]]
    deg = rep["degenerate"]
    spread = rep["n3_scaling"]["spread"]
    ok = (len(set(counts)) == 1 and counts[0] > 0 and deg["flagged_nontransversal"] and deg["repair"]["ok"]
          and spread <= 3.0 and seconds < 300.0)
    record(11, "genericity", ok, f"n=2 hits {counts}, repaired {deg['repair']['ok']}, n=3 spread {spread:.2f}",
           seconds)
    assert ok


# --- Gauss-Bonnet and determinism -------------------------------------------

def test_criterion_12_gauss_bonnet():
    start = time.perf_counter()
    b = build(builtins.get("torus2"))
    spec = GeodesicSpec(b.g0, b.H, b.times, b.block_frame())
    worst = {}
    for method in ("frame", "oracle"):
        ev = CurvatureEvaluator(spec, method)
        worst[method] = max(abs(float(np.mean(ev(t) * geodesic_metric(b.g0, b.H, t).volume_density())))
                            for t in b.times)
    seconds = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-6
    record(12, "Gauss-Bonnet on T^2", ok,
           f"res {b.grid.res}, {len(b.times)} times, frame {worst['frame']:.2g}, oracle {worst['oracle']:.2g}",
           seconds)
    assert ok


def test_criterion_13_determinism():
    start = time.perf_counter()
    differs = [name for name in SUITES if verify(name, 1)[0] != verify(name, 2)[0]]
    seconds = time.perf_counter() - start
    ok = not differs
    record(13, "verify JSON identical for 1 and 2 workers", ok,
           f"{len(SUITES)} suites, differing: {differs or 'none'}", seconds)
    assert ok


if __name__ == "__main__":
    code = pytest.main([__file__, "-q"])
    print("\n".join(ACCEPTANCE_LINES))
    sys.exit(code)
