"""Acceptance criteria 1 to 11, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line; the lines
are repeated in the terminal summary (see ``conftest.py``).  Expected values
marked as oracle values come from ``oracles.py``.
"""

import time

import pytest

from qcompose.lemmas import LEMMA2_TOL, LEMMA3_TOL, run_lemma_suite, run_metric_suite
from qcompose.scenario import load_scenario, shipped_path, shipped_scenarios
from qcompose.suite import render, run_suite
from qcompose.verify import DEF_FUNCTIONALITY, REDUCTION_FACTOR

TAU = 1e-7
LEAKY_OT_ORACLE = 0.25  # oracles.leaky_ot_sender_optimum(); recomputed in test_verify
CLEARTEXT_ID_ORACLE = 0.75  # oracles.cleartext_id_independence(4) = 1 - 1/4

LINES: list[str] = []
_BUNDLES: dict = {}
_SECONDS: dict = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def bundle(name: str):
    if name not in _BUNDLES:
        t0 = time.perf_counter()
        _BUNDLES[name] = run_suite(load_scenario(shipped_path(name)))
        _SECONDS[name] = time.perf_counter() - t0
    return _BUNDLES[name]


def records(name: str, kind: str | None = None) -> list[dict]:
    return [r for r in bundle(name).results if kind is None or r["kind"] == kind]


def test_criterion_01_lemma_suite():
    t0 = time.perf_counter()
    rep = run_lemma_suite(500, seed=0, max_alphabet=4, max_qdim=4, tau=TAU)
    secs = time.perf_counter() - t0
    w = rep.worst
    excess = max(w["lemma1.claim1"], w["lemma1.claim2"], w["lemma1.claim3"])
    ok = (
        rep.passed
        and excess <= TAU
        and w["lemma2"] <= LEMMA2_TOL
        and w["lemma3"] <= LEMMA3_TOL
        and secs < 60
    )
    report(1, ok, f"500 states, lemma1 excess {excess:.3g}, lemma2 {w['lemma2']:.3g}, "
                  f"lemma3 {w['lemma3']:.3g}, {secs:.1f}s")


def test_criterion_02_metric_suite():
    rep = run_metric_suite(200, seed=0, tol=1e-9)
    ok = rep.passed and rep.worst_triangle <= 1e-9 and rep.worst_monotonicity <= 1e-9
    report(2, ok, f"200 triples, triangle excess {rep.worst_triangle:.3g}, "
                  f"monotonicity excess {rep.worst_monotonicity:.3g}")


def _sides(rec: dict) -> set:
    return {lab.rsplit("(", 1)[1].rstrip(")") for lab in (i["label"] for i in rec["items"]) if lab.endswith(")")}


def _strategy_eps(rec: dict) -> list[float]:
    return [v["eps_max"] for k, v in rec["reports"].items() if k != "correctness"]


def test_criterion_03_ideal_soundness():
    recs = records("ideal_soundness", "verify")
    names = {r["id"].split(".")[0] for r in recs}
    worst = max(max(_strategy_eps(r) + [r["reports"]["correctness"]["eps_max"]]) for r in recs)
    ok = (
        names == set(DEF_FUNCTIONALITY.values())
        and all(_sides(r) == {"alice", "bob"} for r in recs)
        and worst <= 1e-9
    )
    report(3, ok, f"{len(names)} builtins, both sides, eps_max {worst:.3g} <= 1e-9")


def test_criterion_04_noisy_calibration():
    recs = records("noisy_calibration", "verify")
    flips = [r for r in recs if ".flip" in r["id"]]
    eps0 = {float(r["id"].split("flip")[1]) for r in flips}
    slack = max(max(_strategy_eps(r) + [r["reports"]["correctness"]["eps_max"]]) - r["items"][0]["bound"]
                for r in recs)
    covered = {r["id"].split(".")[0] for r in flips}
    ok = eps0 == {0.01, 0.05, 0.1} and covered == set(DEF_FUNCTIONALITY.values()) and slack <= TAU
    report(4, ok, f"{len(recs)} runs over eps0 {sorted(eps0)}, worst eps_max - eps0 = {slack:.3g}")


def test_criterion_05_simulation():
    worst, count = -1.0, 0
    for name in ("ideal_soundness", "noisy_calibration"):
        for r in records(name, "verify"):
            for d in r["detail"].values():
                worst = max(worst, d["simulation_distance"] - d["simulation_bound"])
                count += 1
    ok = count > 0 and worst <= TAU
    report(5, ok, f"{count} simulations, worst distance - 3 eps_max = {worst:.3g}")


def test_criterion_06_reductions():
    recs = records("reductions", "specialized")
    seen, worst = {}, -1.0
    for r in recs:
        defn = r["id"].split(".")[0]
        for k, v in r["reports"].items():
            if k == "honest":
                continue
            seen.setdefault(defn, set()).add(v["factor"])
            want = v["factor"] * v["specialized"]["eps_max"]
            worst = max(worst, v["general"]["eps_max"] - want)
    factors = [next(iter(seen.get(d, {None}))) for d in ("ident", "rot", "ot", "ok", "rabin", "ident_strict")]
    ok = factors == [3, 4, 3, 4, 5, 1] and all(len(f) == 1 for f in seen.values()) and worst <= TAU
    ok &= factors == [REDUCTION_FACTOR[d] for d in ("ident", "rot", "ot", "ok", "rabin", "ident_strict")]
    report(6, ok, f"factors {factors}, worst general - factor*eps = {worst:.3g}")


def test_criterion_07_composition():
    recs = {r["id"]: r for r in records("equality_k2_eps005", "compose")}
    noisy = recs["noisy"]["reports"]["composition"]
    perfect = recs["perfect"]["reports"]["composition"]
    sides = {n.split("[")[1].split("]")[0] for n in noisy["delta_dishonest"]}
    dh = noisy["delta_honest"]
    dd = max(noisy["delta_dishonest"].values())
    pmax = max([perfect["delta_honest"], *perfect["delta_dishonest"].values()])
    secs = _SECONDS["equality_k2_eps005"]
    ok = (noisy["k"] == 2 and sides == {"alice", "bob"} and dh <= 0.10 + TAU and dd <= 0.30 + TAU
          and pmax <= 1e-9 and secs < 120)
    report(7, ok, f"delta_honest {dh:.4g} <= 0.1, delta_dishonest {dd:.4g} <= 0.3, perfect {pmax:.3g}, {secs:.1f}s")


def test_criterion_08_nested():
    recs = records("nested_equality", "nested")
    worst = max(r["items"][-1]["value"] - r["detail"]["chain_bound"] for r in recs)
    levels = {len(r["detail"]["level_deltas"]) for r in recs}
    ok = recs and levels == {2} and worst <= TAU
    detail = ", ".join(f"{r['id']} {r['items'][-1]['value']:.4g} <= {r['detail']['chain_bound']:.4g}" for r in recs)
    report(8, bool(ok), detail)


def test_criterion_09_negative_controls():
    leaky = records("ot_leaky", "verify")[0]
    rep = next(v for k, v in leaky["reports"].items() if k != "correctness")
    clear = records("cleartext_id", "verify")[0]
    indep = next(v for k, v in clear["reports"].items() if k != "correctness")["eps"]["independence"]
    ok = (
        rep["exhaustive"] is True
        and rep["eps_max"] >= LEAKY_OT_ORACLE - TAU
        and not leaky["passed"]
        and abs(indep - CLEARTEXT_ID_ORACLE) <= 1e-9
        and not clear["passed"]
    )
    report(9, ok, f"ot_leaky eps_max {rep['eps_max']:.6g} >= oracle {LEAKY_OT_ORACLE}, "
                  f"cleartext independence {indep:.6g} = {CLEARTEXT_ID_ORACLE}")


def test_criterion_10_fixed_point():
    rec = next(r for r in records("fixed_point_toy", "fixed-point") if r["id"] == "two-inputs")
    fp = rec["reports"]["fixed_point"]
    mass = dict((u, p) for u, p in fp["distribution"])[0]
    ok = fp["converged"] and fp["iterations"] <= 200 and mass >= 0.99 and fp["spread"] <= 1e-6
    report(10, ok, f"{fp['iterations']} steps, mass {mass:.6f} on input 0, spread {fp['spread']:.3g}")


def test_criterion_11_determinism():
    differing = []
    for name in shipped_scenarios():
        first = render(bundle(name), "json")
        second = render(run_suite(load_scenario(shipped_path(name))), "json")
        if first != second:
            differing.append(name)
    ok = not differing
    report(11, ok, f"{len(shipped_scenarios())} scenarios, differing: {differing or 'none'}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
