"""Suite execution and report bundles.

A bundle holds one record per executed check.  Records are plain JSON data,
so a bundle written with :func:`emit_report` and read back with
:func:`load_report` is the same bundle.  Wall-clock times are only recorded
on request because they would break byte-identical reports.
"""

from __future__ import annotations

import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import jsonschema
import numpy as np

from . import __version__
from ._json import jsonable
from .cq import TAU
from .errors import ParseError, QComposeError, SchemaError
from .functionality import uniform_inputs
from .hybrid import (
    chain_corollary,
    check_composition,
    equality_witness,
    measure_hybrid_security,
    simulation_profile,
    static_profile,
    worst_input_fixed_point,
)
from .lemmas import run_lemma_suite, run_metric_suite
from .protocol import execute_protocol
from .scenario import Check, Scenario, report_schema
from .verify import (
    REDUCTION_FACTOR,
    Witness,
    check_correctness,
    check_security_witness,
    check_specialized,
    exported_spec_witness,
    reduce_specialized,
    search_security_witness,
    simulation_distance,
)

REPORT_VERSION = 1
VERBS = {
    "lemmas": ("lemmas",),
    "verify": ("verify", "specialized"),
    "compose": ("compose", "nested"),
    "fixed-point": ("fixed-point",),
}


@dataclass
class CheckRecord:
    id: str
    kind: str
    passed: bool
    items: list[tuple[str, float, float]]
    reports: dict[str, Any] = field(default_factory=dict)
    detail: dict[str, Any] = field(default_factory=dict)
    seconds: float | None = None

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "kind": self.kind,
            "passed": self.passed,
            "items": [{"label": a, "value": jsonable(v), "bound": jsonable(b)} for a, v, b in self.items],
            "reports": jsonable(self.reports),
            "detail": jsonable(self.detail),
        }
        if self.seconds is not None:
            out["seconds"] = round(self.seconds, 3)
        return out


@dataclass
class ReportBundle:
    scenario: dict
    settings: dict
    environment: dict
    results: list[dict]

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.results)

    def to_dict(self) -> dict:
        n_pass = sum(r["passed"] for r in self.results)
        return {
            "schema_version": REPORT_VERSION,
            "tool": "qcompose",
            "scenario": self.scenario,
            "settings": self.settings,
            "environment": self.environment,
            "results": self.results,
            "summary": {"passed": n_pass, "failed": len(self.results) - n_pass, "all_passed": self.passed},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportBundle":
        return cls(d["scenario"], d["settings"], d["environment"], d["results"])

    def result(self, check_id: str) -> dict:
        for r in self.results:
            if r["id"] == check_id:
                return r
        raise KeyError(check_id)


def environment() -> dict:
    return {"qcompose": __version__, "numpy": np.__version__, "python": platform.python_version()}


# ---------------------------------------------------------------------------
# check runners


def _lemmas(sc: Scenario, p: dict) -> CheckRecord:
    lem = run_lemma_suite(p["states"], sc.seed, p["max_alphabet"], p["max_qdim"], sc.tolerance)
    met = run_metric_suite(p["triples"], sc.seed, p["max_alphabet"], p["max_qdim"])
    w = lem.worst
    items = [
        ("lemma1 excess over 2/2/4 factors",
         max(w["lemma1.claim1"], w["lemma1.claim2"], w["lemma1.claim3"]), sc.tolerance),
        ("lemma2 gap difference", w["lemma2"], 1e-9),
        ("lemma3 reconstruction", w["lemma3"], 1e-10),
        ("metric excess", max(met.worst_triangle, met.worst_monotonicity), met.tol),
    ]
    return CheckRecord("", "lemmas", lem.passed and met.passed, items,
                       {"lemmas": lem.to_dict(), "metric": met.to_dict()})


def _honest_dist(F, side: str, inputs: dict) -> dict:
    honest = "alice" if side == "bob" else "bob"
    if honest in inputs:
        return inputs[honest]
    dom = F.honest_u if honest == "alice" else F.honest_v
    return {h: 1.0 / len(dom) for h in dom}


def _verify(sc: Scenario, p: dict) -> CheckRecord:
    pi, F, bound, tau = p["protocol"], p["functionality"], p["bound"], sc.tolerance
    reports, detail, items = {}, {}, []
    ok = True
    if p["correctness"]:
        family = [p["inputs"]["honest"]] if "honest" in p["inputs"] else None
        rep = check_correctness(pi, F, family)
        reports["correctness"] = rep.to_dict()
        ok &= rep.passes(bound, tau)
        items.append(("correctness", rep.eps_max, bound))
    for strat in p["strategies"]:
        side = strat.side
        dist = _honest_dist(F, side, p["inputs"])
        res = execute_protocol(pi, dist, **{side: strat})
        w = Witness(pi.exported_witness(side), "exported")
        if p["witness"] == "search":
            w, rep = search_security_witness(res, F, side, budget=sc.budget, seed=sc.seed, seed_witness=w)
        else:
            rep = check_security_witness(res, F, w, side)
        reports[strat.name] = rep.to_dict()
        ok &= rep.passes(bound, tau)
        items.append((f"{strat.name} ({side})", rep.eps_max, bound))
        if p["simulate"]:
            d = simulation_distance(res, dist, F, w)
            detail[strat.name] = {"simulation_distance": d, "simulation_bound": 3 * rep.eps_max}
            ok &= d <= 3 * rep.eps_max + tau
            items.append((f"{strat.name} simulation", d, 3 * rep.eps_max))
    return CheckRecord("", "verify", bool(ok), items, reports, detail)


def _specialized(sc: Scenario, p: dict) -> CheckRecord:
    pi, defn, eps, tau = p["protocol"], p["definition"], p["eps"], sc.tolerance
    F = pi.functionality
    reports, items = {}, []
    hon = check_specialized(defn, execute_protocol(pi, uniform_inputs(F)))
    reports["honest"] = hon.to_dict()
    items.append(("honest", hon.eps_max, eps))
    ok = hon.passes(eps, tau)
    factor = REDUCTION_FACTOR[defn]
    for strat in p["strategies"]:
        side = strat.side
        res = execute_protocol(pi, _honest_dist(F, side, {}), **{side: strat})
        sw = exported_spec_witness(defn, side)
        spec = check_specialized(defn, res, sw)
        w, red_bound = reduce_specialized(defn, side, sw, spec.eps_max, res)
        gen = check_security_witness(res, F, w, side)
        reports[strat.name] = {"specialized": spec.to_dict(), "general": gen.to_dict(),
                               "factor": factor, "reduction_bound": red_bound}
        ok &= spec.passes(eps, tau) and gen.passes(red_bound, tau)
        items.append((f"{strat.name} ({side})", spec.eps_max, eps))
        items.append((f"{strat.name} reduced x{factor}", gen.eps_max, red_bound))
    return CheckRecord("", "specialized", bool(ok), items, reports)


def _compose(sc: Scenario, p: dict) -> CheckRecord:
    rep = check_composition(p["hybrid"], p["functionalities"], p["protocols"], p["eps"], p["adversaries"],
                            certified=p["certified"], tau=sc.tolerance)
    items = [("honest", rep.delta_honest, rep.bound_honest)]
    items += [(f"{n}", d, rep.bound_dishonest) for n, d in rep.delta_dishonest.items()]
    items += [(f"{n} classicality", max(g, default=0.0), 0.0) for n, g in rep.gaps.items()]
    return CheckRecord("", "compose", rep.passes, items, {"composition": rep.to_dict()})


def _witness_fn(name: str) -> Callable[[str], Witness] | None:
    return equality_witness if name == "equality" else None


def _def1_eps(reports: dict) -> float:
    return max(r.eps_max for r in reports.values())


def _nested(sc: Scenario, p: dict) -> CheckRecord:
    kw = {"budget": sc.budget, "seed": sc.seed, "tau": sc.tolerance}
    deltas, reports = [], {}
    for j, lv in enumerate(p["levels"]):
        reps = measure_hybrid_security(lv["hybrid"], lv["functionalities"], lv["target"], lv["adversaries"],
                                       witness=_witness_fn(lv["witness"]), **kw)
        deltas.append((lv["hybrid"].k, _def1_eps(reps)))
        reports[f"level{j}"] = {n: r.to_dict() for n, r in reps.items()}
    bound = p["eps"]
    for k, delta in reversed(deltas):
        bound = chain_corollary(min(delta, 1.0), min(bound, 1.0), k)
    end = measure_hybrid_security(p["hybrid"], p["protocols"], p["target"], p["adversaries"], real=True,
                                  witness=_witness_fn(p["witness"]), **kw)
    reports["end_to_end"] = {n: r.to_dict() for n, r in end.items()}
    measured = _def1_eps(end)
    items = [(f"level{j} delta (k={k})", d, 1.0) for j, (k, d) in enumerate(deltas)]
    items.append(("end-to-end", measured, bound))
    detail = {"chain_bound": bound, "level_deltas": [d for _, d in deltas], "eps": p["eps"]}
    return CheckRecord("", "nested", measured <= bound + sc.tolerance, items, reports, detail)


def _fixed_point(sc: Scenario, p: dict) -> CheckRecord:
    if p["kind"] == "static":
        profile = static_profile(p["values"])
    else:
        profile = simulation_profile(p["hybrid"], p["functionalities"], p["protocols"], p["adversary"], sc.tolerance)
    r = worst_input_fixed_point(profile, p["alphabet"], p["iterations"], tol=p["tol"], damping=p["damping"])
    top = max(r.distribution, key=lambda u: r.distribution[u])
    items = [("profile spread on support", r.spread, p["tol"]),
             (f"iterations (mass {r.distribution[top]:.6f} on {top!r})", float(r.iterations), float(p["iterations"]))]
    detail = {"support": r.support, "history_tail": r.history[-5:]}
    return CheckRecord("", "fixed-point", r.converged and r.spread <= p["tol"], items,
                       {"fixed_point": r.to_dict()}, detail)


RUNNERS: dict[str, Callable[[Scenario, dict], CheckRecord]] = {
    "lemmas": _lemmas,
    "verify": _verify,
    "specialized": _specialized,
    "compose": _compose,
    "nested": _nested,
    "fixed-point": _fixed_point,
}


# ---------------------------------------------------------------------------
# suite


def _run_one(sc: Scenario, c: Check, timing: bool) -> dict:
    t0 = time.perf_counter()
    try:
        rec = RUNNERS[c.kind](sc, dict(c.params))
    except QComposeError as e:
        e.scenario_path = sc.path
        e.args = (f"{sc.path}: check {c.id!r}: {e}",)
        raise
    rec.id = c.id
    if timing:
        rec.seconds = time.perf_counter() - t0
    return rec.to_dict()


def run_suite(sc: Scenario, checks: Sequence[str] | None = None, jobs: int = 1, timing: bool = False) -> ReportBundle:
    """Run the scenario's checks whose kind is in ``checks`` (a verb or kind names).

    Up to ``jobs`` checks run at once; results keep scenario order.  Errors
    from the checks propagate tagged with the scenario path.
    """
    kinds = _kinds(checks)
    selected = [c for c in sc.checks if c.kind in kinds]
    if jobs > 1 and len(selected) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(lambda c: _run_one(sc, c, timing), selected))
    else:
        results = [_run_one(sc, c, timing) for c in selected]
    return ReportBundle(
        {"name": sc.name, "file": Path(sc.path).name, "sha256": sc.digest},
        {"seed": sc.seed, "tolerance": sc.tolerance, "budget": sc.budget, "checks": sorted(kinds)},
        environment(),
        results,
    )


def _kinds(checks) -> set:
    if checks is None:
        return set(RUNNERS)
    if isinstance(checks, str):
        checks = [checks]
    out = set()
    for c in checks:
        if c in VERBS:
            out.update(VERBS[c])
        elif c in RUNNERS:
            out.add(c)
        else:
            raise SchemaError(f"unknown check kind {c!r}")
    return out


# ---------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def summary_lines(bundle: ReportBundle) -> list[str]:
    """One line per check: status, id, then each measured value against its bound."""
    lines = []
    for r in bundle.results:
        parts = "; ".join(f"{it['label']} eps={_fmt(it['value'])} bound={_fmt(it['bound'])}" for it in r["items"])
        lines.append(f"{'PASS' if r['passed'] else 'FAIL'} {r['kind']}/{r['id']}: {parts}")
    return lines


def render(bundle: ReportBundle, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(bundle.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if fmt == "text":
        d = bundle.to_dict()
        head = f"scenario {d['scenario']['name']} seed={d['settings']['seed']} tol={d['settings']['tolerance']}"
        tail = f"{d['summary']['passed']} passed, {d['summary']['failed']} failed"
        return "\n".join([head] + summary_lines(bundle) + [tail]) + "\n"
    raise SchemaError(f"unknown report format {fmt!r}")


def emit_report(bundle: ReportBundle, path, fmt: str = "json") -> None:
    Path(path).write_text(render(bundle, fmt), encoding="utf-8")


def validate_report(data: Any) -> None:
    try:
        jsonschema.validate(data, report_schema(), cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "(root)"
        raise SchemaError(f"report at {loc}: {e.message}") from None


def load_report(path) -> ReportBundle:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ParseError(f"{path}: {e}") from e
    validate_report(data)
    return ReportBundle.from_dict(data)


def default_lemma_scenario(seed: int = 0, tolerance: float = TAU, states: int = 500) -> Scenario:
    """Scenario holding only the lemma check, for running it without a file."""
    from .scenario import parse_scenario

    data = {"schema_version": 1, "name": "lemmas-default",
            "checks": [{"id": "lemmas", "kind": "lemmas", "states": states}]}
    return parse_scenario(data, "<builtin>", seed=seed, tolerance=tolerance)
