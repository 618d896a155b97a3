"""Scenario files: JSON documents naming functionalities, protocols, strategies and checks.

Loading validates against the shipped schema, applies defaults, enforces the
size caps and resolves every cross-reference.  Values inside a scenario use
JSON lists for tuples and ``null`` for "no value"; they are converted with
:func:`qcompose._json.from_json` so that they compare equal to the values the
builtins use.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import numpy as np

from . import functionality as fn_mod
from . import hybrid as hy
from . import protocol as pr
from ._json import from_json
from .cq import MAX_QDIM, TAU, TAU_NORM, matrix_from_literal
from .errors import CapExceeded, ParseError, QComposeError, SchemaError, UnresolvedReference

SCHEMA_VERSION = 1
DEFAULT_SEED = 0
DEFAULT_BUDGET = 1_000_000
MAX_LEMMA_STATES = 10_000
MAX_ITERATIONS = 100_000
MAX_CALLS = 8
MAX_BUDGET = 10 ** 9

CHECK_KINDS = ("lemmas", "verify", "specialized", "compose", "nested", "fixed-point")


def _schema(name: str) -> dict:
    return json.loads(resources.files("qcompose.schemas").joinpath(name).read_text(encoding="utf-8"))


def scenario_schema() -> dict:
    return _schema("scenario.schema.json")


def report_schema() -> dict:
    return _schema("report.schema.json")


def shipped_scenarios() -> list[str]:
    root = resources.files("qcompose.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def shipped_path(name: str) -> Path:
    p = resources.files("qcompose.scenarios").joinpath(f"{name}.json")
    if not p.is_file():
        raise UnresolvedReference(f"no shipped scenario named {name!r}")
    return Path(str(p))


@dataclass(frozen=True)
class Check:
    id: str
    kind: str
    spec: Mapping[str, Any] = field(repr=False)
    params: Mapping[str, Any] = field(default_factory=dict, repr=False)


@dataclass
class Scenario:
    name: str
    description: str
    path: str
    digest: str
    seed: int
    tolerance: float
    budget: int
    functionalities: dict
    protocols: dict
    strategies: dict
    inputs: dict
    hybrids: dict
    hybrid_adversaries: dict
    checks: list[Check]
    warnings: list[str] = field(default_factory=list)

    def checks_of(self, *kinds: str) -> list[Check]:
        return [c for c in self.checks if c.kind in kinds]


# ---------------------------------------------------------------------------
# entry points


def load_scenario(path, seed: int | None = None, tolerance: float | None = None,
                  budget: int | None = None) -> Scenario:
    """Read, validate and resolve a scenario file; keyword overrides win over the file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror or e}") from e
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: {e}") from e
    return parse_scenario(data, str(path), hashlib.sha256(raw).hexdigest(), seed, tolerance, budget)


def validate_scenario(data: Any, where: str = "<scenario>") -> None:
    try:
        jsonschema.validate(data, scenario_schema(), cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "(root)"
        raise SchemaError(f"{where}: at {loc}: {e.message}") from None


def parse_scenario(data: Any, path: str = "<memory>", digest: str | None = None, seed: int | None = None,
                   tolerance: float | None = None, budget: int | None = None) -> Scenario:
    validate_scenario(data, path)
    if digest is None:
        digest = hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()
    r = _Resolver(data, path)
    sc = Scenario(
        name=data["name"],
        description=data.get("description", ""),
        path=path,
        digest=digest,
        seed=int(seed if seed is not None else data.get("seed", DEFAULT_SEED)),
        tolerance=float(tolerance if tolerance is not None else data.get("tolerance", TAU)),
        budget=int(budget if budget is not None else data.get("budget", DEFAULT_BUDGET)),
        functionalities={}, protocols={}, strategies={}, inputs={}, hybrids={}, hybrid_adversaries={},
        checks=[],
    )
    if sc.seed < 0 or sc.seed >= 2 ** 64:
        raise CapExceeded(f"{path}: seed must fit in 64 bits")
    if sc.tolerance <= 0 or sc.tolerance > 0.1:
        raise CapExceeded(f"{path}: tolerance {sc.tolerance} outside (0, 0.1]")
    if not 0 <= sc.budget <= MAX_BUDGET:
        raise CapExceeded(f"{path}: budget {sc.budget} outside 0..{MAX_BUDGET}")
    seen = set()
    for c in data["checks"]:
        if c["id"] in seen:
            raise SchemaError(f"{path}: duplicate check id {c['id']!r}")
        seen.add(c["id"])
        sc.checks.append(Check(c["id"], c["kind"], c, r.check(c)))
    sc.warnings = [f"{section} {key!r} is never used" for section, key in r.unused()]
    for section in ("functionalities", "protocols", "strategies", "inputs", "hybrids", "hybrid_adversaries"):
        for key in data.get(section, {}):
            getattr(sc, section)[key] = r.get(section, key)
    return sc


# ---------------------------------------------------------------------------
# resolution


def _dist(spec: Mapping, what: str) -> dict:
    if "uniform" in spec:
        vals = [from_json(v) for v in spec["uniform"]]
        return {v: 1.0 / len(vals) for v in vals}
    out: dict = {}
    for v, p in spec["points"]:
        v = from_json(v)
        out[v] = out.get(v, 0.0) + float(p)
    total = sum(out.values())
    if abs(total - 1.0) > TAU_NORM:
        raise SchemaError(f"{what}: probabilities sum to {total!r}")
    return out


def _cap_ell(ell: int, what: str) -> int:
    if ell > fn_mod.MAX_STRING_BITS:
        raise CapExceeded(f"{what}: string length {ell} exceeds the cap {fn_mod.MAX_STRING_BITS}")
    return ell


def _cap_passwords(n: int, what: str) -> int:
    if not 2 <= n <= fn_mod.MAX_PASSWORDS:
        raise CapExceeded(f"{what}: password alphabet size {n} outside 2..{fn_mod.MAX_PASSWORDS}")
    return n


def _matrix(m, what: str) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 3 or a.shape[-1] != 2:
        raise SchemaError(f"{what}: matrices are rows of [re, im] pairs")
    if max(a.shape[:2]) > MAX_QDIM:
        raise CapExceeded(f"{what}: matrix of shape {a.shape[:2]} exceeds dimension cap {MAX_QDIM}")
    return matrix_from_literal(m)


def _kraus_table(rows, what: str) -> dict:
    out = {}
    for row in rows:
        ops = [_matrix(m, what) for m in row["ops"]]
        if len({op.shape for op in ops}) != 1:
            raise SchemaError(f"{what}: Kraus operators of different shapes")
        d_in = ops[0].shape[1]
        s = sum(op.conj().T @ op for op in ops)
        if not np.allclose(s, np.eye(d_in), atol=1e-9):
            raise SchemaError(f"{what}: Kraus list for input {row['input']!r} is not trace preserving")
        out[from_json(row["input"])] = ops
    return out


class _StageTable:
    """Classical randomized map given row by row; a missing row is an error at run time."""

    def __init__(self, name: str, rows, width: int):
        self.name = name
        self.rows = {}
        for row in rows:
            key = from_json(row["when"])
            out: dict = {}
            for item in row["then"]:
                *val, p = from_json(item)
                val = tuple(val)
                if width == 4:
                    s2, m, call = val
                    if call is not None and (not isinstance(call, tuple) or len(call) != 2):
                        raise SchemaError(f"{name}: call must be null or [slot, input], got {call!r}")
                    val = (s2, m, call)
                else:
                    val = val[0]
                out[val] = out.get(val, 0.0) + float(p)
            total = sum(out.values())
            if abs(total - 1.0) > TAU_NORM:
                raise SchemaError(f"{name}: row {key!r} sums to {total!r}")
            self.rows[key] = out

    def __call__(self, *key):
        try:
            return self.rows[key]
        except KeyError:
            raise UnresolvedReference(f"{self.name}: no row for {key!r}") from None


def table_hybrid(name: str, spec: Mapping) -> hy.HybridProtocol:
    k = spec["k"]
    if k > MAX_CALLS:
        raise CapExceeded(f"hybrid {name!r}: {k} calls exceed the cap {MAX_CALLS}")
    stages = {}
    for party in ("alice", "bob"):
        if len(spec[party]) != k + 1:
            raise SchemaError(f"hybrid {name!r}: {party} needs {k + 1} stage tables")
        stages[party] = tuple(_StageTable(f"{name}/{party}[{j}]", t, 4) for j, t in enumerate(spec[party]))
    schedule = tuple(spec["schedule"]) if "schedule" in spec else None
    return hy.HybridProtocol(
        name, k, stages["alice"], stages["bob"],
        _StageTable(f"{name}/alice_out", spec["alice_out"], 2),
        _StageTable(f"{name}/bob_out", spec["bob_out"], 2),
        tuple(from_json(spec["honest_u"])), tuple(from_json(spec["honest_v"])), schedule,
    )


FUNCTIONALITY_BUILTINS = dict(fn_mod.BUILTINS, f_eq=hy.f_eq)


class _Resolver:
    def __init__(self, data: Mapping, path: str):
        self.data = data
        self.path = path
        self.cache: dict = {}
        self.active: set = set()

    def unused(self):
        for section in ("functionalities", "protocols", "strategies", "inputs", "hybrids", "hybrid_adversaries"):
            for key in self.data.get(section, {}):
                if (section, key) not in self.cache:
                    yield section, key

    def get(self, section: str, key: str):
        if (section, key) in self.cache:
            return self.cache[(section, key)]
        table = self.data.get(section, {})
        if key not in table:
            raise UnresolvedReference(f"{self.path}: unknown {section[:-1] if section != 'inputs' else 'input'} {key!r}")
        if (section, key) in self.active:
            raise SchemaError(f"{self.path}: circular reference through {section} {key!r}")
        self.active.add((section, key))
        try:
            obj = getattr(self, "_" + section)(key, table[key])
        except QComposeError as e:
            if isinstance(e, (UnresolvedReference, CapExceeded, SchemaError, ParseError)):
                raise
            raise SchemaError(f"{self.path}: {section} {key!r}: {e}") from e
        finally:
            self.active.discard((section, key))
        self.cache[(section, key)] = obj
        return obj

    def slots(self, section: str, mapping: Mapping) -> dict:
        return {slot: self.get(section, ref) for slot, ref in mapping.items()}

    # sections

    def _functionalities(self, key, spec):
        what = f"functionality {key!r}"
        if "kernel" in spec:
            k = spec["kernel"]
            rows = {}
            for row in k["rows"]:
                out: dict = {}
                for x, y, p in row["out"]:
                    xy = (from_json(x), from_json(y))
                    out[xy] = out.get(xy, 0.0) + float(p)
                rows[(from_json(row["u"]), from_json(row["v"]))] = out
            hu, hv = from_json(k["honest_u"]), from_json(k["honest_v"])
            try:
                return fn_mod.custom_functionality(key, hu, hv, from_json(k.get("ext_u", k["honest_u"])),
                                                   from_json(k.get("ext_v", k["honest_v"])), rows)
            except ValueError as e:
                raise SchemaError(f"{self.path}: {what}: {e}") from None
        name = spec["builtin"]
        if name not in FUNCTIONALITY_BUILTINS:
            raise UnresolvedReference(f"{self.path}: {what}: unknown builtin functionality {name!r}")
        if name in ("f_id", "f_id_strict"):
            return fn_mod.get_builtin(name, n_passwords=_cap_passwords(spec.get("n_passwords", 4), what))
        ell = _cap_ell(spec.get("ell", 1 if name == "f_eq" else 2), what)
        if name == "f_eq":
            return hy.f_eq(ell)
        return fn_mod.get_builtin(name, ell=ell)

    def _protocols(self, key, spec):
        what = f"protocol {key!r}"
        if "kraus" in spec:
            k = spec["kraus"]
            F = self.get("functionalities", k["functionality"])
            return pr.kraus_protocol(F, _kraus_table(k.get("bob", []), what),
                                     _kraus_table(k.get("alice", []), what), name=key)
        kind = spec["builtin"]
        if kind in ("ideal", "noisy-ideal"):
            if "functionality" not in spec:
                raise SchemaError(f"{self.path}: {what}: {kind} needs a functionality")
            F = self.get("functionalities", spec["functionality"])
            if kind == "ideal":
                return pr.ideal_protocol(F)
            if "eps" not in spec:
                raise SchemaError(f"{self.path}: {what}: noisy-ideal needs eps")
            return pr.make_noisy_ideal(F, float(spec["eps"]), spec.get("noise", "output-flip"))
        if kind == "leaky-ot":
            if "mode" not in spec:
                raise SchemaError(f"{self.path}: {what}: leaky-ot needs a mode")
            return pr.make_leaky_ot(spec["mode"], _cap_ell(spec.get("ell", 1), what))
        return pr.cleartext_id(_cap_passwords(spec.get("n_passwords", 4), what))

    def _strategies(self, key, spec):
        s = pr.random_input(_dist(spec["send"], f"strategy {key!r}"), name=key, side=spec["side"])
        if "store" in spec:
            dim = spec["store"].get("dim", 2)
            if dim > MAX_QDIM:
                raise CapExceeded(f"{self.path}: strategy {key!r}: memory dimension {dim} exceeds {MAX_QDIM}")
            s = pr.quantum_storing(s, from_json(spec["store"]["alphabet"]), dim)
        return s

    def _inputs(self, key, spec):
        return _dist(spec, f"{self.path}: input {key!r}")

    def _hybrids(self, key, spec):
        if "tables" in spec:
            return table_hybrid(key, spec["tables"])
        kind = spec["builtin"]
        what = f"hybrid {key!r}"
        if kind == "equality_test":
            return hy.equality_test(_cap_ell(spec.get("ell", 1), what), spec.get("slot", "rot"))
        if kind == "rot_from_ot":
            return hy.rot_from_ot(_cap_ell(spec.get("ell", 1), what), spec.get("slot", "ot"))
        if kind == "pass_through":
            if "functionality" not in spec:
                raise SchemaError(f"{self.path}: {what}: pass_through needs a functionality")
            return hy.pass_through(self.get("functionalities", spec["functionality"]), spec.get("slot", "g"))
        for need in ("outer", "inner", "slot"):
            if need not in spec:
                raise SchemaError(f"{self.path}: {what}: inline needs {need!r}")
        sigma = hy.inline(self.get("hybrids", spec["outer"]), spec["slot"], self.get("hybrids", spec["inner"]))
        if sigma.k > MAX_CALLS:
            raise CapExceeded(f"{self.path}: {what}: {sigma.k} calls exceed the cap {MAX_CALLS}")
        return sigma

    def _hybrid_adversaries(self, key, spec):
        what = f"hybrid adversary {key!r}"
        if "tables" in spec:
            t = spec["tables"]
            if len(t["rounds"]) != t["k"] + 1:
                raise SchemaError(f"{self.path}: {what}: needs {t['k'] + 1} round tables")
            rounds = [_StageTable(f"{key}[{j}]", rows, 4) for j, rows in enumerate(t["rounds"])]
            adv = hy.classical_adversary(key, t["side"], rounds, t["k"], from_json(t.get("s0")))
            if "memory" in t:
                m = t["memory"]
                adv = hy.with_quantum_memory(adv, from_json(m["alphabets"]), m.get("dim", 2))
            return adv
        kind = spec["builtin"]
        if kind == "honest-behaving":
            if "hybrid" not in spec or "side" not in spec:
                raise SchemaError(f"{self.path}: {what}: honest-behaving needs hybrid and side")
            return hy.honest_behaving(self.get("hybrids", spec["hybrid"]), spec["side"])
        advs = hy.equality_adversaries(_cap_ell(spec.get("ell", 1), what))
        return advs[2] if kind == "split-choice" else advs[3]

    # checks

    def check(self, c: Mapping) -> dict:
        kind = c["kind"]
        what = f"{self.path}: check {c['id']!r}"
        if kind == "lemmas":
            n = c.get("states", 500)
            t = c.get("triples", 200)
            if n > MAX_LEMMA_STATES or t > MAX_LEMMA_STATES:
                raise CapExceeded(f"{what}: at most {MAX_LEMMA_STATES} random states")
            a, q = c.get("max_alphabet", 4), c.get("max_qdim", 4)
            if a > 8 or q > 8:
                raise CapExceeded(f"{what}: alphabet and dimension caps are 8")
            return {"states": n, "triples": t, "max_alphabet": a, "max_qdim": q}
        if kind == "verify":
            pi = self.get("protocols", c["protocol"])
            F = self.get("functionalities", c["functionality"]) if "functionality" in c else pi.functionality
            strategies = [self.get("strategies", s) for s in c.get("strategies", [])]
            inputs = {k: self.get("inputs", v) for k, v in c.get("inputs", {}).items()}
            return {"protocol": pi, "functionality": F, "strategies": strategies, "inputs": inputs,
                    "witness": c.get("witness", "exported"), "bound": float(c["bound"]),
                    "correctness": c.get("correctness", True), "simulate": c.get("simulate", True)}
        if kind == "specialized":
            pi = self.get("protocols", c["protocol"])
            return {"protocol": pi, "definition": c["definition"], "eps": float(c["eps"]),
                    "strategies": [self.get("strategies", s) for s in c.get("strategies", [])]}
        if kind == "compose":
            return {
                "hybrid": self.get("hybrids", c["hybrid"]),
                "functionalities": self.slots("functionalities", c["functionalities"]),
                "protocols": self.slots("protocols", c["protocols"]),
                "certified": dict(c.get("certified", {})),
                "eps": float(c["eps"]),
                "adversaries": [self.get("hybrid_adversaries", a) for a in c.get("adversaries", [])],
            }
        if kind == "nested":
            levels = []
            for lv in c["levels"]:
                levels.append({
                    "hybrid": self.get("hybrids", lv["hybrid"]),
                    "functionalities": self.slots("functionalities", lv["functionalities"]),
                    "target": self.get("functionalities", lv["target"]),
                    "adversaries": [self.get("hybrid_adversaries", a) for a in lv.get("adversaries", [])],
                    "witness": lv.get("witness", "search"),
                })
            return {
                "hybrid": self.get("hybrids", c["hybrid"]),
                "target": self.get("functionalities", c["target"]),
                "protocols": self.slots("protocols", c["protocols"]),
                "eps": float(c["eps"]),
                "adversaries": [self.get("hybrid_adversaries", a) for a in c.get("adversaries", [])],
                "witness": c.get("witness", "search"),
                "levels": levels,
            }
        iters = c.get("iterations", 200)
        if iters > MAX_ITERATIONS:
            raise CapExceeded(f"{what}: at most {MAX_ITERATIONS} iterations")
        prof = c["profile"]
        out = {"iterations": iters, "tol": float(c.get("tol", 1e-6)), "damping": float(c.get("damping", 0.5))}
        if "static" in prof:
            values = {}
            for u, e in prof["static"]:
                if not isinstance(e, (int, float)) or not 0 <= e <= 1:
                    raise SchemaError(f"{what}: static profile values must lie in [0, 1]")
                values[from_json(u)] = float(e)
            out.update(kind="static", values=values, alphabet=list(values))
            return out
        sim = prof["simulation"]
        sigma = self.get("hybrids", sim["hybrid"])
        adv = self.get("hybrid_adversaries", sim["adversary"])
        out.update(kind="simulation", hybrid=sigma, adversary=adv,
                   functionalities=self.slots("functionalities", sim["functionalities"]),
                   protocols=self.slots("protocols", sim["protocols"]),
                   alphabet=list(sigma.honest_inputs("alice" if adv.side == "bob" else "bob")))
        return out
