"""Randomized checks of the cq-state lemmas and of basic trace-distance properties."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cq import (
    TAU,
    CQState,
    EventPredicate,
    lemma1_gaps,
    lemma2_gaps,
    lemma3_gap,
    markov_project,
    mix,
    partial_trace,
    random_cq_state,
    reorder,
    tensor,
    trace_distance,
    uniform_state,
)
from .errors import ParameterOutOfRange

LEMMA2_TOL = 1e-9
LEMMA3_TOL = 1e-10
METRIC_TOL = 1e-9
SHAPES = ("random", "near-markov", "near-uniform")


def _layout(rng: np.random.Generator, max_alphabet: int, max_qdim: int):
    sizes = rng.integers(2, max_alphabet + 1, size=3)
    classical = [("X", int(sizes[0])), ("Y", int(sizes[1])), ("Z", int(sizes[2]))]
    return classical, [("E", int(rng.integers(2, max_qdim + 1)))]


def random_lemma_state(rng: np.random.Generator, max_alphabet: int = 4, max_qdim: int = 4) -> tuple[str, CQState]:
    """State on ``X, Y, Z, E`` of one of three shapes, mixed with some noise."""
    classical, quantum = _layout(rng, max_alphabet, max_qdim)
    shape = SHAPES[int(rng.integers(len(SHAPES)))]
    base = random_cq_state(rng, classical, quantum, sparsity=float(rng.choice([0.0, 0.3])))
    if shape == "random":
        return shape, base
    if shape == "near-markov":
        core = markov_project(base, ("X",), ("Y",))
    else:
        x = partial_trace(base, ("X",))
        core = reorder(tensor(uniform_state(x.registers), partial_trace(base, ("Y", "Z", "E"))), base.names)
    noise = float(rng.uniform(0.0, 0.2))
    other = random_cq_state(rng, classical, quantum)
    return shape, mix([(1 - noise, core), (noise, other)])


@dataclass
class LemmaSuiteReport:
    n_states: int
    seed: int
    tau: float
    failures: dict[str, int] = field(default_factory=dict)
    worst: dict[str, float] = field(default_factory=dict)
    shapes: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.failures.values())

    def to_dict(self) -> dict:
        from ._json import jsonable

        return {
            "n_states": self.n_states,
            "seed": self.seed,
            "tau": jsonable(self.tau),
            "failures": dict(self.failures),
            "worst": jsonable(self.worst),
            "shapes": dict(self.shapes),
            "passed": self.passed,
        }


def _slack(gap: float, factor: float, eps: float) -> float:
    """How far ``gap`` exceeds ``factor * eps``; positive means violated."""
    return gap - factor * eps


def run_lemma_suite(n_states: int = 500, seed: int = 0, max_alphabet: int = 4, max_qdim: int = 4,
                    tau: float = TAU) -> LemmaSuiteReport:
    """Every state is checked against all three lemmas.

    Lemma 1 on ``(X, Y, Z, E)``; Lemma 2 with ``f(X, Y, Z) = X + Y + Z mod |X|``
    against the split ``X | YZ | E``; Lemma 3 with an event on ``(Y, Z)``.
    ``worst`` records the largest violation slack (Lemma 1), the largest
    difference (Lemma 2) and the largest reconstruction gap (Lemma 3).
    """
    if n_states < 1:
        raise ParameterOutOfRange("need at least one state")
    if not 2 <= max_alphabet <= 8 or not 2 <= max_qdim <= 8:
        raise ParameterOutOfRange("alphabet and dimension caps must lie in 2..8")
    rng = np.random.default_rng(seed)
    rep = LemmaSuiteReport(n_states, seed, tau)
    keys = ("lemma1.claim1", "lemma1.claim2", "lemma1.claim3", "lemma2", "lemma3")
    rep.failures = {k: 0 for k in keys}
    rep.worst = {k: -np.inf if k.startswith("lemma1") else 0.0 for k in keys}
    for _ in range(n_states):
        shape, st = random_lemma_state(rng, max_alphabet, max_qdim)
        rep.shapes[shape] = rep.shapes.get(shape, 0) + 1

        g = lemma1_gaps(st, ("X",), ("Y",), ("Z",), ("E",), tau)
        for key, ok, slack in (
            ("lemma1.claim1", g.claim1, _slack(g.eps2, 2, g.eps1)),
            ("lemma1.claim2", g.claim2, _slack(g.eps_markov, 2, g.eps_prod)),
            ("lemma1.claim3", g.claim3, _slack(g.eps_markov_unif, 4, g.eps_unif)),
        ):
            rep.worst[key] = max(rep.worst[key], slack)
            rep.failures[key] += not ok

        nx = len(st.register("X").alphabet)
        before, after = lemma2_gaps(st, ("X",), ("Y", "Z"), lambda x, y, z: (x + y + z) % nx, ("X", "Y", "Z"))
        diff = abs(before - after)
        rep.worst["lemma2"] = max(rep.worst["lemma2"], diff)
        rep.failures["lemma2"] += diff > LEMMA2_TOL

        chosen = {(y, z) for y in st.register("Y").alphabet for z in st.register("Z").alphabet
                  if rng.random() < 0.5}
        ev = EventPredicate(("Y", "Z"), lambda y, z: (y, z) in chosen)
        gap = lemma3_gap(st, ("X",), ("Y", "Z"), ev)
        rep.worst["lemma3"] = max(rep.worst["lemma3"], gap)
        rep.failures["lemma3"] += gap > LEMMA3_TOL
    rep.worst = {k: float(v) for k, v in rep.worst.items()}
    return rep


@dataclass
class MetricSuiteReport:
    n_triples: int
    seed: int
    tol: float
    triangle_failures: int = 0
    monotonicity_failures: int = 0
    worst_triangle: float = -np.inf
    worst_monotonicity: float = -np.inf

    @property
    def passed(self) -> bool:
        return self.triangle_failures == 0 and self.monotonicity_failures == 0

    def to_dict(self) -> dict:
        from ._json import jsonable

        return jsonable({
            "n_triples": self.n_triples,
            "seed": self.seed,
            "tol": self.tol,
            "triangle_failures": self.triangle_failures,
            "monotonicity_failures": self.monotonicity_failures,
            "worst_triangle": float(self.worst_triangle),
            "worst_monotonicity": float(self.worst_monotonicity),
            "passed": self.passed,
        })


def run_metric_suite(n_triples: int = 200, seed: int = 0, max_alphabet: int = 4, max_qdim: int = 4,
                     tol: float = METRIC_TOL) -> MetricSuiteReport:
    """Triangle inequality and monotonicity under tracing out ``E`` and ``Y``."""
    rng = np.random.default_rng(seed)
    rep = MetricSuiteReport(n_triples, seed, tol)
    for _ in range(n_triples):
        classical, quantum = _layout(rng, max_alphabet, max_qdim)
        a, b, c = (random_cq_state(rng, classical, quantum) for _ in range(3))
        tri = trace_distance(a, c) - trace_distance(a, b) - trace_distance(b, c)
        rep.worst_triangle = max(rep.worst_triangle, tri)
        rep.triangle_failures += tri > tol
        d = trace_distance(a, b)
        for keep in (("X", "Y", "Z"), ("X", "Z", "E")):
            mono = trace_distance(partial_trace(a, keep), partial_trace(b, keep)) - d
            rep.worst_monotonicity = max(rep.worst_monotonicity, mono)
            rep.monotonicity_failures += mono > tol
    return rep
