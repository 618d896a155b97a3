"""Classical hybrid protocols, their real instantiations and the composition checks.

A hybrid protocol runs rounds ``0 .. k``.  In round ``j`` each party applies
its stage map ``stage(s, x, inbox) -> {(s', msg, call): p}`` where ``x`` is
the output of the previous call, ``inbox`` the other party's message of the
previous round and ``call = (slot, u)`` names the functionality slot and the
input for call ``j + 1`` (``None`` in the last round).  After round ``k``
each party applies ``out(s, inbox) -> {output: p}``.

Both parties announce the slot before every call; on disagreement the honest
party aborts with output :data:`ABORT` and makes no further calls.

A dishonest party is a :class:`HybridAdversary`: one step per round acting
on its transcript ``R`` and memory ``Q`` plus one white-box strategy per
call.  Transcript events written by the engine:

* ``("msg", (j, m))`` and ``("slot", (j, i))``: the honest party's
  round-``j`` message and announced slot;
* ``("call", c)``: marker right before call ``c``;
* ``("abort", j)``: the honest party aborted after round ``j``.

The adversary reports its message and slot as ``("amsg", (j, m))`` and
``("idx", (j, i))``; a missing ``idx`` event counts as agreement.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from ._json import jsonable
from .cq import TAU, CQState, Register, _finish, condition, rename, statistical_distance, trace_distance, transform
from .errors import (
    CertificationMissing,
    ClassicalityViolation,
    IndexDisagreement,
    NoConvergence,
    ParameterOutOfRange,
    StrategyProtocolMismatch,
)
from .functionality import Functionality, custom_functionality, eval_functionality, get_builtin
from .protocol import (
    AdversaryStrategy,
    ExecutionResult,
    ProtocolChannel,
    _run_steps,
    check_classical_hybrid_point,
    fourier_state,
    ideal_protocol,
    last,
    quantum_storing,
    run_call,
)
from .verify import (
    ARGMAX_TIE,
    SecurityReport,
    Witness,
    check_security_witness,
    search_security_witness,
    simulator_from_tables,
    simulator_tables,
)

ABORT = "abort"
SUPPORT_THRESHOLD = 1e-4

Stage = Callable[[Any, Any, Any], Mapping[tuple, float]]


@dataclass(frozen=True)
class HybridProtocol:
    name: str
    k: int
    alice: tuple
    bob: tuple
    alice_out: Callable[[Any, Any], Mapping[Any, float]]
    bob_out: Callable[[Any, Any], Mapping[Any, float]]
    honest_u: tuple
    honest_v: tuple
    schedule: tuple | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.alice) != self.k + 1 or len(self.bob) != self.k + 1:
            raise ParameterOutOfRange(f"{self.name}: need k + 1 = {self.k + 1} stages per party")
        if self.schedule is not None and len(self.schedule) != self.k:
            raise ParameterOutOfRange(f"{self.name}: schedule must list {self.k} slots")

    def stages(self, party: str) -> tuple:
        return self.alice if party == "alice" else self.bob

    def out(self, party: str):
        return self.alice_out if party == "alice" else self.bob_out

    def honest_inputs(self, party: str) -> tuple:
        return self.honest_u if party == "alice" else self.honest_v


Step = Callable[[tuple], Sequence[tuple]]


@dataclass(frozen=True)
class HybridAdversary:
    """Dishonest party of a hybrid protocol.

    ``rounds[j]`` is a transcript step run in round ``j`` after the honest
    party's message has been appended; ``calls[c]`` is the strategy used in
    call ``c + 1``; ``finish`` steps run at the very end.
    """

    name: str
    side: str
    rounds: tuple
    calls: tuple
    qdim: int = 1
    init: np.ndarray | None = field(default=None, repr=False)
    finish: tuple = ()

    def initial_state(self) -> np.ndarray:
        if self.init is not None:
            return np.asarray(self.init, dtype=complex)
        m = np.zeros((self.qdim, self.qdim), dtype=complex)
        m[0, 0] = 1.0
        return m

    def as_strategy(self) -> AdversaryStrategy:
        """The round steps wrapped as a strategy, for the shared step runner."""
        return AdversaryStrategy(self.name, lambda r: [], qdim=self.qdim, side=self.side)


def _other(side: str) -> str:
    return "alice" if side == "bob" else "bob"


# ---------------------------------------------------------------------------
# honest execution (purely classical)


def _call_kernel(backends: Mapping, i, ua, ub) -> Mapping[tuple, float]:
    b = backends[i]
    if isinstance(b, Functionality):
        return b.row(ua, ub)
    return b.honest(ua, ub)


def _run_honest(sigma: HybridProtocol, backends: Mapping, inputs: Mapping, on_disagreement: str) -> dict:
    live: dict[tuple, float] = {}
    done: dict[tuple, float] = {}
    for (u, v), p in inputs.items():
        if p > 0:
            key = (u, v, u, v, None, None, None, None)
            live[key] = live.get(key, 0.0) + p
    for j in range(sigma.k + 1):
        nxt: dict[tuple, float] = {}
        for (u, v, sa, sb, xa, xb, ia, ib), p in live.items():
            ra = sigma.alice[j](sa, xa, ib)
            rb = sigma.bob[j](sb, xb, ia)
            for ((sa2, ma, ca), pa), ((sb2, mb, cb), pb) in itertools.product(ra.items(), rb.items()):
                q = p * pa * pb
                if q <= 0:
                    continue
                if j == sigma.k:
                    key = (u, v, sa2, sb2, None, None, ma, mb)
                    nxt[key] = nxt.get(key, 0.0) + q
                    continue
                if ca[0] != cb[0]:
                    if on_disagreement == "raise":
                        raise IndexDisagreement(f"{sigma.name}: slots {ca[0]!r} and {cb[0]!r} before call {j + 1}")
                    key = (u, v, ABORT, ABORT)
                    done[key] = done.get(key, 0.0) + q
                    continue
                for (xa2, xb2), r in _call_kernel(backends, ca[0], ca[1], cb[1]).items():
                    key = (u, v, sa2, sb2, xa2, xb2, ma, mb)
                    nxt[key] = nxt.get(key, 0.0) + q * r
        live = nxt
    for (u, v, sa, sb, _, _, ma, mb), p in live.items():
        for (xa, pa), (yb, pb) in itertools.product(sigma.alice_out(sa, mb).items(), sigma.bob_out(sb, ma).items()):
            key = (u, v, xa, yb)
            done[key] = done.get(key, 0.0) + p * pa * pb
    return {k: p for k, p in done.items() if p > 0}


def _honest_result(sigma, backends, inputs, on_disagreement, label) -> ExecutionResult:
    dist = _run_honest(sigma, backends, inputs, on_disagreement)
    regs = [Register.classical(n, ()) for n in ("U", "V", "X", "Y")]
    state = _finish(regs, {k: np.array([[p]], dtype=complex) for k, p in dist.items()})
    return ExecutionResult(state, None, f"{sigma.name}[{label}]", meta={"gaps": []})


# ---------------------------------------------------------------------------
# dishonest execution


def _pad(state: CQState, d_prev: int, leak_to: int) -> CQState:
    """Embed the trailing leak factor of ``Q`` into ``leak_to`` dimensions."""
    d = state.qdim
    leak = d // d_prev
    if leak == leak_to:
        return state
    E = np.kron(np.eye(d_prev), np.eye(leak_to, leak))
    regs = [r for r in state.registers if r.is_classical] + [Register.quantum("Q", d_prev * leak_to)]
    return transform(state, regs, lambda k, m: [(k, E.astype(complex))])


def _z_prefix(c: int) -> Callable[[tuple], tuple]:
    marker = ("call", c)

    def z_of(r):
        for i in range(len(r) - 1, -1, -1):
            if r[i] == marker:
                return r[:i + 1]
        return r

    return z_of


def _subset(state: CQState, pred) -> CQState | None:
    blocks = {k: m for k, m in state.blocks.items() if pred(k)}
    if not blocks:
        return None
    return CQState(state.registers, blocks)


def _merge(parts: Sequence[CQState]) -> CQState:
    acc: dict = {}
    regs = None
    for st in parts:
        regs = regs or st.registers
        for k, m in st.blocks.items():
            acc[k] = acc[k] + m if k in acc else m
    return _finish([r if not r.is_classical else Register.classical(r.name, ()) for r in regs], acc)


@dataclass
class _Run:
    state: CQState
    gaps: list


def _run_dishonest(sigma: HybridProtocol, side: str, adversary: HybridAdversary, inputs: Mapping,
                   functionalities: Mapping, protocols: Mapping | None, plan: Sequence[str],
                   tau: float, strict: bool, on_disagreement: str) -> _Run:
    """Execute with ``plan[c]`` in {real, ideal, sim} deciding how call ``c + 1`` runs."""
    if adversary.side != side:
        raise StrategyProtocolMismatch(f"adversary {adversary.name} plays {adversary.side}, not {side}")
    if len(adversary.calls) != sigma.k:
        raise StrategyProtocolMismatch(f"adversary {adversary.name} has {len(adversary.calls)} call strategies, "
                                       f"protocol makes {sigma.k} calls")
    honest = _other(side)
    stages = sigma.stages(honest)
    names = ("Vw", "Yw")
    runner = adversary.as_strategy()
    init = adversary.initial_state()
    regs = [Register.classical("IN", ()), Register.classical("S", ()), Register.classical("R", ()),
            Register.quantum("Q", adversary.qdim)]
    blocks = {}
    for h, p in inputs.items():
        if p > 0:
            blocks[(h, ("live", h, None, None), ())] = p * init
    state = _finish(regs, blocks)
    gaps: list = []

    for j in range(sigma.k + 1):
        final = j == sigma.k
        # honest stage
        out_regs = [Register.classical("IN", ()), Register.classical("S", ())]
        if not final:
            out_regs.append(Register.classical("CI", ()))
        out_regs += [Register.classical("R", ()), Register.quantum("Q", state.qdim)]

        def stage(key, block, j=j, final=final):
            h, s, r = key
            if s[0] != "live":
                yield ((h, s, None, r) if not final else (h, s, r)), 1.0
                return
            _, cur, x, inbox = s
            for (s2, m, call), p in stages[j](cur, x, inbox).items():
                if final:
                    yield (h, ("live", s2, None, None), r + (("msg", (j, m)),)), p
                else:
                    i, u = call
                    yield (h, ("live", s2, i, None), u, r + (("msg", (j, m)), ("slot", (j, i)))), p

        state = transform(state, out_regs, stage)
        if j < len(adversary.rounds) and adversary.rounds[j] is not None:
            state = _run_steps(state, (adversary.rounds[j],), runner)

        if final:
            break

        # slot agreement
        def agree(key, block, j=j):
            h, s, u, r = key
            if s[0] == "live":
                idx = last(r, "idx")
                if idx is not None and idx[0] == j and idx[1] != s[2]:
                    if on_disagreement == "raise":
                        raise IndexDisagreement(f"{sigma.name}: slots {s[2]!r} and {idx[1]!r} before call {j + 1}")
                    yield (h, ("abort",), None, r + (("abort", j),)), 1.0
                    return
                yield (h, s, u, r + (("call", j + 1),)), 1.0
                return
            yield key, 1.0

        state = transform(state, state.registers, agree)
        ok, gap = check_classical_hybrid_point(state, ("IN", "S", "CI"), ("R",), ("Q",), tau)
        gaps.append(gap)
        if strict and not ok and plan[j] != "real":
            raise ClassicalityViolation(j + 1, gap)

        # the call, slot by slot
        d_prev = state.qdim
        slots = list(dict.fromkeys(k[1][2] for k in state.blocks if k[1][0] == "live"))
        outs = []
        for i in slots:
            sub = _subset(state, lambda k, i=i: k[1][0] == "live" and k[1][2] == i)
            strat = adversary.calls[j]
            mode = plan[j]
            if mode == "real":
                outs.append(run_call(sub, protocols[i], side, strat, "CI", "CO"))
            elif mode == "ideal":
                outs.append(run_call(sub, ideal_protocol(functionalities[i]), side, strat, "CI", "CO"))
            else:
                real = run_call(sub, protocols[i], side, strat, "CI", "CO")
                w = Witness(protocols[i].exported_witness(side), "exported")
                z_of = _z_prefix(j + 1)
                pvz, states = simulator_tables(real, w, names, z_of)
                sim = simulator_from_tables(f"sim[{i},{j + 1}]", side, pvz, states, z_of, sub.qdim, real.qdim)
                outs.append(run_call(sub, ideal_protocol(functionalities[i]), side, sim, "CI", "CO"))
        aborted = _subset(state, lambda k: k[1][0] != "live")
        if aborted is not None:
            regs_a = [r for r in aborted.registers if r.name != "R" and r.is_classical]
            regs_a += [Register.classical("CO", ()), Register.classical("R", ()), Register.quantum("Q", d_prev)]
            outs.append(transform(aborted, regs_a, lambda k, m: [(k[:3] + (None, k[3]), 1.0)]))
        leak_to = max(o.qdim // d_prev for o in outs)
        state = _merge([_pad(o, d_prev, leak_to) for o in outs])

        # fold the call output into the honest state
        def fold(key, block, j=j):
            h, s, u, x, r = key
            if s[0] == "live":
                am = last(r, "amsg")
                inbox = am[1] if am is not None and am[0] == j else None
                yield (h, ("live", s[1], x, inbox), r), 1.0
            else:
                yield (h, s, r), 1.0

        regs = [Register.classical("IN", ()), Register.classical("S", ()), Register.classical("R", ()),
                Register.quantum("Q", state.qdim)]
        state = transform(state, regs, fold)

    # outputs
    out = sigma.out(honest)
    k = sigma.k

    def output(key, block):
        h, s, r = key
        if s[0] != "live":
            yield (h, ABORT, r), 1.0
            return
        am = last(r, "amsg")
        inbox = am[1] if am is not None and am[0] == k else None
        for o, p in out(s[1], inbox).items():
            yield (h, o, r), p

    regs = [Register.classical("IN", ()), Register.classical("OUT", ()), Register.classical("R", ()),
            Register.quantum("Q", state.qdim)]
    state = transform(state, regs, output)
    if adversary.finish:
        state = _run_steps(state, adversary.finish, runner)
    hin, hout = ("U", "X") if side == "bob" else ("V", "Y")
    return _Run(rename(state, {"IN": hin, "OUT": hout}), gaps)


def _check_inputs(sigma: HybridProtocol, inputs, dishonest: str | None) -> dict:
    if inputs is None:
        if dishonest is None:
            cells = [(u, v) for u in sigma.honest_u for v in sigma.honest_v]
            return {c: 1.0 / len(cells) for c in cells}
        hs = sigma.honest_inputs(_other(dishonest))
        return {h: 1.0 / len(hs) for h in hs}
    return dict(inputs)


def run_hybrid(sigma: HybridProtocol, functionalities: Mapping[Any, Functionality], inputs=None,
               adversary: HybridAdversary | None = None, tau: float = TAU, strict: bool = True,
               on_disagreement: str = "abort") -> ExecutionResult:
    """Execute the hybrid protocol with ideal-life calls.

    With ``strict`` a classicality gap above ``tau`` at some call raises
    :class:`ClassicalityViolation`; the gaps are always listed in ``meta``.
    """
    side = adversary.side if adversary is not None else None
    inputs = _check_inputs(sigma, inputs, side)
    if adversary is None:
        return _honest_result(sigma, functionalities, inputs, on_disagreement, "hybrid")
    run = _run_dishonest(sigma, side, adversary, inputs, functionalities, None, ["ideal"] * sigma.k,
                         tau, strict, on_disagreement)
    return ExecutionResult(run.state, side, f"{sigma.name}[hybrid]", adversary.name, {"gaps": run.gaps})


def run_real(sigma: HybridProtocol, protocols: Mapping[Any, ProtocolChannel], inputs=None,
             adversary: HybridAdversary | None = None, tau: float = TAU,
             on_disagreement: str = "abort") -> ExecutionResult:
    """Execute the real instantiation; classicality gaps are reported, not enforced."""
    side = adversary.side if adversary is not None else None
    inputs = _check_inputs(sigma, inputs, side)
    if adversary is None:
        return _honest_result(sigma, protocols, inputs, on_disagreement, "real")
    run = _run_dishonest(sigma, side, adversary, inputs, None, protocols, ["real"] * sigma.k,
                         tau, False, on_disagreement)
    return ExecutionResult(run.state, side, f"{sigma.name}[real]", adversary.name, {"gaps": run.gaps})


def run_simulated(sigma: HybridProtocol, functionalities: Mapping, protocols: Mapping, adversary: HybridAdversary,
                  inputs=None, n_simulated: int | None = None, tau: float = TAU) -> ExecutionResult:
    """Hybrid world against the adversary with its first ``n_simulated`` calls replaced by simulators.

    The remaining calls run the real sub-protocols, so ``n_simulated = 0``
    is the real execution and ``n_simulated = k`` the hybrid execution with
    the synthesized adversary.
    """
    side = adversary.side
    inputs = _check_inputs(sigma, inputs, side)
    n = sigma.k if n_simulated is None else n_simulated
    plan = ["sim"] * n + ["real"] * (sigma.k - n)
    run = _run_dishonest(sigma, side, adversary, inputs, functionalities, protocols, plan, tau, False, "abort")
    return ExecutionResult(run.state, side, f"{sigma.name}[sim {n}/{sigma.k}]", adversary.name, {"gaps": run.gaps})


# ---------------------------------------------------------------------------
# composition


@dataclass
class CompositionReport:
    k: int
    eps: float
    delta_honest: float
    delta_dishonest: dict[str, float]
    step_deltas: dict[str, list]
    gaps: dict[str, list]
    tau: float = TAU

    @property
    def bound_honest(self) -> float:
        return self.k * self.eps

    @property
    def bound_dishonest(self) -> float:
        return 3 * self.k * self.eps

    @property
    def honest_ok(self) -> bool:
        return self.delta_honest <= self.bound_honest + self.tau

    def dishonest_ok(self, name: str) -> bool:
        return self.delta_dishonest[name] <= self.bound_dishonest + self.tau

    @property
    def classical_ok(self) -> bool:
        return all(g <= self.tau for gs in self.gaps.values() for g in gs)

    @property
    def passes(self) -> bool:
        return self.honest_ok and all(self.dishonest_ok(n) for n in self.delta_dishonest) and self.classical_ok

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "eps": jsonable(self.eps),
            "delta_honest": jsonable(self.delta_honest),
            "bound_honest": jsonable(self.bound_honest),
            "delta_dishonest": {n: jsonable(d) for n, d in self.delta_dishonest.items()},
            "bound_dishonest": jsonable(self.bound_dishonest),
            "step_deltas": {n: jsonable(v) for n, v in self.step_deltas.items()},
            "classicality_gaps": {n: jsonable(v) for n, v in self.gaps.items()},
            "pass": self.passes,
        }


def _certify(functionalities: Mapping, protocols: Mapping, eps: float, certified: Mapping | None) -> None:
    certified = dict(certified or {})
    for i, pi in protocols.items():
        if i not in functionalities:
            raise CertificationMissing(f"slot {i!r} has a protocol but no functionality")
        if pi.functionality.name != functionalities[i].name:
            raise CertificationMissing(f"slot {i!r}: protocol for {pi.functionality.name}, "
                                       f"functionality {functionalities[i].name}")
        if pi.name.startswith("ideal["):
            continue
        if i not in certified:
            raise CertificationMissing(f"slot {i!r}: protocol {pi.name} has no certificate")
        if certified[i] > eps + TAU:
            raise CertificationMissing(f"slot {i!r}: certified at {certified[i]:.4g} > {eps:.4g}")


def check_composition(sigma: HybridProtocol, functionalities: Mapping, protocols: Mapping, eps: float,
                      adversaries: Sequence[HybridAdversary] = (), inputs=None, dishonest_inputs=None,
                      certified: Mapping | None = None, tau: float = TAU) -> CompositionReport:
    """Measure the honest and dishonest composition distances.

    ``certified`` maps slots to the parameter at which the sub-protocol was
    certified by the verifier; ideal-life protocols need no certificate.
    For each adversary the hybrid adversary is built call by call from
    synthesized simulators and the distance of every intermediate world to
    the previous one is recorded in ``step_deltas``.
    """
    _certify(functionalities, protocols, eps, certified)
    hyb = run_hybrid(sigma, functionalities, inputs)
    real = run_real(sigma, protocols, inputs)
    delta_h = statistical_distance(hyb.output.weights(), real.output.weights())
    dd, steps, gaps = {}, {}, {}
    for adv in adversaries:
        ins = (dishonest_inputs or {}).get(adv.side)
        worlds = [run_simulated(sigma, functionalities, protocols, adv, ins, n, tau) for n in range(sigma.k + 1)]
        dd[adv.name] = trace_distance(worlds[0].output, worlds[-1].output)
        steps[adv.name] = [trace_distance(a.output, b.output) for a, b in zip(worlds, worlds[1:])]
        gaps[adv.name] = list(worlds[-1].meta["gaps"])
    return CompositionReport(sigma.k, eps, delta_h, dd, steps, gaps, tau)


def chain_corollary(outer_delta: float, inner_eps: float, k: int) -> float:
    """Security parameter of the instantiated protocol: ``delta + 3 k eps``."""
    if not (0.0 <= outer_delta <= 1.0 and 0.0 <= inner_eps <= 1.0) or k < 0:
        raise ParameterOutOfRange(f"need delta, eps in [0, 1] and k >= 0, got {(outer_delta, inner_eps, k)}")
    return outer_delta + 3 * k * inner_eps


def measure_hybrid_security(sigma: HybridProtocol, backends: Mapping, G: Functionality,
                            adversaries: Sequence[HybridAdversary] = (), real: bool = False,
                            witness: Callable[[str], Witness] | None = None, search: bool = True,
                            budget: float = 1e6, seed: int = 0, tau: float = TAU) -> dict[str, SecurityReport]:
    """Security of a hybrid protocol, run on ``backends``, as an implementation of ``G``.

    Correctness is taken over all point masses of the honest domains plus
    the uniform distribution.  For each adversary the witness is
    ``witness(side)`` when given; with ``search`` the witness search runs
    too, seeded with it, and the better witness is kept.
    """
    runner = run_real if real else run_hybrid
    cells = [(u, v) for u in sigma.honest_u for v in sigma.honest_v]
    family = [{c: 1.0} for c in cells] + [{c: 1.0 / len(cells) for c in cells}]
    worst, arg = 0.0, 0
    for i, P in enumerate(family):
        out = runner(sigma, backends, P).output.distribution(("U", "V", "X", "Y"))
        d = statistical_distance(out, eval_functionality(G, P))
        if d > worst + ARGMAX_TIE:
            worst, arg = d, i
    reports = {"correctness": SecurityReport("correctness", {"correctness": worst},
                                             extra={"worst_input": arg, "family_size": len(family)})}
    for adv in adversaries:
        res = runner(sigma, backends, adversary=adv, tau=tau)
        w = witness(adv.side) if witness is not None else None
        if search:
            _, rep = search_security_witness(res, G, adv.side, budget=budget, seed=seed, seed_witness=w)
        elif w is not None:
            rep = check_security_witness(res, G, w, adv.side)
        else:
            raise ParameterOutOfRange("need a witness or the witness search")
        reports[adv.name] = rep
    return reports


# ---------------------------------------------------------------------------
# worst-case input distribution


@dataclass
class FixedPointResult:
    distribution: dict
    profile: dict
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    @property
    def support(self) -> list:
        return [u for u, p in self.distribution.items() if p > SUPPORT_THRESHOLD]

    @property
    def spread(self) -> float:
        vals = [self.profile[u] for u in self.support]
        return max(vals) - min(vals) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "distribution": [[jsonable(u), jsonable(p)] for u, p in self.distribution.items()],
            "profile": [[jsonable(u), jsonable(e)] for u, e in self.profile.items()],
            "iterations": self.iterations,
            "converged": self.converged,
            "spread": jsonable(self.spread),
        }


def worst_input_fixed_point(profile: Callable[[dict], Mapping], alphabet: Sequence, iterations: int = 200,
                            init: Mapping | None = None, tol: float = 1e-6, damping: float = 0.5,
                            raise_on_cap: bool = False) -> FixedPointResult:
    """Iterate ``P(u) <- (1 + eps_u(P)) P(u) / (1 + sum_u P(u) eps_u(P))``.

    When the L1 step grows compared with the previous one the update is
    damped by ``damping``.  Stops once a step moves less than ``tol``.
    """
    if iterations < 1:
        raise ParameterOutOfRange("need at least one iteration")
    alphabet = list(alphabet)
    P = dict(init) if init is not None else {u: 1.0 / len(alphabet) for u in alphabet}
    prev_step = None
    history = []
    eps = dict(profile(P))
    for t in range(1, iterations + 1):
        norm = 1.0 + sum(P[u] * eps[u] for u in alphabet)
        target = {u: (1.0 + eps[u]) * P[u] / norm for u in alphabet}
        step = sum(abs(target[u] - P[u]) for u in alphabet)
        if prev_step is not None and step > prev_step:
            target = {u: (1 - damping) * P[u] + damping * target[u] for u in alphabet}
            step = sum(abs(target[u] - P[u]) for u in alphabet)
        P = target
        prev_step = step
        history.append(step)
        eps = dict(profile(P))
        if step <= tol:
            return FixedPointResult(P, eps, t, True, history)
    res = FixedPointResult(P, eps, iterations, False, history)
    if raise_on_cap:
        raise NoConvergence(f"no fixed point after {iterations} iterations", res)
    return res


def static_profile(values: Mapping) -> Callable[[dict], dict]:
    """Input-independent profile, for tests of the iteration itself."""
    values = dict(values)
    return lambda P: values


def simulation_profile(sigma: HybridProtocol, functionalities: Mapping, protocols: Mapping,
                       adversary: HybridAdversary, tau: float = TAU) -> Callable[[dict], dict]:
    """``eps_u(P)``: distance between real and simulated worlds given honest input ``u``.

    The simulators are synthesized for ``P``; inputs outside its support get
    ``eps_u = 0`` as their mass stays zero under the iteration.
    """
    hin = "U" if adversary.side == "bob" else "V"

    def profile(P):
        P = {u: p for u, p in P.items()}
        real = run_simulated(sigma, functionalities, protocols, adversary, P, 0, tau).output
        sim = run_simulated(sigma, functionalities, protocols, adversary, P, sigma.k, tau).output
        out = {}
        for u, p in P.items():
            if p <= 1e-15:
                out[u] = 0.0
                continue
            _, a = condition(real, **{hin: u})
            _, b = condition(sim, **{hin: u})
            out[u] = trace_distance(a, b)
        return out

    return profile


# ---------------------------------------------------------------------------
# builtin hybrid protocols


def _point(x) -> dict:
    return {x: 1.0}


def equality_test(ell: int = 1, slot: str = "rot") -> HybridProtocol:
    """Equality of two input bits from two sender-randomized OT calls.

    Bob uses his bit as choice in both calls; Alice finally sends her
    strings selected by her bit and Bob accepts iff they match his.
    A mismatch is accepted with probability ``2^(-2 ell)``.
    """

    def a0(s, x, inbox):
        return _point((s, None, (slot, None)))

    def a1(s, x, inbox):
        return _point(((s, x), None, (slot, None)))

    def a2(s, x, inbox):
        a, x1 = s
        return _point((None, (x1[a], x[a]), None))

    def b0(s, x, inbox):
        return _point((s, None, (slot, s)))

    def b1(s, x, inbox):
        return _point(((s, x), None, (slot, s)))

    def b2(s, x, inbox):
        return _point(((s[1], x), None, None))

    def a_out(s, inbox):
        return _point(None)

    def b_out(s, inbox):
        return _point(int(inbox == s))

    return HybridProtocol(f"equality_test[{ell}]", 2, (a0, a1, a2), (b0, b1, b2), a_out, b_out,
                          (0, 1), (0, 1), (slot, slot), {"ell": ell})


def pass_through(F: Functionality, slot: str = "g") -> HybridProtocol:
    """One call to ``F`` on the parties' inputs; outputs are the replies."""

    def stage0(s, x, inbox):
        return _point((None, None, (slot, s)))

    def stage1(s, x, inbox):
        return _point((x, None, None))

    def out(s, inbox):
        return _point(s)

    return HybridProtocol(f"pass_through[{F.name}]", 1, (stage0, stage1), (stage0, stage1), out, out,
                          F.honest_u, F.honest_v, (slot,))


def rot_from_ot(ell: int = 1, slot: str = "ot") -> HybridProtocol:
    """Sender-randomized OT from one OT call on uniformly chosen strings."""
    S = range(2 ** ell)
    q = 1.0 / (2 ** (2 * ell))

    def a0(s, x, inbox):
        return {((s0, s1), None, (slot, (s0, s1))): q for s0 in S for s1 in S}

    def a1(s, x, inbox):
        return _point((s, None, None))

    def b0(s, x, inbox):
        return _point((None, None, (slot, s)))

    def b1(s, x, inbox):
        return _point((x, None, None))

    def out(s, inbox):
        return _point(s)

    return HybridProtocol(f"rot_from_ot[{ell}]", 1, (a0, a1), (b0, b1), out, out, (None,), (0, 1),
                          (slot,), {"ell": ell})


def f_eq(ell: int = 1) -> Functionality:
    """Noisy bit equality as achieved by :func:`equality_test`.

    Bob learns ``[a == b]`` except that a mismatch reads as a match with
    probability ``2^(-2 ell)``.  A dishonest Bob may instead ask for ``a``
    (input ``"?"``); a dishonest Alice may submit the set of Bob inputs to
    accept, as a sorted tuple.
    """
    fa = 2.0 ** (-2 * ell)
    sets = ((), (0,), (1,), (0, 1))
    ext_u = (0, 1) + sets
    ext_v = (0, 1, "?")
    rows = {}
    for u in ext_u:
        for v in ext_v:
            if isinstance(u, tuple):
                rows[(u, v)] = {(None, int(v in u)): 1.0} if v != "?" else {(None, None): 1.0}
            elif v == "?":
                rows[(u, v)] = {(None, u): 1.0}
            elif u == v:
                rows[(u, v)] = {(None, 1): 1.0}
            else:
                rows[(u, v)] = {(None, 1): fa, (None, 0): 1.0 - fa}
    return custom_functionality(f"f_eq[{ell}]", (0, 1), (0, 1), ext_u, ext_v, rows)


def inline(outer: HybridProtocol, slot, inner: HybridProtocol) -> HybridProtocol:
    """Replace every call to ``slot`` in ``outer`` by a run of ``inner``.

    ``outer`` needs a fixed schedule and ``inner`` must not exchange
    messages.  Outer messages are held until the next outer round.  Combined
    stage states are triples ``(outer state, inner state, held message)``.
    """
    if outer.schedule is None:
        raise ParameterOutOfRange(f"{outer.name}: inlining needs a fixed call schedule")
    # one entry per combined round: (finish inner run, outer round, inner round)
    plan = []
    schedule = []
    finish = False
    for j in range(outer.k + 1):
        call = outer.schedule[j] if j < outer.k else None
        plan.append((finish, j, 0 if call == slot else None))
        finish = False
        if call == slot:
            schedule.append(inner.schedule[0] if inner.schedule else None)
            for t in range(1, inner.k):
                plan.append((False, None, t))
                schedule.append(inner.schedule[t] if inner.schedule else None)
            finish = True
        elif call is not None:
            schedule.append(call)

    def quiet(m):
        if m is not None:
            raise ParameterOutOfRange(f"{inner.name}: inlined protocols may not send messages")

    def build(party):
        o_st, i_st, i_out = outer.stages(party), inner.stages(party), inner.out(party)

        def make(t, fin, oj, ij):
            def stage(s, x, inbox):
                so, si, held = (s, None, None) if t == 0 else s
                if inbox is not None:
                    held = inbox
                xs = {x: 1.0}
                if fin:
                    xs = {}
                    for (si2, m, _), p in i_st[inner.k](si, x, None).items():
                        quiet(m)
                        for xo, q in i_out(si2, None).items():
                            xs[xo] = xs.get(xo, 0.0) + p * q
                out: dict = {}

                def put(key, p):
                    out[key] = out.get(key, 0.0) + p

                for xo, px in xs.items():
                    if oj is None:
                        for (si2, m, ci), p in i_st[ij](si, x, None).items():
                            quiet(m)
                            put(((so, si2, held), None, ci), px * p)
                        continue
                    for (so2, m, call), po in o_st[oj](so, xo, held).items():
                        if ij == 0:
                            for (si2, mi, ci), p in i_st[0](call[1], None, None).items():
                                quiet(mi)
                                put(((so2, si2, None), m, ci), px * po * p)
                        else:
                            put(((so2, None, None), m, call), px * po)
                return out

            return stage

        def out_fn(s, inbox):
            return outer.out(party)(s[0], inbox if inbox is not None else s[2])

        return tuple(make(t, *p) for t, p in enumerate(plan)), out_fn

    a_st, a_out = build("alice")
    b_st, b_out = build("bob")
    return HybridProtocol(f"{outer.name}<{slot}:{inner.name}>", len(schedule), a_st, b_st, a_out, b_out,
                          outer.honest_u, outer.honest_v, tuple(schedule),
                          {"outer": outer.name, "inner": inner.name})


# ---------------------------------------------------------------------------
# adversary templates


def classical_adversary(name: str, side: str, stages: Sequence[Stage], k: int, s0=None,
                        call_strategies: Sequence[AdversaryStrategy] | None = None,
                        declare_slot: bool = False) -> HybridAdversary:
    """Adversary whose classical behaviour is given by stage maps over its own view.

    Round ``j`` runs ``stages[j](s, x, inbox)`` on the state kept in
    ``("st", s)`` events, the last reply ``x`` and the honest party's
    message of round ``j - 1``; the chosen call input is stored as
    ``("u", (j, u))`` and sent by the default call strategy.
    """

    def round_step(j):
        def step(r):
            s = last(r, "st", s0)
            x = last(r, "recv") if j > 0 else None
            inbox = None
            for t, v in reversed(r):
                if t == "msg" and v[0] == j - 1:
                    inbox = v[1]
                    break
            out = []
            for (s2, m, call), p in stages[j](s, x, inbox).items():
                ev = (("st", s2), ("amsg", (j, m)))
                if call is not None:
                    ev += (("u", (j, call[1])),)
                    if declare_slot:
                        ev += (("idx", (j, call[0])),)
                out.append((r + ev, p))
            return out

        return step

    def send_u(r):
        return [(last(r, "u")[1], 1.0)]

    calls = tuple(call_strategies) if call_strategies is not None else tuple(
        AdversaryStrategy(f"{name}/call{c + 1}", send_u, side=side) for c in range(k))
    return HybridAdversary(name, side, tuple(round_step(j) for j in range(k + 1)), calls)


def honest_behaving(sigma: HybridProtocol, side: str) -> HybridAdversary:
    """Follows the protocol exactly; its input is a fixed honest value."""
    s0 = sigma.honest_inputs(side)[0]
    return classical_adversary(f"honest-behaving[{side}]", side, sigma.stages(side), sigma.k, s0)


def with_quantum_memory(adv: HybridAdversary, reply_alphabets: Sequence[Sequence], dim: int = 2) -> HybridAdversary:
    """Every call strategy also phase-encodes its reply into one shared ``dim``-level memory."""
    calls = tuple(quantum_storing(s, a, dim) for s, a in zip(adv.calls, reply_alphabets))
    return HybridAdversary(adv.name + "+qmem", adv.side, adv.rounds, calls, dim, fourier_state(dim), adv.finish)


def equality_adversaries(ell: int = 1) -> list[HybridAdversary]:
    """Shipped adversaries against :func:`equality_test` over sender-randomized OT."""
    sigma = equality_test(ell)
    S = list(range(2 ** ell))
    advs = [honest_behaving(sigma, "bob"), honest_behaving(sigma, "alice")]

    # Bob splits his choices over the two calls and stores the replies quantumly
    def b0(s, x, inbox):
        return _point((None, None, ("rot", 0)))

    def b1(s, x, inbox):
        return _point((x, None, ("rot", 1)))

    def b2(s, x, inbox):
        return _point(((s, x), None, None))

    split = classical_adversary("split-choice[bob]", "bob", (b0, b1, b2), 2)
    advs.append(with_quantum_memory(split, [S, S], 2))

    # Alice picks both pairs of strings herself and answers with the first strings
    pairs = [(a, b) for a in S for b in S]
    q = 1.0 / len(pairs)

    def a0(s, x, inbox):
        return {(p, None, ("rot", p)): q for p in pairs}

    def a1(s, x, inbox):
        return {((s, p), None, ("rot", p)): q for p in pairs}

    def a2(s, x, inbox):
        p1, p2 = s
        return _point((None, (p1[0], p2[0]), None))

    advs.append(classical_adversary("chosen-strings[alice]", "alice", (a0, a1, a2), 2))
    return advs


def equality_witness(side: str) -> Witness:
    """Witness for :func:`f_eq` against the shipped adversaries.

    A Bob who used one choice bit in both calls is matched with that bit and
    his acceptance decision; any other Bob is matched with the revealing
    input, whose reply is Alice's bit.  Alice is matched with the set of
    choices her final message would make Bob accept.
    """
    if side == "bob":
        def fn(a):
            r = a["R"]
            sends = [v for t, v in r if t == "send"]
            recvs = tuple(v for t, v in r if t == "recv")
            msg = next((v[1] for t, v in r if t == "msg" and v[0] == 2), None)
            if len(set(sends)) == 1 and sends[0] in (0, 1):
                return sends[0], int(msg == recvs)
            return "?", a["U"]

        return Witness(fn, "choice bit or reveal")

    def fn(a):
        r = a["R"]
        sends = [v for t, v in r if t == "send"]
        recvs = [v for t, v in r if t == "recv"]
        # an honest-looking sender gets her strings back from the call
        pairs = [s if s is not None else q for s, q in zip(sends, recvs)]
        am = last(r, "amsg")
        msg = am[1] if am is not None else None
        return tuple(c for c in (0, 1) if msg == (pairs[0][c], pairs[1][c])), None

    return Witness(fn, "accepted choices")


def rot_bundle(ell: int = 1) -> dict:
    return {"rot": get_builtin("f_12rot", ell=ell)}
