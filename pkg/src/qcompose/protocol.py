"""Two-party protocols as channels, white-box adversaries and their execution.

A protocol is given by its honest input/output kernel and, for each side, by
how it serves a dishonest party: on honest input ``h`` and adversary message
``m`` it returns branches ``((honest_output, reply), op)`` where ``op`` is a
weight or a Kraus operator on the adversary's quantum register ``Q``.  A
protocol may enlarge ``Q`` by a leak factor; such Kraus operators map
``d`` to ``d * leak`` dimensions.

Canonical register names of execution outputs:

* honest run: ``U, V, X, Y``;
* dishonest Bob: ``U, X, R, Q``;
* dishonest Alice: ``V, Y, R, Q``.

``R`` is the adversary's classical transcript, a tuple of ``(tag, value)``
events; ``("send", m)`` and ``("recv", c)`` record the interaction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .cq import (
    TAU,
    CQState,
    Register,
    _finish,
    make_cq_state,
    markov_gap,
    transform,
)
from .errors import (
    BothSidesDishonest,
    DomainViolation,
    KrausNotTracePreserving,
    ParameterOutOfRange,
    StrategyProtocolMismatch,
)
from .functionality import Functionality

SIDES = ("alice", "bob")

Op = Any  # float weight or complex Kraus matrix


# ---------------------------------------------------------------------------
# transcripts and witnesses


def last(r: tuple, tag: str, default=None):
    """Value of the most recent ``tag`` event in transcript ``r``."""
    for t, v in reversed(r):
        if t == tag:
            return v
    return default


def transcript_witness(assign: Mapping[str, Any]) -> tuple:
    """The adversary's message to the box and the box's reply, read off ``R``."""
    r = assign["R"]
    return last(r, "send"), last(r, "recv")


# ---------------------------------------------------------------------------
# adversaries

Step = Callable[[tuple], Sequence[tuple]]


@dataclass(frozen=True)
class AdversaryStrategy:
    """White-box dishonest party.

    ``prepare`` steps run before the interaction, ``send`` chooses the message
    (as branches ``(m, op)``), ``finish`` steps run after the reply has been
    appended.  Steps map a transcript to branches ``(new_transcript, op)``;
    they may only append unless ``rewrites`` is set.  A strategy whose last
    ``finish`` step changes the size of ``Q`` declares the new size in
    ``out_qdim``.
    """

    name: str
    send: Callable[[tuple], Sequence[tuple]]
    prepare: tuple = ()
    finish: tuple = ()
    qdim: int = 1
    init: np.ndarray | None = field(default=None, repr=False)
    tags: frozenset = frozenset()
    side: str | None = None
    rewrites: bool = False
    out_qdim: int | None = None

    def initial_state(self) -> np.ndarray:
        if self.init is not None:
            return np.asarray(self.init, dtype=complex)
        m = np.zeros((self.qdim, self.qdim), dtype=complex)
        m[0, 0] = 1.0
        return m

    def hardwire(self, z, prepared: np.ndarray | None = None) -> "AdversaryStrategy":
        """Strategy with classical input ``z`` fixed and ``prepared`` as initial state."""
        tagged = (("in", z),)

        def seed(r):
            return [(r + tagged, 1.0)]

        return AdversaryStrategy(
            f"{self.name}|z={z!r}", self.send, (seed,) + tuple(self.prepare), self.finish,
            self.qdim, prepared if prepared is not None else self.init, self.tags, self.side,
            self.rewrites, self.out_qdim,
        )


def fixed_input(value, name: str | None = None, side: str | None = None, qdim: int = 1,
                finish: tuple = (), tags=()) -> AdversaryStrategy:
    return AdversaryStrategy(name or f"fixed({value!r})", lambda r: [(value, 1.0)],
                             finish=finish, qdim=qdim, tags=frozenset(tags), side=side)


def random_input(dist: Mapping, name: str = "random", side: str | None = None,
                 qdim: int = 1, finish: tuple = (), tags=()) -> AdversaryStrategy:
    items = [(m, float(p)) for m, p in dist.items() if p > 0]
    return AdversaryStrategy(name, lambda r: items, finish=finish, qdim=qdim,
                             tags=frozenset(tags), side=side)


def uniform_input(values: Sequence, **kw) -> AdversaryStrategy:
    values = list(values)
    return random_input({v: 1.0 / len(values) for v in values}, **kw)


def coin_step(label: str, dist: Mapping) -> Step:
    items = [(v, float(p)) for v, p in dist.items() if p > 0]
    return lambda r: [(r + ((label, v),), p) for v, p in items]


def unitary_step(fn: Callable[[tuple], np.ndarray]) -> Step:
    return lambda r: [(r, np.asarray(fn(r), dtype=complex))]


def measure_step(label: str, kraus: Sequence[np.ndarray]) -> Step:
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    return lambda r: [(r + ((label, i),), k) for i, k in enumerate(ks)]


def shift_unitary(dim: int, k: int) -> np.ndarray:
    return np.roll(np.eye(dim, dtype=complex), k % dim, axis=0)


def phase_unitary(dim: int, k: int) -> np.ndarray:
    w = np.exp(2j * np.pi * k / dim)
    return np.diag(w ** np.arange(dim))


def encode_reply_step(alphabet: Sequence, dim: int = 2) -> Step:
    """Rotate ``Q`` (prepared in the Fourier basis) by the phase indexed by the reply."""
    index = {a: i for i, a in enumerate(alphabet)}
    return unitary_step(lambda r: phase_unitary(dim, index.get(last(r, "recv"), 0)))


def fourier_state(dim: int) -> np.ndarray:
    v = np.ones(dim, dtype=complex) / np.sqrt(dim)
    return np.outer(v, v.conj())


def quantum_storing(strategy: AdversaryStrategy, reply_alphabet: Sequence, dim: int = 2) -> AdversaryStrategy:
    """Variant that also keeps a phase-encoded copy of the reply in a ``dim``-level memory."""
    return AdversaryStrategy(
        strategy.name + "+qmem", strategy.send, strategy.prepare,
        tuple(strategy.finish) + (encode_reply_step(reply_alphabet, dim),),
        dim, fourier_state(dim), strategy.tags | {"quantum-memory"}, strategy.side,
    )


# ---------------------------------------------------------------------------
# protocols


@dataclass(frozen=True)
class ProtocolChannel:
    name: str
    functionality: Functionality
    honest: Callable[[Any, Any], Mapping[tuple, float]]
    serve_bob: Callable[[Any, Any, int], Sequence[tuple]]
    serve_alice: Callable[[Any, Any, int], Sequence[tuple]]
    bob_leak: int = 1
    alice_leak: int = 1
    export_bob: Callable[[Mapping], tuple] = transcript_witness
    export_alice: Callable[[Mapping], tuple] = transcript_witness
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def honest_u(self):
        return self.functionality.honest_u

    @property
    def honest_v(self):
        return self.functionality.honest_v

    def leak(self, side: str) -> int:
        return self.bob_leak if side == "bob" else self.alice_leak

    def serve(self, side: str, h, m, qdim: int):
        return self.serve_bob(h, m, qdim) if side == "bob" else self.serve_alice(h, m, qdim)

    def exported_witness(self, side: str):
        return self.export_bob if side == "bob" else self.export_alice


def _weights(row: Mapping[tuple, float]) -> list:
    return [(xy, p) for xy, p in row.items() if p > 0]


def ideal_protocol(F: Functionality) -> ProtocolChannel:
    """Ideal-life protocol: inputs are forwarded to ``F`` and replies output."""

    def honest(u, v):
        return F.row(u, v)

    def serve_bob(u, m, qdim):
        return _weights(F.row(u, m))

    def serve_alice(v, m, qdim):
        return [((y, x), p) for (x, y), p in F.row(m, v).items() if p > 0]

    return ProtocolChannel(f"ideal[{F.name}]", F, honest, serve_bob, serve_alice)


def _cyclic(alphabet: Sequence, value):
    i = alphabet.index(value)
    return alphabet[(i + 1) % len(alphabet)]


def _support(F: Functionality, side: str) -> tuple[tuple, tuple]:
    """Honest party's output values and the adversary's reply values when ``side`` cheats."""
    if side == "bob":
        rows = [row for (u, v), row in F.table.items() if u in F.honest_u]
        return (tuple(dict.fromkeys(x for row in rows for x, _ in row)),
                tuple(dict.fromkeys(y for row in rows for _, y in row)))
    rows = [row for (u, v), row in F.table.items() if v in F.honest_v]
    return (tuple(dict.fromkeys(y for row in rows for _, y in row)),
            tuple(dict.fromkeys(x for row in rows for x, _ in row)))


def make_noisy_ideal(F: Functionality, eps: float, noise: str = "output-flip") -> ProtocolChannel:
    """Ideal-life protocol perturbed with strength ``eps``.

    ``output-flip``: with probability ``eps`` the honest party's output is
    replaced by its cyclic successor in the honest support (the adversary's
    reply instead when that support is a single value).

    ``depolarize-adversary-view``: the adversary additionally receives a
    register in state ``(1 - eps) I/d + eps |i><i|`` where ``i`` indexes the
    honest input (or the honest output when the input is trivial).  For
    ``eps = 0`` no register is added.
    """
    if not 0.0 <= eps <= 1.0:
        raise ParameterOutOfRange(f"noise strength {eps!r} outside [0, 1]")
    ideal = ideal_protocol(F)
    if noise == "output-flip":
        hx, hy = F.honest_x_alphabet(), F.honest_y_alphabet()

        def honest(u, v):
            out: dict[tuple, float] = {}
            for (x, y), p in F.row(u, v).items():
                out[(x, y)] = out.get((x, y), 0.0) + (1 - eps) * p
                flipped = (x, _cyclic(hy, y)) if len(hy) > 1 else (_cyclic(hx, x), y) if len(hx) > 1 else (x, y)
                out[flipped] = out.get(flipped, 0.0) + eps * p
            return out

        def flipper(side):
            own, reply = _support(F, side)

            def serve(h, m, qdim):
                base = ideal.serve(side, h, m, qdim)
                out = []
                for (o, c), p in base:
                    out.append(((o, c), (1 - eps) * p))
                    if len(own) > 1:
                        out.append(((_cyclic(own, o), c), eps * p))
                    elif len(reply) > 1:
                        out.append(((o, _cyclic(reply, c)), eps * p))
                    else:
                        out.append(((o, c), eps * p))
                return out

            return serve

        return ProtocolChannel(f"noisy[{F.name},{noise},{eps:g}]", F, honest, flipper("bob"),
                               flipper("alice"), params={"eps": eps, "noise": noise})

    if noise == "depolarize-adversary-view":
        if eps == 0:
            return ProtocolChannel(f"noisy[{F.name},{noise},0]", F, ideal.honest, ideal.serve_bob,
                                   ideal.serve_alice, params={"eps": 0.0, "noise": noise})

        def leaky(side):
            hin = F.honest_u if side == "bob" else F.honest_v
            own, _ = _support(F, side)
            use_input = len(hin) > 1
            alphabet = hin if use_input else own
            d = len(alphabet)
            probs = [(1 - eps) / d] * d

            def serve(h, m, qdim):
                out = []
                eye = np.eye(qdim, dtype=complex)
                for (o, c), p in ideal.serve(side, h, m, qdim):
                    idx = alphabet.index(h if use_input else o)
                    for j in range(d):
                        q = probs[j] + (eps if j == idx else 0.0)
                        if q <= 0:
                            continue
                        ket = np.zeros((d, 1), dtype=complex)
                        ket[j, 0] = np.sqrt(p * q)
                        out.append(((o, c), np.kron(eye, ket)))
                return out

            return serve, d

        sb, db = leaky("bob")
        sa, da = leaky("alice")
        return ProtocolChannel(f"noisy[{F.name},{noise},{eps:g}]", F, ideal.honest, sb, sa,
                               bob_leak=db, alice_leak=da, params={"eps": eps, "noise": noise})
    raise ParameterOutOfRange(f"unknown noise model {noise!r}")


def make_leaky_ot(mode: str, ell: int = 1) -> ProtocolChannel:
    """1-2 OT that deliberately breaks one side's security."""
    from .functionality import f_12ot

    F = f_12ot(ell)
    ideal = ideal_protocol(F)
    if mode == "reveal-C-to-Alice":
        def serve_alice(c, m, qdim):
            return [((y, c), p) for (y, _), p in ideal.serve_alice(c, m, qdim)]

        return ProtocolChannel(f"leaky_ot[{mode}]", F, ideal.honest, ideal.serve_bob, serve_alice,
                               params={"mode": mode, "ell": ell})
    if mode == "reveal-both-strings-to-Bob":
        def serve_bob(u, m, qdim):
            F.row(u, m)
            return [((None, u), 1.0)]

        def export(assign):
            r = assign["R"]
            c = last(r, "send")
            return c, last(r, "recv")[c]

        return ProtocolChannel(f"leaky_ot[{mode}]", F, ideal.honest, serve_bob, ideal.serve_alice,
                               export_bob=export, params={"mode": mode, "ell": ell})
    raise ParameterOutOfRange(f"unknown leak mode {mode!r}")


def cleartext_id(n_passwords: int = 4) -> ProtocolChannel:
    """Identification toy in which the server learns the user's password in the clear."""
    from .functionality import f_id

    F = f_id(n_passwords)
    ideal = ideal_protocol(F)

    def serve_bob(w_a, m, qdim):
        F.row(w_a, m)
        return [((None, w_a), 1.0)]

    def export(assign):
        w = last(assign["R"], "recv")
        return w, 1

    return ProtocolChannel("cleartext_id", F, ideal.honest, serve_bob, ideal.serve_alice,
                           export_bob=export, params={"n_passwords": n_passwords})


def kraus_protocol(F: Functionality, bob_kraus: Mapping | None = None,
                   alice_kraus: Mapping | None = None, name: str = "kraus") -> ProtocolChannel:
    """Ideal-life protocol whose dishonest side also suffers a channel on ``Q``.

    ``bob_kraus[u]`` (resp. ``alice_kraus[v]``) is a Kraus list applied to the
    adversary's register for honest input ``u`` (resp. ``v``); missing inputs
    leave ``Q`` untouched.
    """
    ideal = ideal_protocol(F)
    bob_kraus = {k: [np.asarray(m, dtype=complex) for m in v] for k, v in (bob_kraus or {}).items()}
    alice_kraus = {k: [np.asarray(m, dtype=complex) for m in v] for k, v in (alice_kraus or {}).items()}

    def wrap(side, table):
        def serve(h, m, qdim):
            ks = table.get(h)
            base = ideal.serve(side, h, m, qdim)
            if not ks:
                return base
            out = []
            for oc, p in base:
                for k in ks:
                    out.append((oc, np.sqrt(p) * k))
            return out

        return serve

    return ProtocolChannel(name, F, ideal.honest, wrap("bob", bob_kraus), wrap("alice", alice_kraus))


def random_kraus_pair(rng: np.random.Generator, dim: int) -> list[np.ndarray]:
    """Two Kraus operators from a random isometry ``C^dim -> C^(2 dim)``."""
    g = rng.normal(size=(2 * dim, dim)) + 1j * rng.normal(size=(2 * dim, dim))
    q, _ = np.linalg.qr(g)
    return [q[:dim], q[dim:]]


def bit_functionality() -> Functionality:
    """One classical bit from Alice, handed back to her; Bob gets nothing."""
    from .functionality import custom_functionality

    rows = {(u, None): {(u, None): 1.0} for u in (0, 1)}
    return custom_functionality("bit", (0, 1), (None,), (0, 1), (None,), rows)


def random_kraus_protocol(seed: int, dim: int = 2) -> ProtocolChannel:
    rng = np.random.default_rng(seed)
    F = bit_functionality()
    return kraus_protocol(F, bob_kraus={u: random_kraus_pair(rng, dim) for u in (0, 1)},
                          name=f"random_kraus[{seed}]")


# ---------------------------------------------------------------------------
# execution


@dataclass(frozen=True)
class ExecutionResult:
    output: CQState
    dishonest: str | None
    protocol: str
    strategy: str | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def honest_in(self) -> str:
        return {"bob": "U", "alice": "V"}.get(self.dishonest, "U")

    @property
    def honest_out(self) -> str:
        return {"bob": "X", "alice": "Y"}.get(self.dishonest, "X")


def _check_tp(ops: Sequence, qin: int, what: str) -> None:
    acc = np.zeros((qin, qin), dtype=complex)
    for op in ops:
        if isinstance(op, np.ndarray):
            acc += op.conj().T @ op
        else:
            acc += op * np.eye(qin)
    if np.abs(acc - np.eye(qin)).max() > 1e-9:
        raise KrausNotTracePreserving(f"{what}: sum K^dag K deviates from identity")


def _lift(op, qin: int) -> Any:
    """Lift a strategy operator defined on the strategy's own memory to ``qin`` dims."""
    if not isinstance(op, np.ndarray):
        return op
    if op.shape[1] == qin:
        return op
    if qin % op.shape[1] == 0:
        return np.kron(op, np.eye(qin // op.shape[1]))
    raise StrategyProtocolMismatch(f"operator of shape {op.shape} on a {qin}-dim register")


def _run_steps(state: CQState, steps, strategy: AdversaryStrategy, qout: int | None = None) -> CQState:
    rpos = state.cindex("R")
    qin = state.qdim
    for step in steps:
        regs = state.registers
        if qout is not None and qout != qin:
            regs = [r for r in regs if r.is_classical] + [Register.quantum("Q", qout)]
        checked: set = set()

        def fn(key, block, step=step, checked=checked):
            r = key[rpos]
            branches = [(nr, _lift(op, qin)) for nr, op in step(r)]
            if r not in checked:
                checked.add(r)
                _check_tp([op for _, op in branches], qin, f"strategy {strategy.name}")
                if not strategy.rewrites:
                    for nr, _ in branches:
                        if nr[:len(r)] != r:
                            raise StrategyProtocolMismatch(f"strategy {strategy.name} rewrote its transcript")
            for nr, op in branches:
                yield key[:rpos] + (nr,) + key[rpos + 1:], op

        state = transform(state, regs, fn)
        qin = state.qdim
    return state


def _to_state(inputs, name: str) -> CQState:
    if isinstance(inputs, CQState):
        if not inputs.has(name):
            raise DomainViolation(f"input state lacks register {name!r}")
        return inputs
    dist = {}
    for k, p in inputs.items():
        dist[k] = dist.get(k, 0.0) + p
    reg = Register.classical(name, list(dist))
    return make_cq_state([reg], {(k,): np.array([[p]]) for k, p in dist.items() if p > 0})


def _execute_honest(pi: ProtocolChannel, inputs) -> CQState:
    dist: dict[tuple, float] = {}
    for (u, v), p in inputs.items():
        if p == 0:
            continue
        if u not in pi.honest_u or v not in pi.honest_v:
            raise DomainViolation(f"{pi.name}: honest input {(u, v)!r} outside the honest domains")
        for (x, y), q in pi.honest(u, v).items():
            if q > 0:
                key = (u, v, x, y)
                dist[key] = dist.get(key, 0.0) + p * q
    regs = [
        Register.classical("U", pi.honest_u),
        Register.classical("V", pi.honest_v),
        Register.classical("X", ()),
        Register.classical("Y", ()),
    ]
    total = sum(dist.values())
    if abs(total - 1.0) > 1e-9:
        raise KrausNotTracePreserving(f"{pi.name}: honest run has total weight {total!r}")
    return _finish(regs, {k: np.array([[p]], dtype=complex) for k, p in dist.items()})


def execute_protocol(pi: ProtocolChannel, inputs, alice: AdversaryStrategy | None = None,
                     bob: AdversaryStrategy | None = None) -> ExecutionResult:
    """Run ``pi`` with at most one dishonest party; see the module docstring for layouts.

    For a dishonest party ``inputs`` is the honest side's distribution, either
    a dict or a CQState holding the honest input register (plus, optionally,
    side information ``S``, a classical adversary input ``Z`` and an adversary
    quantum input ``Q``).
    """
    if alice is not None and bob is not None:
        raise BothSidesDishonest("at most one party may deviate")
    if alice is None and bob is None:
        if isinstance(inputs, CQState):
            dist = {(k[inputs.cindex("U")], k[inputs.cindex("V")]): w
                    for k, w in inputs.weights().items()}
        else:
            dist = dict(inputs)
        return ExecutionResult(_execute_honest(pi, dist), None, pi.name,
                               meta={"functionality": pi.functionality.name,
                                     "params": dict(pi.functionality.params)})

    side = "bob" if bob is not None else "alice"
    strat = bob if bob is not None else alice
    if strat.side is not None and strat.side != side:
        raise StrategyProtocolMismatch(f"strategy {strat.name} is for {strat.side}, used as {side}")
    hin, hout = ("U", "X") if side == "bob" else ("V", "Y")
    honest_domain = pi.honest_u if side == "bob" else pi.honest_v

    st = _to_state(inputs, hin)
    for k in st.blocks:
        if k[st.cindex(hin)] not in honest_domain:
            raise DomainViolation(f"{pi.name}: honest input {k[st.cindex(hin)]!r} outside the honest domain")

    # attach transcript and adversary memory
    zpos = st.cindex("Z") if "Z" in st.classical_names else None
    has_q = "Q" in st.quantum_names
    if st.quantum_names and (len(st.quantum_names) > 1 or not has_q):
        raise StrategyProtocolMismatch("adversary input must be a single quantum register named 'Q'")
    if has_q and st.qdim != strat.qdim:
        raise StrategyProtocolMismatch(f"adversary input has dimension {st.qdim}, strategy expects {strat.qdim}")
    init = None if has_q else strat.initial_state()
    cregs = [r for r in st.registers if r.is_classical]
    regs = cregs + [Register.classical("R", ()), Register.quantum("Q", strat.qdim)]

    blocks = {}
    for key, block in st.blocks.items():
        r0 = (("in", key[zpos]),) if zpos is not None else ()
        blocks[key + (r0,)] = block if has_q else block * init
    state = _finish(regs, blocks)
    state = run_call(state, pi, side, strat, hin, hout)
    return ExecutionResult(state, side, pi.name, strat.name,
                           {"leak": pi.leak(side), "functionality": pi.functionality.name,
                            "params": dict(pi.functionality.params)})


def run_call(state: CQState, pi: ProtocolChannel, side: str, strat: AdversaryStrategy,
             hin: str, hout: str) -> CQState:
    """One execution of ``pi`` on a state holding the honest input ``hin``, ``R`` and ``Q``.

    ``R`` must be the last classical register.  The honest output is
    inserted as classical register ``hout`` just before it; every other
    classical register is carried along.
    """
    state = _run_steps(state, strat.prepare, strat)

    # message
    rpos = state.cindex("R")
    qin = state.qdim
    seen: set = set()

    def send(key, block):
        r = key[rpos]
        branches = [(m, _lift(op, qin)) for m, op in strat.send(r)]
        if r not in seen:
            seen.add(r)
            _check_tp([op for _, op in branches], qin, f"strategy {strat.name} (send)")
        for m, op in branches:
            yield key[:rpos] + (r + (("send", m),),), op

    state = transform(state, state.registers, send)

    # interaction with the honest party
    hpos = state.cindex(hin)
    leak = pi.leak(side)
    out_regs = [r for r in state.registers if r.is_classical and r.name != "R"]
    out_regs += [Register.classical(hout, ()), Register.classical("R", ()), Register.quantum("Q", qin * leak)]
    served: dict = {}

    def interact(key, block):
        h = key[hpos]
        r = key[rpos]
        m = last(r, "send")
        ck = (h, m)
        if ck not in served:
            branches = list(pi.serve(side, h, m, qin))
            _check_tp([op for _, op in branches], qin, f"protocol {pi.name} on {ck!r}")
            served[ck] = branches
        for (o, c), op in served[ck]:
            yield key[:rpos] + (o, r + (("recv", c),)), op

    state = transform(state, out_regs, interact)
    return _run_steps(state, strat.finish, strat, strat.out_qdim)


# ---------------------------------------------------------------------------
# classical hybrid points


def check_classical_hybrid_point(state: CQState, left: Sequence[str], pivot: Sequence[str],
                                 right: Sequence[str] | None = None, tau: float = TAU) -> tuple[bool, float]:
    """Gap between a call-point state and its Markov form ``left <-> pivot <-> right``."""
    if right is not None and not right:
        return True, 0.0
    gap = markov_gap(state, left, pivot, right)
    return gap <= tau, gap
