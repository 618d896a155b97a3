"""Measuring the three-condition security definition and its specialized forms.

Witnesses are functions of the classical part of an execution output (given
as a dict ``register -> value``) returning the pair of classical variables
the definition asks for: ``(V, Y)`` against a dishonest Bob and ``(U, X)``
against a dishonest Alice.  A witness may also consume a fresh coin.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from ._json import jsonable
from .cq import (
    PRUNE,
    TAU,
    CQState,
    EventPredicate,
    Register,
    condition_on_event,
    drop,
    extend_with_function,
    markov_gap,
    partial_trace,
    reorder,
    statistical_distance,
    tensor,
    trace_distance,
    transform,
    uniform_state,
)
from .errors import (
    BudgetZero,
    DefinitionProtocolMismatch,
    PreconditionViolated,
    SideMismatch,
    WitnessDomainError,
    ZeroProbabilityEvent,
)
from .functionality import BOT, Functionality, eval_functionality, point_mass_family
from .protocol import (
    AdversaryStrategy,
    ExecutionResult,
    ProtocolChannel,
    execute_protocol,
    last,
)

SCOPE_NOTE = "witnesses range over functions of the adversary transcript only"

# register names: dishonest side -> (honest in, honest out, witness in, witness out)
LAYOUT = {"bob": ("U", "X", "V", "Y"), "alice": ("V", "Y", "U", "X")}
PROTECTS = {"bob": "alice", "alice": "bob", None: "correctness"}


@dataclass(frozen=True)
class Witness:
    """Classical variables for the existential of the security definition.

    ``fn`` maps an assignment of the classical registers to ``(v, y)``.  With
    ``coins`` (a distribution, or a function of the assignment returning one)
    ``fn`` also takes the coin value.
    """

    fn: Callable[..., tuple] = field(compare=False)
    description: str = ""
    coins: Mapping | Callable[[Mapping], Mapping] | None = None
    table: Mapping | None = None

    @classmethod
    def from_table(cls, table: Mapping, description: str = "table") -> "Witness":
        table = dict(table)

        def fn(assign):
            r = assign["R"]
            try:
                return table[r]
            except KeyError:
                raise WitnessDomainError(f"witness table has no entry for transcript {r!r}") from None

        return cls(fn, description, None, table)


@dataclass
class SecurityReport:
    protects: str
    eps: dict[str, float]
    witness: str = ""
    mode: str = "witness"
    exhaustive: bool | None = None
    table: Mapping | None = None
    flags: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def eps_max(self) -> float:
        return max(self.eps.values()) if self.eps else 0.0

    def passes(self, bound: float, tau: float = TAU) -> bool:
        return self.eps_max <= bound + tau

    def to_dict(self) -> dict:
        out = {
            "protects": self.protects,
            "eps": {k: jsonable(v) for k, v in self.eps.items()},
            "eps_max": jsonable(self.eps_max),
            "witness": self.witness,
            "mode": self.mode,
        }
        if self.exhaustive is not None:
            out["exhaustive"] = self.exhaustive
        if self.table is not None:
            out["table"] = [[jsonable(r), jsonable(vy[0]), jsonable(vy[1])] for r, vy in self.table.items()]
        if self.flags:
            out["flags"] = list(self.flags)
        if self.extra:
            out["extra"] = jsonable(self.extra)
        return out


# ---------------------------------------------------------------------------
# helpers


def _bound_state(result: ExecutionResult, side: str | None) -> CQState:
    if side is not None and result.dishonest != side:
        raise SideMismatch(f"result has dishonest {result.dishonest!r}, check asked for {side!r}")
    if result.dishonest is None:
        raise SideMismatch("security checks need a dishonest party")
    return result.output


def apply_witness(state: CQState, w: Witness, names: tuple[str, str]) -> CQState:
    """Append the witness registers ``names`` to ``state``."""
    cl = state.classical_names
    regs = [r for r in state.registers if r.is_classical]
    regs += [Register.classical(names[0], ()), Register.classical(names[1], ())]
    regs += [r for r in state.registers if not r.is_classical]
    coins = w.coins
    cache: dict = {}

    def fn(key, block):
        if key not in cache:
            assign = dict(zip(cl, key))
            if not coins:
                cache[key] = [(tuple(w.fn(assign)), 1.0)]
            else:
                dist = coins(assign) if callable(coins) else coins
                cache[key] = [(tuple(w.fn(assign, c)), p) for c, p in dist.items() if p > 0]
        for vy, p in cache[key]:
            yield key + vy, p

    return transform(state, regs, fn)


def _joint(state: CQState, names: Sequence[str]) -> dict:
    return state.distribution(names)


def independence_gap(state: CQState, a: Sequence[str], b: Sequence[str]) -> float:
    """Statistical distance between ``P_AB`` and ``P_A P_B``."""
    pab = _joint(state, tuple(a) + tuple(b))
    pa = _joint(state, a)
    pb = _joint(state, b)
    prod = {ka + kb: p * q for ka, p in pa.items() for kb, q in pb.items()}
    return statistical_distance(pab, prod)


def functional_gap(state: CQState, F: Functionality, u: str, v: str, x: str, y: str,
                   extra: Sequence[str] = (), check_domain: str | None = None) -> float:
    """Distance of ``P_{extra,U,V,X,Y}`` to ``P_{extra,U,V}`` followed by ``F``."""
    extra = tuple(extra)
    real = _joint(state, extra + (u, v, x, y))
    base = _joint(state, extra + (u, v))
    ideal: dict = {}
    for k, p in base.items():
        uu, vv = k[-2], k[-1]
        if (uu, vv) not in F.table:
            bad = vv if check_domain == "v" else uu if check_domain == "u" else (uu, vv)
            raise WitnessDomainError(f"{F.name}: witness value {bad!r} outside the extended domain")
        for (xx, yy), q in F.table[(uu, vv)].items():
            kk = k + (xx, yy)
            ideal[kk] = ideal.get(kk, 0.0) + p * q
    return statistical_distance(real, ideal)


def _product(a: CQState, b: CQState, order: Sequence[str]) -> CQState:
    return reorder(tensor(a, b), order)


def _uniform(name: str, alphabet: Sequence) -> CQState:
    return uniform_state([Register.classical(name, alphabet)])


def _cond(state: CQState, ev: EventPredicate, flags: list, label: str):
    try:
        return condition_on_event(state, ev)
    except ZeroProbabilityEvent:
        flags.append(f"{label}: conditioning event has probability 0, condition vacuous")
        return 0.0, None


# ---------------------------------------------------------------------------
# the general definition


def check_security_witness(result: ExecutionResult, F: Functionality, w: Witness,
                           side: str | None = None, keep: Sequence[str] = ()) -> SecurityReport:
    """Measure the three conditions for the dishonest party of ``result``."""
    side = side or result.dishonest
    state = _bound_state(result, side)
    hin, hout, win, wout = LAYOUT[side]
    names = (hin, hout, "R", "Q")
    base = partial_trace(state, names)
    ws = apply_witness(base, w, (win, wout))
    if side == "bob":
        u, v, x, y = hin, win, hout, wout
        left, pivot = (hin, hout), (win, wout)
    else:
        u, v, x, y = win, hin, wout, hout
        left, pivot = (hin, hout), (win, wout)
    eps = {
        "independence": independence_gap(ws, (u,), (v,)),
        "functional": functional_gap(ws, F, u, v, x, y, check_domain="v" if side == "bob" else "u"),
        "markov": markov_gap(ws, left, pivot, ("R", "Q")),
    }
    return SecurityReport(PROTECTS[side], eps, w.description, "witness", table=w.table)


ARGMAX_TIE = 1e-12


def check_correctness(pi: ProtocolChannel, F: Functionality,
                      family: Sequence[Mapping] | None = None) -> SecurityReport:
    """Worst statistical distance of honest runs from ``F`` over an input family."""
    family = list(family) if family is not None else point_mass_family(F)
    worst, arg = 0.0, 0
    for i, P in enumerate(family):
        real = execute_protocol(pi, P).output.distribution(("U", "V", "X", "Y"))
        d = statistical_distance(real, eval_functionality(F, P))
        if d > worst + ARGMAX_TIE:  # equal gaps differ in the last bits; keep the first
            worst, arg = d, i
    return SecurityReport("correctness", {"correctness": worst}, mode="witness",
                          extra={"worst_input": arg, "family_size": len(family)})


# ---------------------------------------------------------------------------
# witness search


class _TableEvaluator:
    """Fast evaluation of the three conditions for transcript-table witnesses."""

    def __init__(self, state: CQState, F: Functionality, side: str):
        hin, hout, _, _ = LAYOUT[side]
        st = partial_trace(state, (hin, hout, "R", "Q"))
        self.side = side
        hs = list(dict.fromkeys((k[0], k[1]) for k in st.blocks))
        rs = list(dict.fromkeys(k[2] for k in st.blocks))
        self.hs, self.rs = hs, rs
        d = st.qdim
        self.d = d
        hi = {h: i for i, h in enumerate(hs)}
        ri = {r: i for i, r in enumerate(rs)}
        B = np.zeros((len(hs), len(rs), d, d), dtype=complex)
        for k, m in st.blocks.items():
            B[hi[(k[0], k[1])], ri[k[2]]] = m
        self.B = B
        self.P = np.einsum("hrii->hr", B).real
        # honest in / out indices
        self.ins = list(dict.fromkeys(h[0] for h in hs))
        self.outs = list(dict.fromkeys(h[1] for h in hs))
        self.h_in = np.array([self.ins.index(h[0]) for h in hs])
        self.h_out = np.array([self.outs.index(h[1]) for h in hs])
        if side == "bob":
            wins = F.ext_v
            wouts = F.y_alphabet()
        else:
            wins = F.ext_u
            wouts = F.x_alphabet()
        self.cands = [(a, b) for a in wins for b in wouts]
        self.wins = list(wins)
        self.c_win = np.array([self.wins.index(a) for a, _ in self.cands])
        # kernel lookup K[in, cand, out] = F(out, wout | ...)
        K = np.zeros((len(self.ins), len(self.cands), len(self.outs)))
        for i, h in enumerate(self.ins):
            for c, (a, b) in enumerate(self.cands):
                row = F.table[(h, a)] if side == "bob" else F.table[(a, h)]
                for j, o in enumerate(self.outs):
                    K[i, c, j] = row.get((o, b), 0.0) if side == "bob" else row.get((b, o), 0.0)
        self.K = K
        self.evaluations = 0

    def eps(self, assign: Sequence[int]) -> tuple[float, float, float]:
        a = np.asarray(assign)
        nI, nC, nO = self.K.shape
        nW = len(self.wins)
        # P[h, r] aggregated into (in, cand, out)
        onehot = np.zeros((len(self.rs), nC))
        onehot[np.arange(len(self.rs)), a] = 1.0
        Phc = self.P @ onehot  # (H, C)
        G = np.zeros((nI, nC, nO))
        np.add.at(G, (self.h_in, slice(None), self.h_out), Phc)
        # witness input marginals
        Pic = G.sum(axis=2)  # (in, cand)
        wmap = np.zeros((nC, nW))
        wmap[np.arange(nC), self.c_win] = 1.0
        Piw = Pic @ wmap  # (in, win)
        Pi = Piw.sum(axis=1)
        Pw = Piw.sum(axis=0)
        e_ind = 0.5 * np.abs(Piw - np.outer(Pi, Pw)).sum()
        # functional
        Q = Piw[:, self.c_win][:, :, None] * self.K  # (in, cand, out)
        inside = Q.sum()
        e_fun = 0.5 * (np.abs(G - Q).sum() + max(0.0, 1.0 - inside))
        # markov over pivot = cand
        Pp = Phc.sum(axis=0)  # (C,)
        sigma_num = self.B.sum(axis=0)  # (R, d, d)
        pr = Pp[a]  # per r
        safe = np.where(pr > PRUNE, pr, 1.0)
        coef = Phc[:, a] / safe[None, :]  # (H, R)
        diff = self.B - coef[:, :, None, None] * sigma_num[None]
        if self.d == 1:
            e_mk = 0.5 * np.abs(diff[..., 0, 0].real).sum()
        else:
            flat = diff.reshape(-1, self.d, self.d)
            flat = (flat + flat.conj().transpose(0, 2, 1)) / 2
            e_mk = 0.5 * np.abs(np.linalg.eigvalsh(flat)).sum()
        return float(min(e_ind, 1.0)), float(min(e_fun, 1.0)), float(min(e_mk, 1.0))

    def score(self, assign) -> float:
        self.evaluations += 1
        return max(self.eps(assign))

    def table(self, assign) -> dict:
        return {r: self.cands[c] for r, c in zip(self.rs, assign)}


def search_security_witness(result: ExecutionResult, F: Functionality, side: str | None = None,
                            budget: int = 1_000_000, seed: int = 0, seed_witness: Witness | None = None,
                            max_restarts: int = 64) -> tuple[Witness, SecurityReport]:
    """Minimize the worst condition over transcript-table witnesses.

    Enumerates every table when that takes at most ``budget`` evaluations,
    otherwise runs seeded hill climbing on single-entry edits with restarts.
    A supplied witness seeds the search and is returned if nothing beats it.
    """
    if budget <= 0:
        raise BudgetZero("search budget must be positive")
    side = side or result.dishonest
    state = _bound_state(result, side)
    ev = _TableEvaluator(state, F, side)
    nR, nC = len(ev.rs), len(ev.cands)
    total = nC ** nR
    best: tuple[float, tuple] | None = None

    def consider(assign):
        nonlocal best
        s = ev.score(assign)
        if best is None or s < best[0] - 1e-15:
            best = (s, tuple(assign))
        return s

    exhaustive = total <= budget
    if exhaustive:
        for assign in itertools.product(range(nC), repeat=nR):
            consider(assign)
            if best[0] == 0.0:
                break
    else:
        rng = np.random.default_rng(seed)
        starts = []
        if seed_witness is not None:
            try:
                idx = {c: i for i, c in enumerate(ev.cands)}
                starts.append([idx[tuple(seed_witness.fn({"R": r}))] for r in ev.rs])
            except (KeyError, TypeError, WitnessDomainError):
                pass
        restarts = 0
        while ev.evaluations < budget and restarts < max_restarts:
            cur = list(starts.pop(0)) if starts else list(rng.integers(nC, size=nR))
            restarts += 1
            cur_s = consider(cur)
            improved = True
            while improved and ev.evaluations < budget:
                improved = False
                for i in range(nR):
                    for c in range(nC):
                        if c == cur[i] or ev.evaluations >= budget:
                            continue
                        trial = list(cur)
                        trial[i] = c
                        s = consider(trial)
                        if s < cur_s - 1e-15:
                            cur, cur_s, improved = trial, s, True
            if best[0] == 0.0:
                break
    table = ev.table(best[1])
    w = Witness.from_table(table, "searched transcript table")
    e = ev.eps(best[1])
    report = SecurityReport(PROTECTS[side], {"independence": e[0], "functional": e[1], "markov": e[2]},
                            w.description, "search", exhaustive, table,
                            extra={"evaluations": ev.evaluations, "space": total, "scope": SCOPE_NOTE})
    if seed_witness is not None:
        given = check_security_witness(result, F, seed_witness, side)
        if given.eps_max < report.eps_max:
            given.mode = "search"
            given.exhaustive = exhaustive
            given.extra = dict(report.extra, kept_seed=True)
            return seed_witness, given
    return w, report


# ---------------------------------------------------------------------------
# simulator synthesis


def _preparation(blocks: Mapping[Any, np.ndarray], d_out: int, d_in: int) -> list:
    """Kraus branches ``(r, K)`` preparing ``sum_r |r><r| x block_r`` from any ``d_in``-dim input."""
    out = []
    for r, m in blocks.items():
        vals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
        for lam, vec in zip(vals, vecs.T):
            if lam <= PRUNE:
                continue
            for j in range(d_in):
                K = np.zeros((d_out, d_in), dtype=complex)
                K[:, j] = np.sqrt(lam) * vec
                out.append((r, K))
    # renormalize so the branches are trace preserving despite pruning
    tot = sum(float(np.trace(K.conj().T @ K).real) for _, K in out) / d_in
    return [(r, K / np.sqrt(tot)) for r, K in out]


def input_transcript(r: tuple):
    """The adversary's classical input ``z``: the ``("in", z)`` event, if any."""
    return last(r, "in")


def simulator_tables(state: CQState, w: Witness, names: tuple[str, str],
                     z_of: Callable[[tuple], Any]) -> tuple[dict, dict]:
    """``P_{V|Z}`` and the conditional states ``rho^{v y z}`` of ``(R, Q)``.

    ``state`` must hold the classical register ``R`` and the quantum ``Q``.
    Returns ``(p_v_given_z, states)`` where ``states`` maps ``(v, y, z)``,
    ``(v, z)`` and ``(z,)`` to ``{r: normalized block}`` for the fallbacks.
    """
    ws = apply_witness(partial_trace(state, [n for n in state.classical_names] + list(state.quantum_names)),
                       w, names)
    rpos, vpos, ypos = ws.cindex("R"), ws.cindex(names[0]), ws.cindex(names[1])
    acc: dict = {}
    mass: dict = {}
    vz: dict = {}
    for k, m in ws.blocks.items():
        r, v, y = k[rpos], k[vpos], k[ypos]
        z = z_of(r)
        p = float(np.trace(m).real)
        vz[(v, z)] = vz.get((v, z), 0.0) + p
        for c in ((v, y, z), (v, z), (z,)):
            slot = acc.setdefault(c, {})
            slot[r] = slot[r] + m if r in slot else m
            mass[c] = mass.get(c, 0.0) + p
    states = {c: {r: m / mass[c] for r, m in slot.items()} for c, slot in acc.items() if mass[c] > PRUNE}
    pz = {c[0]: mass[c] for c in mass if len(c) == 1}
    p_v_given_z: dict = {}
    for (v, z), p in vz.items():
        if p > PRUNE:
            p_v_given_z.setdefault(z, []).append((v, p / pz[z]))
    return p_v_given_z, states


def simulator_from_tables(name: str, side: str, p_v_given_z: Mapping, states: Mapping,
                          z_of: Callable[[tuple], Any], d_in: int, d_out: int) -> AdversaryStrategy:
    """Ideal-life strategy: sample ``v`` given ``z``, submit it, prepare ``rho^{v y z}``."""
    preps: dict = {}

    def prep(c):
        if c not in preps:
            preps[c] = _preparation(states[c], d_out, d_in)
        return preps[c]

    def send(r):
        z = z_of(r)
        if z not in p_v_given_z:
            raise WitnessDomainError(f"simulator has no distribution for z={z!r}")
        return p_v_given_z[z]

    def finish(r):
        z = z_of(r)
        v, y = last(r, "send"), last(r, "recv")
        for c in ((v, y, z), (v, z), (z,)):
            if c in states:
                return prep(c)
        raise WitnessDomainError(f"simulator has no state for z={z!r}")

    return AdversaryStrategy(name, send, finish=(finish,), qdim=d_in, side=side, rewrites=True,
                             tags=frozenset({"synthesized"}), out_qdim=d_out)


def synthesize_ideal_adversary(result: ExecutionResult, F: Functionality, w: Witness,
                               z_of: Callable[[tuple], Any] = input_transcript) -> AdversaryStrategy:
    """Simulator for the ideal-life protocol built from a witness.

    Given ``Z = z`` (by default the ``("in", z)`` transcript event) it samples
    ``v`` from ``P_{V|Z=z}``, submits it, receives ``y`` and prepares the
    conditional adversary output ``rho^{v y z}`` over ``(R, Q)``.  A reply
    never observed with ``v`` falls back to ``rho^{v z}`` and then ``rho^{z}``.
    """
    side = result.dishonest
    state = _bound_state(result, side)
    _, _, win, wout = LAYOUT[side]
    pvz, states = simulator_tables(state, w, (win, wout), z_of)
    return simulator_from_tables(f"simulator[{w.description}]", side, pvz, states, z_of, 1, state.qdim)


def simulation_distance(result: ExecutionResult, inputs, F: Functionality, w: Witness) -> float:
    """Distance between ``result`` and the ideal-life run with the synthesized simulator."""
    from .functionality import ideal_life_execute

    sim = synthesize_ideal_adversary(result, F, w)
    ideal = ideal_life_execute(F, inputs, **{result.dishonest: sim})
    return trace_distance(result.output, reorder(ideal.output, result.output.names))


# ---------------------------------------------------------------------------
# side information


def check_side_info_closure(pi: ProtocolChannel, rho_in: CQState, F: Functionality,
                            strategy: AdversaryStrategy, w: Witness, side: str = "bob",
                            tau: float = TAU) -> SecurityReport:
    """Conditions of the side-information extension, measured on one run.

    ``rho_in`` holds the honest input, optional classical side information
    ``S``, an optional classical adversary input ``Z`` and optional adversary
    quantum input ``Q``; it must be Markov ``(S, honest) <-> Z <-> Q``.
    """
    hin, hout, win, wout = LAYOUT[side]
    z = ("Z",) if "Z" in rho_in.classical_names else ()
    s = tuple(n for n in rho_in.classical_names if n not in (hin, "Z"))
    left = s + (hin,)
    if "Q" in rho_in.quantum_names:
        gap = markov_gap(rho_in, left, z, ("Q",))
        if gap > tau:
            raise PreconditionViolated(f"input is {gap:.3g} away from Markov form")
    res = execute_protocol(pi, rho_in, **{side: strategy})
    ws = apply_witness(res.output, w, (win, wout))
    if side == "bob":
        u, v, x, y = hin, win, hout, wout
    else:
        u, v, x, y = win, hin, wout, hout
    cl = partial_trace(ws, s + (hin,) + z + (win,))
    eps = {
        "independence": markov_gap(cl, left, z, (win,)) if (s or z) else independence_gap(cl, (hin,), (win,)),
        "functional": functional_gap(ws, F, u, v, x, y, extra=s + z, check_domain="v" if side == "bob" else "u"),
        "markov": markov_gap(ws, s + (hin, hout), (win, wout) + z, ("R", "Q")),
    }
    return SecurityReport(PROTECTS[side], eps, w.description, "witness", extra={"side_info": list(s + z)})


# ---------------------------------------------------------------------------
# specialized definitions

DEF_FUNCTIONALITY = {
    "ident": "f_id",
    "rot": "f_12rot",
    "ot": "f_12ot",
    "ok": "f_12ok",
    "rabin": "f_rabin",
    "ident_strict": "f_id_strict",
}
REDUCTION_FACTOR = {"ident": 3, "rot": 4, "ot": 3, "ok": 4, "rabin": 5, "ident_strict": 1}


@dataclass(frozen=True)
class SpecWitness:
    """Witness of a specialized definition: one classical value (``W'``, ``C``, ...)."""

    fn: Callable[[Mapping], Any] = field(compare=False)
    description: str = ""


def exported_spec_witness(defn: str, side: str) -> SpecWitness:
    """The specialized witness read off the transcript of a box-forwarding adversary."""

    def send(a):
        return last(a["R"], "send")

    if defn in ("ident", "ident_strict"):
        if side == "bob":
            return SpecWitness(send, "W' = message")

        def guess(a):
            m = send(a)
            return m[0] if isinstance(m, tuple) else m

        return SpecWitness(guess, "W' = password in message")
    if defn in ("rot", "ok"):
        if side == "bob":
            return SpecWitness(lambda a: send(a)[0], "C = choice in message")
        return SpecWitness(send, "(S0, S1) = message")
    if defn == "ot":
        if side == "bob":
            return SpecWitness(send, "C = message")
        return SpecWitness(send, "(S0, S1) = message")
    if defn == "rabin":
        if side == "bob":
            return SpecWitness(lambda a: last(a["R"], "recv")[0], "C = reply bit")
        return SpecWitness(send, "S = message")
    raise DefinitionProtocolMismatch(f"unknown definition {defn!r}")


def _spec_state(result: ExecutionResult, defn: str) -> CQState:
    if defn not in DEF_FUNCTIONALITY:
        raise DefinitionProtocolMismatch(f"unknown definition {defn!r}")
    want = DEF_FUNCTIONALITY[defn]
    got = result.meta.get("functionality")
    if got != want:
        raise DefinitionProtocolMismatch(f"definition {defn} needs a {want} protocol, got {got}")
    return result.output


def check_specialized(defn: str, result: ExecutionResult, w: SpecWitness | None = None) -> SecurityReport:
    """Measure the conditions of a specialized definition on one execution."""
    st = _spec_state(result, defn)
    side = result.dishonest
    flags: list[str] = []
    eps: dict[str, float] = {}
    ell = result.meta.get("params", {}).get("ell")
    strings = tuple(range(2 ** ell)) if ell else ()

    def add(name, fn, args):
        nonlocal st
        st = extend_with_function(st, fn, args, name)

    if side is not None and w is None:
        raise WitnessDomainError("a witness is required against a dishonest party")
    wf = (lambda *vals, _n=st.classical_names: w.fn(dict(zip(_n, vals)))) if w is not None else None
    cl_args = st.classical_names

    if defn in ("ident", "ident_strict"):
        if side is None:
            eps["correctness"] = _prob(st, ("U", "V", "Y"), lambda u, v, y: y != int(u == v))
        elif side == "bob":
            add("W'", wf, cl_args)
            st = partial_trace(st, ("U", "W'", "R", "Q"))
            eps["independence"] = independence_gap(st, ("U",), ("W'",))
            p, c = _cond(st, EventPredicate(("U", "W'"), lambda a, b: a != b), flags, "markov")
            eps["markov"] = markov_gap(c, ("U",), ("W'",), ("R", "Q")) if c is not None else 0.0
        else:
            add("W'", wf, cl_args)
            st = partial_trace(st, ("V", "Y", "W'", "R", "Q"))
            eps["independence"] = independence_gap(st, ("V",), ("W'",))
            eps["accept_wrong"] = _cond_prob(st, ("V", "W'"), lambda v, g: v != g, ("Y",), lambda y: y == 1,
                                             flags, "accept_wrong")
            p, c = _cond(st, EventPredicate(("V", "W'"), lambda a, b: a != b), flags, "markov")
            eps["markov"] = markov_gap(drop(c, ("Y",)), ("V",), ("W'",), ("R", "Q")) if c is not None else 0.0
            if defn == "ident_strict":
                eps["reject_right"] = _cond_prob(st, ("V", "W'"), lambda v, g: v == g, ("Y",),
                                                 lambda y: y != 1, flags, "reject_right")
        return SecurityReport(PROTECTS[side], eps, w.description if w else "", flags=flags,
                              extra={"definition": defn})

    if defn in ("rot", "ot", "ok"):
        if side is None:
            if defn == "ot":
                eps["wrong_output"] = _prob(st, ("U", "V", "Y"), lambda u, c, y: y != u[c])
            else:
                if defn == "rot":
                    add("S0", lambda x: x[0], ("X",))
                    add("S1", lambda x: x[1], ("X",))
                    add("C", lambda c: c, ("V",))
                    p = partial_trace(st, ("S0", "S1", "C"))
                    ideal = _product(_product(_uniform("S0", strings), _uniform("S1", strings), ("S0", "S1")),
                                     partial_trace(st, ("C",)), ("S0", "S1", "C"))
                    eps["randomness"] = trace_distance(p, ideal)
                    eps["wrong_output"] = _prob(st, ("X", "V", "Y"), lambda x, c, y: y != x[c])
                else:
                    add("S0", lambda x: x[0], ("X",))
                    add("S1", lambda x: x[1], ("X",))
                    add("C", lambda y: y[0], ("Y",))
                    p = partial_trace(st, ("S0", "S1", "C"))
                    ideal = _product(_product(_uniform("S0", strings), _uniform("S1", strings), ("S0", "S1")),
                                     _uniform("C", (0, 1)), ("S0", "S1", "C"))
                    eps["randomness"] = trace_distance(p, ideal)
                    eps["wrong_output"] = _prob(st, ("X", "Y"), lambda x, y: y[1] != x[y[0]])
        elif side == "bob":
            add("C", wf, cl_args)
            src = "U" if defn == "ot" else "X"
            add("SC", lambda s, c: s[c], (src, "C"))
            add("S1mC", lambda s, c: s[1 - c], (src, "C"))
            if defn == "ot":
                add("S0", lambda s: s[0], ("U",))
                add("S1", lambda s: s[1], ("U",))
                eps["independence"] = independence_gap(st, ("S0", "S1"), ("C",))
                eps["markov"] = markov_gap(partial_trace(st, ("S1mC", "SC", "C", "R", "Q")),
                                           ("S1mC",), ("SC", "C"), ("R", "Q"))
                eps["alice_output"] = _prob(st, ("X",), lambda x: x is not None)
            else:
                real = partial_trace(st, ("S1mC", "SC", "C", "R", "Q"))
                ideal = _product(_uniform("S1mC", strings), partial_trace(st, ("SC", "C", "R", "Q")), real.names)
                eps["uniformity"] = trace_distance(real, ideal)
        else:
            add("SS", wf, cl_args)
            add("S0", lambda s: s[0], ("SS",))
            add("S1", lambda s: s[1], ("SS",))
            if defn == "ok":
                add("C", lambda y: y[0], ("Y",))
                eps["wrong_output"] = _prob(st, ("SS", "Y"), lambda s, y: y[1] != s[y[0]])
                real = partial_trace(st, ("S0", "S1", "R", "Q", "C"))
                ideal = _product(partial_trace(st, ("S0", "S1", "R", "Q")), _uniform("C", (0, 1)), real.names)
            else:
                add("C", lambda c: c, ("V",))
                eps["wrong_output"] = _prob(st, ("SS", "V", "Y"), lambda s, c, y: y != s[c])
                real = partial_trace(st, ("S0", "S1", "R", "Q", "C"))
                ideal = _product(partial_trace(st, ("S0", "S1", "R", "Q")), partial_trace(st, ("C",)), real.names)
            eps["independence"] = trace_distance(real, ideal)
        return SecurityReport(PROTECTS[side], eps, w.description if w else "", flags=flags,
                              extra={"definition": defn})

    # rabin
    if side is None:
        add("C", lambda y: y[0], ("Y",))
        p = partial_trace(st, ("X", "C"))
        eps["randomness"] = trace_distance(p, _product(_uniform("X", strings), _uniform("C", (0, 1)), ("X", "C")))
        eps["wrong_output"] = _prob(st, ("X", "Y"), lambda x, y: y[1] != y[0] * x)
    elif side == "bob":
        add("C", wf, cl_args)
        xc = partial_trace(st, ("X", "C"))
        eps["independence"] = trace_distance(xc, _product(partial_trace(st, ("X",)), _uniform("C", (0, 1)), ("X", "C")))
        sub = partial_trace(st, ("X", "C", "R", "Q"))
        p, c = _cond(sub, EventPredicate.equals("C", 0), flags, "uniformity")
        if c is None:
            eps["uniformity"] = 0.0
        else:
            eps["uniformity"] = trace_distance(c, _product(_uniform("X", strings), partial_trace(c, ("C", "R", "Q")), c.names))
    else:
        add("S", wf, cl_args)
        add("C", lambda y: y[0], ("Y",))
        eps["wrong_output"] = _prob(st, ("S", "Y"), lambda s, y: y[1] != y[0] * s)
        real = partial_trace(st, ("C", "S", "R", "Q"))
        eps["independence"] = trace_distance(real, _product(_uniform("C", (0, 1)), partial_trace(st, ("S", "R", "Q")), real.names))
    return SecurityReport(PROTECTS[side], eps, w.description if w else "", flags=flags,
                          extra={"definition": defn})


def _prob(state: CQState, names: Sequence[str], pred: Callable) -> float:
    return float(sum(p for k, p in state.distribution(names).items() if pred(*k)))


def _cond_prob(state: CQState, cond_names, cond_pred, names, pred, flags, label) -> float:
    dist = state.distribution(tuple(cond_names) + tuple(names))
    n = len(cond_names)
    tot = sum(p for k, p in dist.items() if cond_pred(*k[:n]))
    if tot <= PRUNE:
        flags.append(f"{label}: conditioning event has probability 0, condition vacuous")
        return 0.0
    return float(sum(p for k, p in dist.items() if cond_pred(*k[:n]) and pred(*k[n:])) / tot)


# ---------------------------------------------------------------------------
# reductions


def reduce_specialized(defn: str, side: str, w: SpecWitness, eps: float,
                       result: ExecutionResult | None = None, ell: int = 2) -> tuple[Witness, float]:
    """Witness for the general definition built as in the matching reduction.

    Returns the witness and the bound ``factor * eps``.  Some constructions
    read honest registers or use a fresh coin; the ``ident`` construction
    against a dishonest user needs ``result`` to calibrate its coin.
    """
    if defn not in REDUCTION_FACTOR:
        raise DefinitionProtocolMismatch(f"unknown definition {defn!r}")
    bound = REDUCTION_FACTOR[defn] * eps
    g = w.fn

    if defn in ("ident", "ident_strict") and side == "bob":
        def fn(a):
            wp = g(a)
            return wp, int(a["U"] == wp)

        return Witness(fn, f"V = W', Y = [W_A == W'] ({w.description})"), bound

    if defn == "ident" and side == "alice":
        if result is None:
            raise WitnessDomainError("the identification reduction needs the execution to calibrate D")
        # the fresh D follows Pr[Y = 0 | W_B = W' = w] for each value w of W';
        # one rate for all w leaves (W', D) correlated with W_B whenever the
        # override depends on W'
        st = result.output
        hits: dict = {}
        for k, p in st.distribution(st.classical_names).items():
            a = dict(zip(st.classical_names, k))
            wp = g(a)
            if a["V"] == wp:
                row = hits.setdefault(wp, {})
                row[a["Y"]] = row.get(a["Y"], 0.0) + p
        q0 = {}
        for wp, row in hits.items():
            tot = sum(row.values())
            q0[wp] = row.get(0, 0.0) / tot if tot > PRUNE else 1.0

        def coins(a):
            q = q0.get(g(a), 1.0)
            return {0: q, 1: 1.0 - q}

        def fn(a, coin):
            wp = g(a)
            d = a["Y"] if a["V"] == wp else coin
            return (wp, d), int(wp == a["V"])

        return Witness(fn, f"U = (W', D), X = [W' == W_B] ({w.description})", coins=coins), bound

    if defn == "ident_strict" and side == "alice":
        def fn(a):
            wp = g(a)
            u = BOT if wp == BOT else (wp, 1)
            return u, int(wp == a["V"])

        return Witness(fn, f"U = W', X = [W' == W_B] ({w.description})"), bound

    if defn in ("rot", "ok") and side == "bob":
        def fn(a):
            c = g(a)
            return (c, a["X"][c]), None

        return Witness(fn, f"V = (C, S_C), Y = none ({w.description})"), bound

    if defn == "ot" and side == "bob":
        def fn(a):
            c = g(a)
            return c, a["U"][c]

        return Witness(fn, f"V = C, Y = S_C ({w.description})"), bound

    if defn in ("rot", "ot", "ok") and side == "alice":
        return Witness(lambda a: (tuple(g(a)), None), f"U = (S0, S1), X = none ({w.description})"), bound

    if defn == "rabin" and side == "bob":
        if result is not None:
            ell = result.meta.get("params", {}).get("ell", ell)
        strings = tuple(range(2 ** ell))
        coins = {s: 1.0 / len(strings) for s in strings}

        def fn(a, coin):
            c = g(a)
            v = a["X"] if c == 1 else coin
            return v, (c, c * v)

        return Witness(fn, f"V = X if C = 1 else fresh, Y = (C, C V) ({w.description})", coins=coins), bound

    if defn == "rabin" and side == "alice":
        return Witness(lambda a: (g(a), None), f"U = S, X = none ({w.description})"), bound

    raise SideMismatch(f"no reduction for {defn} against dishonest {side!r}")
