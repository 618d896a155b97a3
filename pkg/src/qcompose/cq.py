"""Dense algebra of classical-quantum states over named registers.

A state is stored as a map from assignments of its classical registers to
(unnormalized) density operators on the joint quantum space.  The weight of
an assignment is the trace of its block; missing keys are zero blocks.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EventNotDetermined,
    InvalidAssignment,
    LayoutMismatch,
    NameCollision,
    NonClassicalPivot,
    NonPSDBlock,
    NormalizationError,
    PartitionError,
    UnknownRegister,
    ZeroProbabilityEvent,
)

TAU_PSD = 1e-9
TAU_NORM = 1e-9
TAU = 1e-7
PRUNE = 1e-12
MAX_QDIM = 64
MAX_ALPHABET = 8


@dataclass(frozen=True)
class Register:
    """A named register; classical registers carry an alphabet, quantum ones a dimension."""

    name: str
    alphabet: tuple | None = None
    dim: int | None = None

    def __post_init__(self):
        if (self.alphabet is None) == (self.dim is None):
            raise ValueError(f"register {self.name!r} must be classical xor quantum")
        if self.alphabet is not None:
            object.__setattr__(self, "alphabet", tuple(self.alphabet))
            if len(set(self.alphabet)) != len(self.alphabet):
                raise ValueError(f"register {self.name!r} has repeated symbols")
        elif self.dim < 1:
            raise ValueError(f"register {self.name!r} needs dimension >= 1")

    @classmethod
    def classical(cls, name: str, alphabet: Iterable) -> "Register":
        return cls(name, alphabet=tuple(alphabet))

    @classmethod
    def quantum(cls, name: str, dim: int) -> "Register":
        return cls(name, dim=int(dim))

    @property
    def is_classical(self) -> bool:
        return self.dim is None

    def same_kind(self, other: "Register") -> bool:
        return self.name == other.name and self.dim == other.dim


class CQState:
    """Immutable cq-state.  Use :func:`make_cq_state` for validated construction."""

    __slots__ = ("registers", "blocks", "_cpos", "_qnames", "_qdims")

    def __init__(self, registers: Sequence[Register], blocks: Mapping[tuple, np.ndarray]):
        self.registers = tuple(registers)
        self.blocks = dict(blocks)
        cl = [r.name for r in self.registers if r.is_classical]
        self._cpos = {n: i for i, n in enumerate(cl)}
        self._qnames = tuple(r.name for r in self.registers if not r.is_classical)
        self._qdims = tuple(r.dim for r in self.registers if not r.is_classical)

    # -- layout -----------------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.registers)

    @property
    def classical_names(self) -> tuple[str, ...]:
        return tuple(self._cpos)

    @property
    def quantum_names(self) -> tuple[str, ...]:
        return self._qnames

    @property
    def qdims(self) -> tuple[int, ...]:
        return self._qdims

    @property
    def qdim(self) -> int:
        return int(np.prod(self._qdims, dtype=int)) if self._qdims else 1

    def register(self, name: str) -> Register:
        for r in self.registers:
            if r.name == name:
                return r
        raise UnknownRegister(name)

    def cindex(self, name: str) -> int:
        try:
            return self._cpos[name]
        except KeyError:
            if name in self._qnames:
                raise NonClassicalPivot(f"register {name!r} is quantum") from None
            raise UnknownRegister(name) from None

    def has(self, name: str) -> bool:
        return name in self._cpos or name in self._qnames

    # -- numbers ----------------------------------------------------------
    def weights(self) -> dict[tuple, float]:
        return {k: float(np.trace(m).real) for k, m in self.blocks.items()}

    def total(self) -> float:
        return float(sum(np.trace(m).real for m in self.blocks.values()))

    def distribution(self, names: Sequence[str]) -> dict[tuple, float]:
        """Marginal distribution of the given classical registers (insertion ordered)."""
        pos = [self.cindex(n) for n in names]
        out: dict[tuple, float] = {}
        for k, m in self.blocks.items():
            kk = tuple(k[i] for i in pos)
            out[kk] = out.get(kk, 0.0) + float(np.trace(m).real)
        return out

    def assignment(self, key: tuple) -> dict[str, Any]:
        return dict(zip(self._cpos, key))

    def __repr__(self) -> str:
        regs = ", ".join(
            f"{r.name}[{len(r.alphabet)}]" if r.is_classical else f"{r.name}<{r.dim}>"
            for r in self.registers
        )
        return f"CQState({regs}; {len(self.blocks)} blocks)"


@dataclass(frozen=True)
class EventPredicate:
    """Boolean predicate over the values of some classical registers."""

    names: tuple
    fn: Callable[..., bool] = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def always(cls) -> "EventPredicate":
        return cls((), lambda: True)

    @classmethod
    def equals(cls, name: str, value) -> "EventPredicate":
        return cls((name,), lambda v: v == value)

    def negate(self) -> "EventPredicate":
        f = self.fn
        return EventPredicate(self.names, lambda *a: not f(*a))

    def bind(self, state: CQState) -> Callable[[tuple], bool]:
        pos = [state.cindex(n) for n in self.names]
        f = self.fn
        return lambda key: bool(f(*(key[i] for i in pos)))


# ---------------------------------------------------------------------------
# construction


def _as_block(m, qdim: int) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.shape != (qdim, qdim):
        raise DimensionMismatch(f"block of shape {a.shape}, expected {(qdim, qdim)}")
    return a


def _finish(registers: Sequence[Register], blocks: Mapping[tuple, np.ndarray]) -> CQState:
    """Prune negligible blocks and extend alphabets with realized symbols."""
    kept = {}
    for k, m in blocks.items():
        if np.trace(m).real > PRUNE:
            kept[k] = m
    regs = list(registers)
    cidx = [i for i, r in enumerate(regs) if r.is_classical]
    for j, i in enumerate(cidx):
        alpha = list(regs[i].alphabet)
        known = set(alpha)
        grown = False
        for k in kept:
            v = k[j]
            if v not in known:
                known.add(v)
                alpha.append(v)
                grown = True
        if grown:
            regs[i] = Register(regs[i].name, alphabet=tuple(alpha))
    return CQState(regs, kept)


def make_cq_state(registers: Sequence[Register], blocks: Mapping[tuple, Any],
                  tau_psd: float = TAU_PSD, tau_norm: float = TAU_NORM) -> CQState:
    """Validated constructor.  Blocks are keyed by full classical assignments."""
    registers = tuple(registers)
    names = [r.name for r in registers]
    if len(set(names)) != len(names):
        raise NameCollision(f"duplicate register names in {names}")
    classical = [r for r in registers if r.is_classical]
    for r in classical:
        if not r.alphabet:
            raise InvalidAssignment(f"register {r.name!r} has an empty alphabet")
    qdim = int(np.prod([r.dim for r in registers if not r.is_classical], dtype=int))
    out = {}
    total = 0.0
    for key, m in blocks.items():
        key = tuple(key) if isinstance(key, (tuple, list)) else (key,)
        if len(key) != len(classical):
            raise DimensionMismatch(f"assignment {key} does not cover {len(classical)} classical registers")
        for r, v in zip(classical, key):
            if v not in r.alphabet:
                raise InvalidAssignment(f"{v!r} not in alphabet of {r.name!r}")
        a = _as_block(m, qdim)
        scale = max(1.0, float(np.abs(a).max()))
        if np.abs(a - a.conj().T).max() > tau_psd * scale:
            raise NonPSDBlock(f"block {key} is not Hermitian")
        a = (a + a.conj().T) / 2
        if np.linalg.eigvalsh(a)[0] < -tau_psd:
            raise NonPSDBlock(f"block {key} has a negative eigenvalue")
        total += float(np.trace(a).real)
        out[key] = out[key] + a if key in out else a
    if abs(total - 1.0) > tau_norm:
        raise NormalizationError(f"total trace {total!r} != 1")
    return _finish(registers, out)


def classical_state(names: Sequence[str], dist: Mapping, alphabets: Mapping[str, Sequence] | None = None) -> CQState:
    """Purely classical state from a distribution keyed by value tuples."""
    alphabets = alphabets or {}
    names = tuple(names)
    keys = [k if isinstance(k, tuple) else (k,) for k in dist]
    regs = []
    for j, n in enumerate(names):
        seen = list(alphabets.get(n, ()))
        for k in keys:
            if k[j] not in seen:
                seen.append(k[j])
        regs.append(Register.classical(n, seen))
    return make_cq_state(regs, {k: np.array([[p]]) for k, p in zip(keys, dist.values()) if p > 0})


def uniform_state(registers: Sequence[Register]) -> CQState:
    """Uniform over the full alphabets; quantum registers are maximally mixed."""
    alphas = [r.alphabet for r in registers if r.is_classical]
    d = math.prod(r.dim for r in registers if not r.is_classical)
    n = math.prod(len(a) for a in alphas)
    blocks = {k: np.eye(d, dtype=complex) / (n * d) for k in itertools.product(*alphas)}
    return CQState(registers, blocks)


def density(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).reshape(-1, 1)
    return v @ v.conj().T


def basis(dim: int, i: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[i, i] = 1.0
    return m


# ---------------------------------------------------------------------------
# blockwise maps


def transform(state: CQState, registers: Sequence[Register],
              fn: Callable[[tuple, np.ndarray], Iterable[tuple[tuple, Any]]]) -> CQState:
    """Apply a classically controlled instrument.

    ``fn(key, block)`` yields ``(new_key, op)`` pairs; ``op`` is either a
    nonnegative weight multiplying the block or a Kraus matrix ``K`` applied
    as ``K B K^dagger``.  ``registers`` is the output layout.
    """
    qdim = int(np.prod([r.dim for r in registers if not r.is_classical], dtype=int))
    acc: dict[tuple, np.ndarray] = {}
    for key, m in state.blocks.items():
        for nk, op in fn(key, m):
            if isinstance(op, np.ndarray):
                nm = op @ m @ op.conj().T
            else:
                if op <= 0:
                    continue
                nm = op * m
            if nm.shape != (qdim, qdim):
                raise DimensionMismatch(f"map produced block {nm.shape}, layout needs {qdim}")
            prev = acc.get(nk)
            acc[nk] = nm if prev is None else prev + nm
    return _finish(registers, acc)


def _ptrace(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    n = len(dims)
    if len(keep) == n:
        return m
    t = m.reshape(tuple(dims) + tuple(dims))
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = letters[:n]
    cols = [letters[n + i] if i in keep else letters[i] for i in range(n)]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    r = np.einsum(rows + "".join(cols) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in keep], dtype=int))
    return r.reshape(dk, dk)


def partial_trace(state: CQState, keep: Iterable[str]) -> CQState:
    """Marginal on ``keep``; classical registers are summed out, quantum ones traced."""
    keep = set(keep)
    for n in keep:
        if not state.has(n):
            raise UnknownRegister(n)
    regs = [r for r in state.registers if r.name in keep]
    cpos = [state.cindex(n) for n in state.classical_names if n in keep]
    qkeep = [i for i, n in enumerate(state.quantum_names) if n in keep]
    grouped: dict[tuple, np.ndarray] = {}
    for k, m in state.blocks.items():
        nk = tuple(k[i] for i in cpos)
        prev = grouped.get(nk)
        grouped[nk] = m if prev is None else prev + m
    dims = state.qdims
    blocks = {k: _ptrace(m, dims, qkeep) for k, m in grouped.items()}
    return CQState(regs, blocks)


def drop(state: CQState, names: Iterable[str]) -> CQState:
    names = set(names)
    return partial_trace(state, [n for n in state.names if n not in names])


def reorder(state: CQState, names: Sequence[str]) -> CQState:
    """Same state with registers permuted into ``names`` order."""
    names = tuple(names)
    if sorted(names) != sorted(state.names):
        raise PartitionError(f"{names} is not a permutation of {state.names}")
    if names == state.names:
        return state
    regs = [state.register(n) for n in names]
    cnew = [n for n in names if n in state.classical_names]
    cperm = [state.cindex(n) for n in cnew]
    qnew = [n for n in names if n in state.quantum_names]
    qperm = [state.quantum_names.index(n) for n in qnew]
    dims = state.qdims
    nq = len(dims)
    blocks = {}
    for k, m in state.blocks.items():
        nk = tuple(k[i] for i in cperm)
        if nq > 1 and qperm != list(range(nq)):
            t = m.reshape(dims + dims).transpose(qperm + [nq + i for i in qperm])
            m = t.reshape(m.shape)
        blocks[nk] = m
    return CQState(regs, blocks)


def rename(state: CQState, mapping: Mapping[str, str]) -> CQState:
    regs = []
    for r in state.registers:
        n = mapping.get(r.name, r.name)
        regs.append(Register(n, alphabet=r.alphabet, dim=r.dim))
    if len({r.name for r in regs}) != len(regs):
        raise NameCollision(f"renaming {dict(mapping)} collides")
    return CQState(regs, state.blocks)


def tensor(a: CQState, b: CQState) -> CQState:
    clash = set(a.names) & set(b.names)
    if clash:
        raise NameCollision(f"registers {sorted(clash)} on both sides")
    blocks = {}
    for ka, ma in a.blocks.items():
        for kb, mb in b.blocks.items():
            blocks[ka + kb] = np.kron(ma, mb)
    return CQState(a.registers + b.registers, blocks)


def _check_layout(a: CQState, b: CQState) -> None:
    if len(a.registers) != len(b.registers) or not all(
        x.same_kind(y) for x, y in zip(a.registers, b.registers)
    ):
        raise LayoutMismatch(f"{a!r} vs {b!r}")


def mix(parts: Sequence[tuple[float, CQState]]) -> CQState:
    """Convex (or any nonnegative) combination of states with one layout."""
    parts = [(p, s) for p, s in parts if s is not None]
    first = parts[0][1]
    acc: dict[tuple, np.ndarray] = {}
    for p, s in parts:
        _check_layout(first, s)
        if p == 0:
            continue
        for k, m in s.blocks.items():
            prev = acc.get(k)
            acc[k] = p * m if prev is None else prev + p * m
    regs = list(first.registers)
    for _, s in parts[1:]:
        regs = [
            Register(r.name, alphabet=r.alphabet + tuple(v for v in o.alphabet if v not in r.alphabet))
            if r.is_classical else r
            for r, o in zip(regs, s.registers)
        ]
    return _finish(regs, acc)


# ---------------------------------------------------------------------------
# conditioning and distance


def condition_on_event(state: CQState, ev: EventPredicate) -> tuple[float, CQState]:
    """Return ``(Pr[ev], state | ev)``."""
    test = ev.bind(state)
    sel = {k: m for k, m in state.blocks.items() if test(k)}
    p = float(sum(np.trace(m).real for m in sel.values()))
    if p <= PRUNE:
        raise ZeroProbabilityEvent(f"event on {ev.names} has probability {p:.3g}")
    return p, CQState(state.registers, {k: m / p for k, m in sel.items()})


def condition(state: CQState, **values) -> tuple[float, CQState]:
    names = tuple(values)
    target = tuple(values.values())
    return condition_on_event(state, EventPredicate(names, lambda *a: a == target))


def trace_distance(a: CQState, b: CQState) -> float:
    """Half the trace norm of the difference; blockwise since classical parts are diagonal."""
    _check_layout(a, b)
    keys = list(a.blocks)
    keys += [k for k in b.blocks if k not in a.blocks]
    if not keys:
        return 0.0
    d = a.qdim
    if d == 1:
        za = np.array([a.blocks[k][0, 0].real if k in a.blocks else 0.0 for k in keys])
        zb = np.array([b.blocks[k][0, 0].real if k in b.blocks else 0.0 for k in keys])
        val = 0.5 * float(np.abs(za - zb).sum())
    else:
        zero = np.zeros((d, d), dtype=complex)
        diff = np.stack([a.blocks.get(k, zero) - b.blocks.get(k, zero) for k in keys])
        diff = (diff + diff.conj().transpose(0, 2, 1)) / 2
        val = 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())
    return min(max(val, 0.0), 1.0)


def statistical_distance(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# Markov chains


def _partition(state: CQState, left, pivot, right):
    left, pivot = tuple(left), tuple(pivot)
    if right is None:
        right = tuple(n for n in state.names if n not in left and n not in pivot)
    right = tuple(right)
    every = left + pivot + right
    for n in every:
        if not state.has(n):
            raise UnknownRegister(n)
    if len(set(every)) != len(every) or set(every) != set(state.names):
        raise PartitionError(f"{left} | {pivot} | {right} does not partition {state.names}")
    for n in left + pivot:
        if n not in state.classical_names:
            raise NonClassicalPivot(f"register {n!r} must be classical")
    return left, pivot, right


def markov_project(state: CQState, left: Sequence[str], pivot: Sequence[str],
                   right: Sequence[str] | None = None) -> CQState:
    """The state in which ``right`` depends on ``left`` only through ``pivot``.

    Keeps the joint law of ``left`` and ``pivot`` and replaces the ``right``
    part of every block by its average given the pivot value.
    """
    left, pivot, right = _partition(state, left, pivot, right)
    lp = [state.cindex(n) for n in left]
    pp = [state.cindex(n) for n in pivot]
    rp = [state.cindex(n) for n in right if n in state.classical_names]
    p_lp: dict[tuple, float] = {}
    p_p: dict[tuple, float] = {}
    cond: dict[tuple, dict[tuple, np.ndarray]] = defaultdict(dict)
    for k, m in state.blocks.items():
        tr = float(np.trace(m).real)
        x = tuple(k[i] for i in lp)
        y = tuple(k[i] for i in pp)
        e = tuple(k[i] for i in rp)
        p_lp[(x, y)] = p_lp.get((x, y), 0.0) + tr
        p_p[y] = p_p.get(y, 0.0) + tr
        slot = cond[y]
        slot[e] = slot[e] + m if e in slot else m
    ncl = len(state.classical_names)
    blocks = {}
    for (x, y), pxy in p_lp.items():
        py = p_p[y]
        if pxy <= PRUNE or py <= PRUNE:
            continue
        for e, m in cond[y].items():
            key = [None] * ncl
            for i, v in zip(lp, x):
                key[i] = v
            for i, v in zip(pp, y):
                key[i] = v
            for i, v in zip(rp, e):
                key[i] = v
            blocks[tuple(key)] = (pxy / py) * m
    return _finish(state.registers, blocks)


def markov_gap(state: CQState, left, pivot, right=None) -> float:
    return trace_distance(state, markov_project(state, left, pivot, right))


def extend_with_function(state: CQState, fn: Callable, args: Sequence[str], name: str,
                         alphabet: Sequence | None = None) -> CQState:
    """Append a classical register holding ``fn`` of the ``args`` registers."""
    if state.has(name):
        raise NameCollision(name)
    pos = [state.cindex(n) for n in args]
    alpha = tuple(alphabet) if alphabet is not None else ()
    allowed = set(alpha) if alphabet is not None else None
    blocks = {}
    for k, m in state.blocks.items():
        v = fn(*(k[i] for i in pos))
        if allowed is not None and v not in allowed:
            raise InvalidAssignment(f"{v!r} not in declared alphabet of {name!r}")
        blocks[k + (v,)] = m
    regs = list(state.registers)
    # the new classical register goes last among classical ones, and last overall
    regs.append(Register.classical(name, alpha))
    return _finish(regs, blocks)


def decompose_by_determined_event(state: CQState, left, pivot, ev: EventPredicate, right=None,
                                  tol: float = 1e-9):
    """Split by an event fixed by the pivot: ``(p, state | ev, state | not ev)``.

    Degenerate events return the whole state as the single branch (the other
    branch is ``None``).
    """
    left, pivot, right = _partition(state, left, pivot, right)
    pp = [state.cindex(n) for n in pivot]
    test = ev.bind(state)
    p_y: dict[tuple, float] = {}
    p_ey: dict[tuple, float] = {}
    for k, m in state.blocks.items():
        tr = float(np.trace(m).real)
        y = tuple(k[i] for i in pp)
        p_y[y] = p_y.get(y, 0.0) + tr
        if test(k):
            p_ey[y] = p_ey.get(y, 0.0) + tr
    for y, py in p_y.items():
        if py <= PRUNE:
            continue
        q = p_ey.get(y, 0.0) / py
        if tol < q < 1 - tol:
            raise EventNotDetermined(f"Pr[event | pivot={y}] = {q:.6g}")
    p = sum(p_ey.values())
    if p <= PRUNE:
        return 0.0, None, state
    if p >= 1 - PRUNE:
        return 1.0, state, None
    _, on = condition_on_event(state, ev)
    _, off = condition_on_event(state, ev.negate())
    return p, on, off


def lemma3_gap(state: CQState, left, pivot, ev: EventPredicate, right=None) -> float:
    """Distance between the Markov projection and its event-wise reconstruction."""
    p, on, off = decompose_by_determined_event(state, left, pivot, ev, right)
    whole = markov_project(state, left, pivot, right)
    parts = []
    if on is not None:
        parts.append((p, markov_project(on, left, pivot, right)))
    if off is not None:
        parts.append((1 - p, markov_project(off, left, pivot, right)))
    return trace_distance(whole, mix(parts))


@dataclass(frozen=True)
class Lemma1Gaps:
    eps1: float
    eps2: float
    eps_prod: float
    eps_markov: float
    eps_unif: float
    eps_markov_unif: float
    tau: float = TAU

    @property
    def claim1(self) -> bool:
        return self.eps2 <= 2 * self.eps1 + self.tau

    @property
    def claim2(self) -> bool:
        return self.eps_markov <= 2 * self.eps_prod + self.tau

    @property
    def claim3(self) -> bool:
        return self.eps_markov_unif <= 4 * self.eps_unif + self.tau

    @property
    def ok(self) -> bool:
        return self.claim1 and self.claim2 and self.claim3


def lemma1_gaps(state: CQState, x: Sequence[str], y: Sequence[str], z: Sequence[str],
                e: Sequence[str] | None = None, tau: float = TAU) -> Lemma1Gaps:
    x, y, z = tuple(x), tuple(y), tuple(z)
    x, _, e = _partition(state, x, y + z, e)
    eps1 = markov_gap(state, x, y, z + e)
    eps2 = markov_gap(state, x, y + z, e)
    xze = drop(state, y)
    order = xze.names
    rho_x = partial_trace(xze, x)
    rho_ze = drop(xze, x)
    prod = reorder(tensor(rho_x, rho_ze), order)
    unif = reorder(tensor(uniform_state(rho_x.registers), rho_ze), order)
    eps_markov = markov_gap(xze, x, z, e)
    return Lemma1Gaps(
        eps1=eps1,
        eps2=eps2,
        eps_prod=trace_distance(xze, prod),
        eps_markov=eps_markov,
        eps_unif=trace_distance(xze, unif),
        eps_markov_unif=eps_markov,
        tau=tau,
    )


def lemma2_gaps(state: CQState, x: Sequence[str], y: Sequence[str], fn: Callable,
                args: Sequence[str], name: str = "F") -> tuple[float, float]:
    """Markov gaps before and after appending ``fn(args)`` to the left side."""
    before = markov_gap(state, x, y)
    ext = extend_with_function(state, fn, args, name)
    after = markov_gap(ext, tuple(x) + (name,), y)
    return before, after


# ---------------------------------------------------------------------------
# random states and literals


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_cq_state(rng: np.random.Generator, classical: Sequence[tuple[str, int]],
                    quantum: Sequence[tuple[str, int]] = (), sparsity: float = 0.0) -> CQState:
    """Random state; classical alphabets are ``range(size)``.

    ``sparsity`` is the chance that an assignment gets zero weight.
    """
    regs = [Register.classical(n, range(s)) for n, s in classical]
    regs += [Register.quantum(n, d) for n, d in quantum]
    qdim = int(np.prod([d for _, d in quantum], dtype=int)) if quantum else 1
    keys = list(itertools.product(*(range(s) for _, s in classical)))
    w = rng.dirichlet(np.ones(len(keys)))
    if sparsity > 0:
        w = w * (rng.random(len(keys)) >= sparsity)
        if w.sum() == 0:
            w[rng.integers(len(keys))] = 1.0
        w = w / w.sum()
    blocks = {k: p * random_density(rng, qdim) for k, p in zip(keys, w) if p > 0}
    return _finish(regs, blocks)


def random_near_markov(rng: np.random.Generator, classical, quantum, left, pivot,
                       noise: float) -> CQState:
    """Markov state mixed with weight ``noise`` of an unstructured random state."""
    base = markov_project(random_cq_state(rng, classical, quantum), left, pivot)
    other = random_cq_state(rng, classical, quantum)
    return mix([(1 - noise, base), (noise, reorder(other, base.names))])


def matrix_from_literal(rows) -> np.ndarray:
    """Row-major nested lists of ``[re, im]`` pairs to a complex matrix."""
    a = np.asarray(rows, dtype=float)
    if a.ndim != 3 or a.shape[-1] != 2:
        raise DimensionMismatch("matrix literal must be rows of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def matrix_to_literal(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]
