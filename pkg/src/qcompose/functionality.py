"""Classical non-reactive ideal functionalities with extended dishonest domains.

A functionality is a table ``(u, v) -> {(x, y): p}`` defined on the extended
domains.  Honest parties draw inputs from the honest domains only.  Values
follow a few conventions shared by the whole package:

* ``None`` stands for "no input" or "no output";
* ``BOT`` is the rejecting symbol of the strict identification variant;
* bit strings of length ``l`` are integers ``0 .. 2**l - 1``;
* pairs of strings are tuples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .cq import TAU_NORM, CQState, Register, make_cq_state
from .errors import DomainViolation, ParameterOutOfRange, UnknownFunctionality

BOT = "⊥"

MAX_STRING_BITS = 3
MAX_PASSWORDS = 8


@dataclass(frozen=True)
class Functionality:
    name: str
    honest_u: tuple
    honest_v: tuple
    ext_u: tuple
    ext_v: tuple
    table: Mapping[tuple, Mapping[tuple, float]] = field(repr=False)
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for h, e, side in ((self.honest_u, self.ext_u, "U"), (self.honest_v, self.ext_v, "V")):
            missing = [a for a in h if a not in e]
            if missing:
                raise ValueError(f"{self.name}: honest {side} values {missing} not in extended domain")
        frozen = {}
        for u in self.ext_u:
            for v in self.ext_v:
                row = self.table.get((u, v))
                if row is None:
                    raise ValueError(f"{self.name}: kernel undefined on {(u, v)!r}")
                s = sum(row.values())
                if abs(s - 1.0) > TAU_NORM or any(p < 0 for p in row.values()):
                    raise ValueError(f"{self.name}: row {(u, v)!r} sums to {s!r}")
                frozen[(u, v)] = MappingProxyType(dict(row))
        object.__setattr__(self, "table", MappingProxyType(frozen))
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    def row(self, u, v) -> Mapping[tuple, float]:
        try:
            return self.table[(u, v)]
        except KeyError:
            raise DomainViolation(f"{self.name}: input {(u, v)!r} outside the extended domains") from None

    def x_alphabet(self) -> tuple:
        return _ordered(xy[0] for row in self.table.values() for xy in row)

    def y_alphabet(self) -> tuple:
        return _ordered(xy[1] for row in self.table.values() for xy in row)

    def honest_x_alphabet(self) -> tuple:
        return _ordered(xy[0] for (u, v), row in self.table.items()
                        if u in self.honest_u and v in self.honest_v for xy in row)

    def honest_y_alphabet(self) -> tuple:
        return _ordered(xy[1] for (u, v), row in self.table.items()
                        if u in self.honest_u and v in self.honest_v for xy in row)


def _ordered(values) -> tuple:
    seen = {}
    for v in values:
        seen.setdefault(v, None)
    return tuple(seen)


def _table(ext_u, ext_v, fn: Callable[[Any, Any], Mapping[tuple, float]]) -> dict:
    out = {}
    for u in ext_u:
        for v in ext_v:
            row: dict[tuple, float] = {}
            for xy, p in fn(u, v).items():
                if p > 0:
                    row[xy] = row.get(xy, 0.0) + p
            out[(u, v)] = row
    return out


# ---------------------------------------------------------------------------
# builtins


def _check_params(n_passwords: int, ell: int) -> None:
    if not 1 <= ell <= MAX_STRING_BITS:
        raise ParameterOutOfRange(f"string length {ell} outside 1..{MAX_STRING_BITS}")
    if not 2 <= n_passwords <= MAX_PASSWORDS:
        raise ParameterOutOfRange(f"password alphabet size {n_passwords} outside 2..{MAX_PASSWORDS}")


def f_id(n_passwords: int = 4) -> Functionality:
    """Identification with an override bit ``D`` for a dishonest user."""
    W = tuple(range(n_passwords))
    ext_u = W + tuple((w, d) for w in W for d in (0, 1))

    def k(u, v):
        if isinstance(u, tuple):
            w, d = u
            eq = int(w == v)
            return {(eq, eq & d): 1.0}
        return {(None, int(u == v)): 1.0}

    return Functionality("f_id", W, W, ext_u, W, _table(ext_u, W, k), {"n_passwords": n_passwords})


def f_id_strict(n_passwords: int = 4) -> Functionality:
    """Identification without override; a dishonest user may submit ``BOT``.

    Dishonest inputs are ``(w, 1)`` (the user also receives the decision) or
    ``BOT``, so the rows line up with the ``D = 1`` rows of :func:`f_id`.
    """
    W = tuple(range(n_passwords))
    ext_u = W + tuple((w, 1) for w in W) + (BOT,)

    def k(u, v):
        if u == BOT:
            return {(0, 0): 1.0}
        if isinstance(u, tuple):
            eq = int(u[0] == v)
            return {(eq, eq): 1.0}
        return {(None, int(u == v)): 1.0}

    return Functionality("f_id_strict", W, W, ext_u, W, _table(ext_u, W, k), {"n_passwords": n_passwords})


def _strings(ell: int) -> tuple:
    return tuple(range(2 ** ell))


def f_12ot(ell: int = 2) -> Functionality:
    S = _strings(ell)
    U = tuple(itertools.product(S, S))

    def k(u, c):
        return {(None, u[c]): 1.0}

    return Functionality("f_12ot", U, (0, 1), U, (0, 1), _table(U, (0, 1), k), {"ell": ell})


def _pairs_with(S, c, s):
    """All ``(s0, s1)`` with ``s_c = s``, uniform over the other string."""
    q = 1.0 / len(S)
    return {((s, t) if c == 0 else (t, s)): q for t in S}


def f_12rot(ell: int = 2) -> Functionality:
    """Sender-randomized 1-2 OT."""
    S = _strings(ell)
    pairs = tuple(itertools.product(S, S))
    ext_u = (None,) + pairs
    ext_v = (0, 1) + tuple((c, s) for c in (0, 1) for s in S)
    q = 1.0 / len(pairs)

    def k(u, v):
        if u is None and not isinstance(v, tuple):
            return {((s0, s1), (s0, s1)[v]): q for s0, s1 in pairs}
        if u is None:
            c, s = v
            return {(x, None): p for x, p in _pairs_with(S, c, s).items()}
        if not isinstance(v, tuple):
            return {(None, u[v]): 1.0}
        # both sides outside the honest domain: Alice's strings win
        return {(None, None): 1.0}

    return Functionality("f_12rot", (None,), (0, 1), ext_u, ext_v, _table(ext_u, ext_v, k), {"ell": ell})


def f_12ok(ell: int = 2) -> Functionality:
    """Fully randomized 1-2 OT; Bob's output is ``(C, S_C)``."""
    S = _strings(ell)
    pairs = tuple(itertools.product(S, S))
    ext_u = (None,) + pairs
    ext_v = (None,) + tuple((c, s) for c in (0, 1) for s in S)
    q = 1.0 / (2 * len(pairs))

    def k(u, v):
        if u is None and v is None:
            return {((s0, s1), (c, (s0, s1)[c])): q for s0, s1 in pairs for c in (0, 1)}
        if u is None:
            c, s = v
            return {(x, None): p for x, p in _pairs_with(S, c, s).items()}
        if v is None:
            return {(None, (c, u[c])): 0.5 for c in (0, 1)}
        return {(None, None): 1.0}

    return Functionality("f_12ok", (None,), (None,), ext_u, ext_v, _table(ext_u, ext_v, k), {"ell": ell})


def f_rabin(ell: int = 2) -> Functionality:
    """Randomized Rabin OT; Bob's output is ``(C, C * S)``."""
    S = _strings(ell)
    ext_u = (None,) + S
    ext_v = (None,) + S
    q = 1.0 / (2 * len(S))

    def k(u, v):
        if u is None and v is None:
            return {(s, (c, c * s)): q for s in S for c in (0, 1)}
        if u is None:
            out: dict[tuple, float] = {(v, (1, v)): 0.5}
            for s2 in S:
                out[(s2, (0, 0))] = out.get((s2, (0, 0)), 0.0) + 0.5 / len(S)
            return out
        if v is None:
            return {(None, (c, c * u)): 0.5 for c in (0, 1)}
        return {(None, None): 1.0}

    return Functionality("f_rabin", (None,), (None,), ext_u, ext_v, _table(ext_u, ext_v, k), {"ell": ell})


BUILTINS: dict[str, Callable[..., Functionality]] = {
    "f_id": f_id,
    "f_id_strict": f_id_strict,
    "f_12ot": f_12ot,
    "f_12rot": f_12rot,
    "f_12ok": f_12ok,
    "f_rabin": f_rabin,
}

_PASSWORD_BASED = {"f_id", "f_id_strict"}


def get_builtin(name: str, n_passwords: int = 4, ell: int = 2) -> Functionality:
    """Builtin functionality by name; ``n_passwords`` and ``ell`` as applicable."""
    if name not in BUILTINS:
        raise UnknownFunctionality(name)
    _check_params(n_passwords, ell)
    if name in _PASSWORD_BASED:
        return BUILTINS[name](n_passwords)
    return BUILTINS[name](ell)


def custom_functionality(name: str, honest_u, honest_v, ext_u, ext_v,
                         rows: Mapping[tuple, Mapping[tuple, float]]) -> Functionality:
    """Functionality from an explicit kernel table."""
    return Functionality(name, tuple(honest_u), tuple(honest_v), tuple(ext_u), tuple(ext_v), dict(rows))


# ---------------------------------------------------------------------------
# evaluation


def _normalize_inputs(F: Functionality, P_UV: Mapping) -> dict[tuple, float]:
    total = 0.0
    out = {}
    for (u, v), p in P_UV.items():
        if p < 0:
            raise DomainViolation(f"negative probability for {(u, v)!r}")
        if p == 0:
            continue
        if u not in F.honest_u or v not in F.honest_v:
            raise DomainViolation(f"{F.name}: honest input {(u, v)!r} outside the honest domains")
        out[(u, v)] = out.get((u, v), 0.0) + p
        total += p
    if abs(total - 1.0) > TAU_NORM:
        raise DomainViolation(f"input distribution sums to {total!r}")
    return out


def eval_functionality(F: Functionality, P_UV: Mapping) -> dict[tuple, float]:
    """Joint distribution ``P_UVXY`` keyed by ``(u, v, x, y)``."""
    out: dict[tuple, float] = {}
    for (u, v), p in _normalize_inputs(F, P_UV).items():
        for (x, y), q in F.row(u, v).items():
            key = (u, v, x, y)
            out[key] = out.get(key, 0.0) + p * q
    return out


def joint_to_state(names: Sequence[str], dist: Mapping[tuple, float],
                   alphabets: Mapping[str, Sequence] | None = None) -> CQState:
    """Purely classical CQState from a joint distribution over ``names``."""
    alphabets = alphabets or {}
    regs = []
    for j, n in enumerate(names):
        alpha = list(alphabets.get(n, ()))
        known = set(alpha)
        for k in dist:
            if k[j] not in known:
                known.add(k[j])
                alpha.append(k[j])
        regs.append(Register.classical(n, alpha))
    return make_cq_state(regs, {k: np.array([[p]]) for k, p in dist.items() if p > 0})


def point_mass_family(F: Functionality) -> list[dict[tuple, float]]:
    """All point masses on the honest domains, followed by the uniform distribution."""
    cells = [(u, v) for u in F.honest_u for v in F.honest_v]
    fam = [{c: 1.0} for c in cells]
    fam.append({c: 1.0 / len(cells) for c in cells})
    return fam


def uniform_inputs(F: Functionality) -> dict[tuple, float]:
    return point_mass_family(F)[-1]


def ideal_life_execute(F: Functionality, inputs, alice=None, bob=None):
    """Run the ideal-life protocol of ``F``; see :func:`qcompose.protocol.execute_protocol`."""
    from .protocol import execute_protocol, ideal_protocol

    return execute_protocol(ideal_protocol(F), inputs, alice=alice, bob=bob)
