"""Independent reference computations used to pin expected values in tests.

These use plain dictionaries and exact fractions only; nothing here imports
the package under test.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction


def tv(p: dict, q: dict):
    keys = set(p) | set(q)
    return sum(abs(p.get(k, 0) - q.get(k, 0)) for k in keys) / 2


def marginal(joint: dict, idx) -> dict:
    out = defaultdict(int)
    for k, w in joint.items():
        out[tuple(k[i] for i in idx)] += w
    return dict(out)


def markov_distance(joint: dict, left, pivot, right):
    """Distance of a classical joint from ``P_{left pivot} P_{right | pivot}``."""
    lp = marginal(joint, left + pivot)
    pr = marginal(joint, pivot + right)
    pv = marginal(joint, pivot)
    approx = {}
    for a, wa in lp.items():
        piv = a[len(left):]
        for b, wb in pr.items():
            if b[:len(pivot)] == piv:
                approx[a + b[len(pivot):]] = wa * wb / pv[piv]
    full = {tuple(k[i] for i in left + pivot + right): w for k, w in joint.items()}
    return tv(full, approx)


def leaky_ot_sender_optimum(exact: bool = False):
    """Best witness for a sender facing a 1-2 OT that reveals the choice bit.

    Bob's choice ``C`` is uniform, the sender submits a uniform pair of bits,
    Bob outputs ``s_C`` and the sender sees ``C``.  Over every table from the
    sender's view ``(pair, C)`` to a substitute input ``U'``, minimize the
    worst of independence, correctness of ``Y`` given ``(U', C)`` and the
    Markov condition ``(C, Y) <-> U' <-> view``.
    """
    pairs = list(itertools.product((0, 1), repeat=2))
    views = [(m, c) for m in pairs for c in (0, 1)]
    weight = Fraction(1, 8) if exact else 1 / 8
    best = None
    for table in itertools.product(range(4), repeat=len(views)):
        u_of = {v: pairs[i] for v, i in zip(views, table)}
        # keys: (c, y, u', view)
        joint = {}
        for (m, c) in views:
            joint[(c, m[c], u_of[(m, c)], (m, c))] = weight
        indep = tv(marginal(joint, (2, 0)),
                   {(u, c): a * b for (u,), a in marginal(joint, (2,)).items()
                    for (c,), b in marginal(joint, (0,)).items()})
        uc = marginal(joint, (2, 0))
        ideal = {(u, c, u[c]): w for (u, c), w in uc.items()}
        func = tv(marginal(joint, (2, 0, 1)), ideal)
        mk = markov_distance(joint, (0, 1), (2,), (3,))
        worst = max(indep, func, mk)
        if best is None or worst < best:
            best = worst
    return best


def cleartext_id_independence(n_passwords: int) -> Fraction:
    """Distance of ``(W, W)`` from ``P_W x P_W`` for uniform ``W``."""
    n = n_passwords
    joint = {(w, w): Fraction(1, n) for w in range(n)}
    prod = {(a, b): Fraction(1, n * n) for a in range(n) for b in range(n)}
    return tv(joint, prod)
