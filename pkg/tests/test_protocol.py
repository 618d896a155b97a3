import numpy as np
import pytest

from qcompose.cq import statistical_distance, trace_distance
from qcompose.errors import (
    BothSidesDishonest,
    DomainViolation,
    KrausNotTracePreserving,
    StrategyProtocolMismatch,
)
from qcompose.functionality import eval_functionality, f_12ot, f_id, point_mass_family
from qcompose.protocol import (
    cleartext_id,
    execute_protocol,
    fixed_input,
    ideal_protocol,
    kraus_protocol,
    last,
    make_leaky_ot,
    make_noisy_ideal,
    measure_step,
    quantum_storing,
    random_kraus_protocol,
    uniform_input,
)


def honest_dist(pi, P):
    return execute_protocol(pi, P).output.distribution(("U", "V", "X", "Y"))


@pytest.mark.parametrize("eps", [0.0, 0.01, 0.1])
def test_output_flip_moves_exactly_eps_mass(eps):
    F = f_id(4)
    pi = make_noisy_ideal(F, eps)
    for P in point_mass_family(F):
        d = statistical_distance(honest_dist(pi, P), eval_functionality(F, P))
        assert d == pytest.approx(eps, abs=1e-12)


def test_depolarized_view_is_perfectly_correct():
    F = f_id(3)
    pi = make_noisy_ideal(F, 0.2, "depolarize-adversary-view")
    for P in point_mass_family(F):
        assert statistical_distance(honest_dist(pi, P), eval_functionality(F, P)) == pytest.approx(0.0, abs=1e-12)


def test_dishonest_bob_transcript_and_layout():
    F = f_id(4)
    res = execute_protocol(ideal_protocol(F), {w: 0.25 for w in range(4)}, bob=fixed_input(1, side="bob"))
    assert res.dishonest == "bob" and res.honest_in == "U" and res.honest_out == "X"
    out = res.output
    assert out.names[:2] == ("U", "X")
    for key, p in out.weights().items():
        a = out.assignment(key)
        assert last(a["R"], "send") == 1
        assert last(a["R"], "recv") == int(a["U"] == 1)
        assert p == pytest.approx(0.25)


def test_at_most_one_dishonest_party():
    F = f_12ot(1)
    with pytest.raises(BothSidesDishonest):
        execute_protocol(ideal_protocol(F), {}, alice=fixed_input((0, 0)), bob=fixed_input(0))


def test_strategy_side_must_match():
    F = f_12ot(1)
    with pytest.raises(StrategyProtocolMismatch):
        execute_protocol(ideal_protocol(F), {0: 1.0}, alice=fixed_input(0, side="bob"))


def test_dishonest_message_outside_extended_domain():
    F = f_12ot(1)
    with pytest.raises(DomainViolation):
        execute_protocol(ideal_protocol(F), {0: 1.0}, alice=fixed_input("junk"))


def test_leaky_ot_reveals_choice():
    pi = make_leaky_ot("reveal-C-to-Alice", 1)
    res = execute_protocol(pi, {0: 0.5, 1: 0.5}, alice=uniform_input(f_12ot(1).honest_u, side="alice"))
    for key in res.output.weights():
        a = res.output.assignment(key)
        assert last(a["R"], "recv") == a["V"]


def test_cleartext_id_hands_password_to_server():
    res = execute_protocol(cleartext_id(4), {w: 0.25 for w in range(4)}, bob=fixed_input(0, side="bob"))
    for key in res.output.weights():
        a = res.output.assignment(key)
        assert last(a["R"], "recv") == a["U"]


def test_quantum_storing_keeps_reply_in_memory():
    F = f_12ot(1)
    strat = quantum_storing(fixed_input(0, side="bob"), (0, 1), 2)
    res = execute_protocol(ideal_protocol(F), {p: 0.25 for p in F.honest_u}, bob=strat)
    assert res.output.qdim == 2
    # the memory distinguishes the two received bits perfectly
    st0 = [m for k, m in res.output.blocks.items() if res.output.assignment(k)["U"][0] == 0]
    st1 = [m for k, m in res.output.blocks.items() if res.output.assignment(k)["U"][0] == 1]
    overlap = abs(np.trace(sum(st0) @ sum(st1)))
    assert overlap == pytest.approx(0.0, abs=1e-12)


def test_kraus_protocol_trace_preservation():
    F = f_12ot(1)
    bad = {(0, 0): [np.eye(2) * 0.5]}
    pi = kraus_protocol(F, bob_kraus=bad)
    strat = fixed_input(0, side="bob", qdim=2)
    with pytest.raises(KrausNotTracePreserving):
        execute_protocol(pi, {(0, 0): 1.0}, bob=strat)


def test_measure_step_rejects_non_tp_kraus():
    F = f_12ot(1)
    step = measure_step("m", [np.diag([1.0, 0.0])])
    strat = fixed_input(0, side="bob", qdim=2, finish=(step,))
    with pytest.raises(KrausNotTracePreserving):
        execute_protocol(ideal_protocol(F), {(0, 0): 1.0}, bob=strat)


def test_random_kraus_protocol_is_deterministic_per_seed():
    a, b = random_kraus_protocol(7), random_kraus_protocol(7)
    strat = fixed_input(None, side="bob", qdim=2)
    ra = execute_protocol(a, {0: 0.5, 1: 0.5}, bob=strat)
    rb = execute_protocol(b, {0: 0.5, 1: 0.5}, bob=strat)
    assert trace_distance(ra.output, rb.output) == pytest.approx(0.0, abs=1e-15)
