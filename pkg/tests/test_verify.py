import numpy as np
import pytest

from oracles import cleartext_id_independence, leaky_ot_sender_optimum
from qcompose.cq import Register, make_cq_state
from qcompose.errors import BudgetZero, DefinitionProtocolMismatch, PreconditionViolated, WitnessDomainError
from qcompose.functionality import f_12ot, f_12rot, f_id, f_id_strict
from qcompose.protocol import (
    cleartext_id,
    execute_protocol,
    fixed_input,
    ideal_protocol,
    make_leaky_ot,
    make_noisy_ideal,
    random_input,
    uniform_input,
)
from qcompose.verify import (
    REDUCTION_FACTOR,
    SecurityReport,
    Witness,
    check_correctness,
    check_security_witness,
    check_side_info_closure,
    check_specialized,
    exported_spec_witness,
    reduce_specialized,
    search_security_witness,
    simulation_distance,
)


def exported(pi, side):
    return Witness(pi.exported_witness(side), "exported")


def run(pi, inputs, side, strat):
    return execute_protocol(pi, inputs, **{side: strat})


def test_ideal_protocol_is_perfect_for_a_guessing_server():
    F = f_id(4)
    pi = ideal_protocol(F)
    res = run(pi, {w: 0.25 for w in range(4)}, "bob", uniform_input(range(4), side="bob"))
    rep = check_security_witness(res, F, exported(pi, "bob"))
    assert rep.protects == "alice"
    assert set(rep.eps) == {"independence", "functional", "markov"}
    assert rep.eps_max == pytest.approx(0.0, abs=1e-12)
    assert check_correctness(pi, F).eps_max == pytest.approx(0.0, abs=1e-12)


def test_cleartext_identification_independence_matches_oracle():
    pi = cleartext_id(4)
    res = run(pi, {w: 0.25 for w in range(4)}, "bob", fixed_input(0, side="bob"))
    rep = check_security_witness(res, pi.functionality, exported(pi, "bob"))
    assert rep.eps["independence"] == pytest.approx(float(cleartext_id_independence(4)), abs=1e-9)


def test_leaky_ot_exhaustive_search_matches_oracle():
    pi = make_leaky_ot("reveal-C-to-Alice", 1)
    F = pi.functionality
    res = run(pi, {0: 0.5, 1: 0.5}, "alice", uniform_input(F.honest_u, side="alice"))
    w, rep = search_security_witness(res, F, "alice", budget=10 ** 6, seed=0)
    assert rep.exhaustive is True
    assert rep.eps_max == pytest.approx(0.25, abs=1e-9)
    assert check_security_witness(res, F, w, "alice").eps_max == pytest.approx(rep.eps_max, abs=1e-12)


@pytest.mark.slow
def test_leaky_ot_oracle_value():
    assert leaky_ot_sender_optimum() == pytest.approx(0.25, abs=1e-12)


def test_search_budget_must_be_positive():
    F = f_12ot(1)
    res = run(ideal_protocol(F), {0: 1.0}, "alice", fixed_input((0, 0), side="alice"))
    with pytest.raises(BudgetZero):
        search_security_witness(res, F, "alice", budget=0)


def test_small_budget_falls_back_to_hill_climbing():
    pi = make_leaky_ot("reveal-C-to-Alice", 1)
    F = pi.functionality
    res = run(pi, {0: 0.5, 1: 0.5}, "alice", uniform_input(F.honest_u, side="alice"))
    _, rep = search_security_witness(res, F, "alice", budget=200, seed=3)
    assert rep.exhaustive is False
    assert rep.eps_max >= 0.25 - 1e-9


def test_witness_table_domain():
    F = f_12ot(1)
    res = run(ideal_protocol(F), {(0, 1): 1.0}, "bob", fixed_input(0, side="bob"))
    with pytest.raises(WitnessDomainError):
        check_security_witness(res, F, Witness.from_table({}), "bob")


@pytest.mark.parametrize("eps", [0.01, 0.1])
def test_noisy_ideal_measured_at_eps_and_simulation_within_three_eps(eps):
    F = f_12rot(1)
    pi = make_noisy_ideal(F, eps)
    strat = fixed_input((1, 0), side="bob")
    res = run(pi, {None: 1.0}, "bob", strat)
    rep = check_security_witness(res, F, exported(pi, "bob"))
    assert rep.eps_max <= eps + 1e-7
    assert simulation_distance(res, {None: 1.0}, F, exported(pi, "bob")) <= 3 * rep.eps_max + 1e-7


def test_side_information_closure_on_ideal_protocol():
    F = f_id(2)
    regs = [Register.classical("U", (0, 1)), Register.classical("S", (0, 1)), Register.classical("Z", (0, 1))]
    # S copies U, Z is independent noise: no adversary quantum input
    rho = make_cq_state(regs, {(u, u, z): [[0.25]] for u in (0, 1) for z in (0, 1)})
    strat = random_input({0: 0.5, 1: 0.5}, side="bob")
    rep = check_side_info_closure(ideal_protocol(F), rho, F, strat, exported(ideal_protocol(F), "bob"))
    assert rep.eps_max == pytest.approx(0.0, abs=1e-12)
    assert rep.extra["side_info"] == ["S", "Z"]


def test_side_information_precondition():
    F = f_id(2)
    regs = [Register.classical("U", (0, 1)), Register.classical("Z", (0,)), Register.quantum("Q", 2)]
    blocks = {(u, 0): 0.5 * np.diag([1.0 - u, float(u)]) for u in (0, 1)}
    rho = make_cq_state(regs, blocks)
    strat = fixed_input(0, side="bob", qdim=2)
    with pytest.raises(PreconditionViolated):
        check_side_info_closure(ideal_protocol(F), rho, F, strat, exported(ideal_protocol(F), "bob"))


def test_specialized_definition_must_match_protocol():
    res = execute_protocol(ideal_protocol(f_12ot(1)), {((0, 0), 0): 1.0})
    with pytest.raises(DefinitionProtocolMismatch):
        check_specialized("ident", res)


def test_reduction_factors():
    assert REDUCTION_FACTOR == {"ident": 3, "rot": 4, "ot": 3, "ok": 4, "rabin": 5, "ident_strict": 1}


@pytest.mark.parametrize("eps", [0.0, 0.05])
def test_identification_reduction_for_dishonest_user(eps):
    F = f_id(4)
    pi = make_noisy_ideal(F, eps)
    strat = random_input({(1, 0): 0.5, (2, 1): 0.5}, side="alice")
    res = run(pi, {w: 0.25 for w in range(4)}, "alice", strat)
    sw = exported_spec_witness("ident", "alice")
    spec = check_specialized("ident", res, sw)
    assert spec.eps_max <= eps + 1e-7
    w, bound = reduce_specialized("ident", "alice", sw, spec.eps_max, res)
    assert bound == pytest.approx(3 * spec.eps_max)
    assert check_security_witness(res, F, w, "alice").eps_max <= bound + 1e-7


def test_strict_identification_reduction_for_dishonest_server():
    F = f_id_strict(4)
    pi = make_noisy_ideal(F, 0.05)
    res = run(pi, {w: 0.25 for w in range(4)}, "bob", uniform_input(range(4), side="bob"))
    sw = exported_spec_witness("ident_strict", "bob")
    spec = check_specialized("ident_strict", res, sw)
    w, bound = reduce_specialized("ident_strict", "bob", sw, spec.eps_max, res)
    assert check_security_witness(res, F, w, "bob").eps_max <= bound + 1e-7


def test_report_serialization():
    rep = SecurityReport("alice", {"independence": 0.1, "markov": 1 / 3}, "w")
    d = rep.to_dict()
    assert d["eps_max"] == pytest.approx(1 / 3)
    assert rep.passes(1 / 3) and not rep.passes(0.3)
