import numpy as np
import pytest

from qcompose.cq import (
    EventPredicate,
    Register,
    classical_state,
    condition,
    condition_on_event,
    density,
    drop,
    lemma1_gaps,
    lemma2_gaps,
    lemma3_gap,
    make_cq_state,
    markov_gap,
    markov_project,
    matrix_from_literal,
    matrix_to_literal,
    mix,
    partial_trace,
    random_cq_state,
    random_near_markov,
    rename,
    reorder,
    statistical_distance,
    tensor,
    trace_distance,
    uniform_state,
)
from qcompose.errors import (
    DimensionMismatch,
    EventNotDetermined,
    InvalidAssignment,
    NameCollision,
    NonClassicalPivot,
    NonPSDBlock,
    NormalizationError,
    UnknownRegister,
    ZeroProbabilityEvent,
)

PLUS = np.array([1, 1]) / np.sqrt(2)


def bit_with_qubit(encode_plus: bool):
    """X uniform; E = |0> for x = 0 and |1> or |+> for x = 1."""
    regs = [Register.classical("X", (0, 1)), Register.quantum("E", 2)]
    one = density(PLUS) if encode_plus else density([0, 1])
    return make_cq_state(regs, {(0,): 0.5 * density([1, 0]), (1,): 0.5 * one})


def test_register_kind_is_exclusive():
    with pytest.raises(ValueError):
        Register("A", alphabet=(0,), dim=2)
    with pytest.raises(ValueError):
        Register("A")
    with pytest.raises(ValueError):
        Register.classical("A", (0, 0))


def test_make_cq_state_validation():
    regs = [Register.classical("X", (0, 1))]
    with pytest.raises(NormalizationError):
        make_cq_state(regs, {(0,): [[0.4]]})
    with pytest.raises(InvalidAssignment):
        make_cq_state(regs, {(2,): [[1.0]]})
    with pytest.raises(NameCollision):
        make_cq_state(regs + regs, {(0, 0): [[1.0]]})
    with pytest.raises(NonPSDBlock):
        make_cq_state([Register.quantum("E", 2)], {(): [[1.5, 0], [0, -0.5]]})
    with pytest.raises(DimensionMismatch):
        make_cq_state([Register.quantum("E", 2)], {(): [[1.0]]})


def test_distribution_and_marginals():
    st = classical_state(("A", "B"), {(0, 0): 0.5, (1, 1): 0.25, (1, 0): 0.25})
    assert st.distribution(("A",)) == {(0,): 0.5, (1,): 0.5}
    assert partial_trace(st, ("B",)).distribution(("B",)) == pytest.approx({(0,): 0.75, (1,): 0.25})
    assert drop(st, ("A",)).names == ("B",)
    with pytest.raises(UnknownRegister):
        st.distribution(("C",))


def test_trace_distance_of_orthogonal_and_overlapping_encodings():
    a, b = bit_with_qubit(False), bit_with_qubit(True)
    # the states differ only in the x = 1 block: half of |1><1| vs |+><+|
    expected = 0.5 * np.sqrt(1 - abs(PLUS @ np.array([0, 1])) ** 2)
    assert trace_distance(a, b) == pytest.approx(expected, abs=1e-12)
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-12)


def test_trace_distance_classical_matches_total_variation():
    p = {(0,): 0.2, (1,): 0.8}
    q = {(0,): 0.6, (1,): 0.4}
    d = trace_distance(classical_state(("A",), p), classical_state(("A",), q, {"A": (0, 1)}))
    assert d == pytest.approx(statistical_distance(p, q)) == pytest.approx(0.4)


def test_partial_trace_of_quantum_register_is_classical_marginal():
    st = partial_trace(bit_with_qubit(True), ("X",))
    assert st.quantum_names == ()
    assert st.distribution(("X",)) == pytest.approx({(0,): 0.5, (1,): 0.5})


def test_reorder_rename_tensor_round_trip():
    rng = np.random.default_rng(1)
    a = random_cq_state(rng, [("X", 2)], [("E", 2)])
    b = random_cq_state(rng, [("Y", 3)])
    t = tensor(a, b)
    assert t.names == ("X", "E", "Y")
    back = reorder(reorder(t, ("Y", "E", "X")), t.names)
    assert trace_distance(t, back) == pytest.approx(0.0, abs=1e-12)
    assert rename(b, {"Y": "Z"}).names == ("Z",)


def test_conditioning():
    st = classical_state(("A", "B"), {(0, 0): 0.5, (1, 1): 0.25, (1, 0): 0.25})
    p, c = condition(st, A=1)
    assert p == pytest.approx(0.5)
    assert c.distribution(("B",)) == pytest.approx({(1,): 0.5, (0,): 0.5})
    with pytest.raises(ZeroProbabilityEvent):
        condition_on_event(st, EventPredicate(("A",), lambda a: a == 5))


def test_mix_weights():
    a = classical_state(("A",), {(0,): 1.0}, {"A": (0, 1)})
    b = classical_state(("A",), {(1,): 1.0}, {"A": (0, 1)})
    assert mix([(0.3, a), (0.7, b)]).distribution(("A",)) == pytest.approx({(0,): 0.3, (1,): 0.7})


def test_markov_gap_zero_for_markov_projection():
    rng = np.random.default_rng(2)
    st = random_cq_state(rng, [("X", 2), ("Y", 3)], [("E", 2)])
    proj = markov_project(st, ("X",), ("Y",))
    assert markov_gap(proj, ("X",), ("Y",)) == pytest.approx(0.0, abs=1e-12)
    assert markov_gap(st, ("X",), ("Y",)) > 1e-3


def test_markov_gap_needs_classical_pivot():
    with pytest.raises(NonClassicalPivot):
        markov_gap(bit_with_qubit(True), ("X",), ("E",))


def test_markov_gap_of_copy_without_pivot_information():
    # X uniform bit copied into E, pivot Y independent: gap is the distance to X x E
    st = classical_state(("X", "Y", "E"), {(x, 0, x): 0.5 for x in (0, 1)})
    assert markov_gap(st, ("X",), ("Y",)) == pytest.approx(0.5)


def test_uniform_state():
    u = uniform_state([Register.classical("A", (0, 1, 2)), Register.quantum("E", 2)])
    assert u.distribution(("A",)) == pytest.approx({(a,): 1 / 3 for a in range(3)})
    assert np.allclose(u.blocks[(0,)], np.eye(2) / 6)


def test_lemmas_on_a_single_near_markov_state():
    rng = np.random.default_rng(5)
    st = random_near_markov(rng, [("X", 2), ("Y", 2), ("Z", 3)], [("E", 2)], ("X",), ("Y",), 0.1)
    g = lemma1_gaps(st, ("X",), ("Y",), ("Z",), ("E",))
    assert g.ok
    before, after = lemma2_gaps(st, ("X",), ("Y", "Z"), lambda x, y, z: (x + y + z) % 2, ("X", "Y", "Z"))
    assert before == pytest.approx(after, abs=1e-9)
    ev = EventPredicate(("Y", "Z"), lambda y, z: y == z)
    assert lemma3_gap(st, ("X",), ("Y", "Z"), ev) <= 1e-10


def test_matrix_literal_round_trip():
    m = np.array([[0.5, 0.25j], [-0.25j, 0.5]])
    assert np.allclose(matrix_from_literal(matrix_to_literal(m)), m)


def test_event_reconstruction_fails_for_events_not_fixed_by_the_pivot():
    # X a uniform bit, constant pivot Y, E a qubit copy of X; event X = 0
    regs = [Register.classical("X", (0, 1)), Register.classical("Y", (0,)), Register.quantum("E", 2)]
    st = make_cq_state(regs, {(x, 0): 0.5 * density(np.eye(2)[x]) for x in (0, 1)})
    ev = EventPredicate(("X",), lambda x: x == 0)
    with pytest.raises(EventNotDetermined):
        lemma3_gap(st, ("X",), ("Y",), ev)
    p, on = condition_on_event(st, ev)
    _, off = condition_on_event(st, ev.negate())
    rebuilt = mix([(p, markov_project(on, ("X",), ("Y",))), (1 - p, markov_project(off, ("X",), ("Y",)))])
    assert trace_distance(markov_project(st, ("X",), ("Y",)), rebuilt) == pytest.approx(0.5, abs=1e-12)
