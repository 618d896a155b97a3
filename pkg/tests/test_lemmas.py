import numpy as np
import pytest

from qcompose.errors import ParameterOutOfRange
from qcompose.lemmas import SHAPES, random_lemma_state, run_lemma_suite, run_metric_suite


def test_random_lemma_state_layout():
    rng = np.random.default_rng(0)
    for _ in range(20):
        shape, st = random_lemma_state(rng)
        assert shape in SHAPES
        assert st.names == ("X", "Y", "Z", "E")
        assert st.total() == pytest.approx(1.0)
        assert all(2 <= len(st.register(n).alphabet) <= 4 for n in "XYZ")
        assert 2 <= st.qdim <= 4


def test_small_lemma_suite():
    rep = run_lemma_suite(40, seed=3)
    assert rep.passed
    assert sum(rep.shapes.values()) == 40
    assert rep.worst["lemma2"] <= 1e-9
    assert rep.worst["lemma3"] <= 1e-10
    d = rep.to_dict()
    assert d["passed"] is True and d["n_states"] == 40


def test_suite_is_seeded():
    assert run_lemma_suite(10, seed=1).worst == run_lemma_suite(10, seed=1).worst


def test_suite_parameter_checks():
    with pytest.raises(ParameterOutOfRange):
        run_lemma_suite(0)
    with pytest.raises(ParameterOutOfRange):
        run_lemma_suite(5, max_alphabet=20)


def test_small_metric_suite():
    rep = run_metric_suite(30, seed=2)
    assert rep.passed
    assert rep.worst_triangle <= 1e-9
    assert rep.worst_monotonicity <= 1e-9
    assert rep.to_dict()["n_triples"] == 30
