import numpy as np
import pydot
import pytest
from hypothesis import given, settings, strategies as st

from autrl.core import Trace
from autrl.dfa import Dfa, dfa_empty, from_edges, product_index
from autrl.envs import make_env


@st.composite
def dfas(draw, max_states=4, max_alphabet=4):
    n = draw(st.integers(1, max_states))
    k = draw(st.integers(1, max_alphabet))
    delta = draw(st.lists(st.integers(0, n - 1), min_size=n * k, max_size=n * k))
    acc = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    return Dfa(np.array(delta).reshape(n, k), acc)


def words(k, max_len=8):
    return st.lists(st.integers(0, k - 1), max_size=max_len)


def test_empty_dfa_rejects_everything():
    d = dfa_empty(6)
    assert d.num_states == 1
    assert d.run([0, 3, 5, 1]) == (0, False)
    assert d.run([]) == (0, False)


def test_validation():
    with pytest.raises(ValueError, match="out of range"):
        Dfa([[0, 2]], [False])
    with pytest.raises(ValueError):
        Dfa([[0, 0]], [False, True])
    d = dfa_empty(2)
    with pytest.raises(ValueError):
        d.step(0, 2)
    with pytest.raises(AttributeError):
        d.delta = None
    with pytest.raises(ValueError):
        d.delta[0, 0] = 1


def test_bandit_chain():
    # 7-state chain plus a sink recognises the single rewarded pull sequence
    goal = (0, 1, 1, 0, 1, 0)
    delta = np.full((8, 2), 7)
    for i, a in enumerate(goal):
        delta[i, a] = i + 1
    delta[6] = 7
    d = Dfa(delta, [False] * 6 + [True, False])
    assert d.accepts(goal)
    assert not d.accepts(goal[:-1])
    assert not d.accepts((1,) + goal[1:])
    assert d.loop_count() == 1
    # pairs: 0->1,0->7, 1->2,1->7, ..., 5->6,5->7, 6->7
    assert d.cross_count() == 13


def test_loop_and_cross_counts_by_hand():
    d = Dfa([[0, 1, 1], [2, 1, 0], [2, 2, 2]], [False, False, True])
    assert d.loop_count() == 3
    assert d.cross_count() == 1 + 2


@settings(max_examples=100, deadline=None)
@given(d=dfas(), data=st.data())
def test_run_batch_matches_run(d, data):
    ws = data.draw(st.lists(words(d.alphabet_size), min_size=1, max_size=10))
    T = max(len(w) for w in ws) or 1
    syms = np.zeros((len(ws), T), dtype=np.int64)
    lengths = np.array([len(w) for w in ws])
    for i, w in enumerate(ws):
        syms[i, :len(w)] = w
    q = d.run_batch(syms, lengths)
    assert q.tolist() == [d.run(w)[0] for w in ws]


@settings(max_examples=100, deadline=None)
@given(d=dfas(), data=st.data())
def test_trim_preserves_language(d, data):
    t = d.trim()
    assert t.num_states == int(d.reachable().sum())
    assert t.reachable().all()
    for w in data.draw(st.lists(words(d.alphabet_size), max_size=20)):
        assert t.accepts(w) == d.accepts(w)


@settings(max_examples=100, deadline=None)
@given(d=dfas())
def test_text_roundtrip(d):
    back = Dfa.loads(d.dumps())
    assert back == d and hash(back) == hash(d)


@settings(max_examples=50, deadline=None)
@given(d=dfas())
def test_dot_parses_and_covers_every_transition(d):
    graphs = pydot.graph_from_dot_data(d.to_dot())
    assert len(graphs) == 1
    g = graphs[0]
    names = {n.get_name() for n in g.get_nodes()}
    assert {f"q{q}" for q in range(d.num_states)} <= names
    pairs = {(e.get_source(), e.get_destination()) for e in g.get_edges()}
    expected = {(f"q{q}", f"q{int(r)}") for q in range(d.num_states) for r in d.delta[q]}
    assert pairs - {("start", "q0")} == expected
    for q in range(d.num_states):
        shape = g.get_node(f"q{q}")[0].get("shape")
        assert shape == ("doublecircle" if d.accepting[q] else "circle")


def test_dot_uses_symbol_names():
    env = make_env("hallway")
    d = from_edges(2, env.num_symbols, {0: {env.encode(9, 0): 1}}, [1])
    text = d.to_dot(env.symbol_name)
    assert 'label="9:L"' in text
    assert 'label="o/w"' in text


def test_classification_error():
    d = from_edges(2, 2, {0: {1: 1}}, [1])
    traces = [Trace((1,), 1), Trace((0, 0), 0), Trace((0,), 1), Trace((0, 1), 0)]
    assert d.classification_error(traces) == pytest.approx(0.5)
    assert not d.is_consistent(traces)
    with pytest.raises(ValueError):
        d.classification_error([])


def test_loads_diagnostics(tmp_path):
    with pytest.raises(ValueError, match="header"):
        Dfa.loads("nope\n")
    with pytest.raises(ValueError, match=":3: index out of range"):
        Dfa.loads("dfa 1 1\nstate 0 0\nt 0 0 4\n")
    with pytest.raises(ValueError, match="missing transition"):
        Dfa.loads("dfa 1 2\nstate 0 0\nt 0 0 0\n")
    p = tmp_path / "x.dfa"
    p.write_text("dfa 1 1\nbogus\n")
    with pytest.raises(ValueError, match=str(p)):
        Dfa.load(p)


def test_product_index():
    assert product_index(3, 2, 5) == 17
