import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from autrl import _search
from autrl.core import Trace
from autrl.dfa import Dfa
from autrl.learner import DfaClassifier, LearnerConfig, TraceTree, aut_learn, best_of, objective

from oracles import brute_objective, exhaustive_optimum


@st.composite
def instances(draw, k=3, max_states=3):
    n = draw(st.integers(1, max_states))
    delta = np.array(draw(st.lists(st.integers(0, n - 1), min_size=n * k, max_size=n * k)))
    acc = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    traces = draw(st.lists(
        st.builds(Trace, st.lists(st.integers(0, k - 1), max_size=6).map(tuple),
                  st.integers(0, 1)),
        min_size=1, max_size=25))
    return Dfa(delta.reshape(n, k), acc), traces


@settings(max_examples=150, deadline=None)
@given(inst=instances(), prefix=st.booleans(),
       lam=st.tuples(st.sampled_from([0.0, 0.01, 0.3]), st.sampled_from([0.0, 0.01, 0.6])))
def test_search_kernel_matches_brute_force(inst, prefix, lam):
    dfa, traces = inst
    cfg = LearnerConfig(max_states=3, loop_penalty=lam[0], transition_penalty=lam[1],
                        prefix_negatives=prefix)
    tree = TraceTree(traces, dfa.alphabet_size, prefix)
    mass, loops, cross = tree.evaluate(dfa)
    want = brute_objective(dfa.delta, dfa.accepting, traces, *lam, prefix_negatives=prefix)
    got = mass + lam[0] * loops + lam[1] * cross
    assert got == pytest.approx(want, abs=1e-9)
    # on a trimmed DFA every state is reachable, so both counts agree
    t = dfa.trim()
    assert objective(t, traces, cfg).total == pytest.approx(
        brute_objective(t.delta, t.accepting, traces, *lam, prefix_negatives=prefix), abs=1e-9)


def _generalized(dfa, traces, lam=(0.01, 0.3)):
    tree = TraceTree(traces, dfa.alphabet_size)
    delta, acc = dfa.delta.astype(np.int64).copy(), dfa.accepting.copy()
    args = (tree.parent, tree.sym, tree.end, tree.sym_ptr, tree.sym_nodes, tree.wp, tree.wn,
            tree.scale, *lam)
    before = _search.evaluate(dfa.delta.astype(np.int64), dfa.accepting, tree.parent, tree.sym,
                              tree.wp, tree.wn)
    cost = _search.generalize(delta, acc, *args)
    return Dfa(delta, acc), cost, tree.scale * before[0] + lam[0] * before[1] + lam[1] * before[2]


def test_generalize_records_event_early():
    # symbol 0 always precedes the trigger 1, so either can carry the edge at equal cost
    traces = [Trace((0, 1), 1), Trace((2,), 0), Trace((2, 2), 0)]
    dfa = Dfa(np.array([[0, 1, 0], [1, 1, 1]]), [False, True])
    out, cost, before = _generalized(dfa, traces)
    assert cost == pytest.approx(before)
    assert out.delta[0, 0] == 1
    assert out.delta[0, 2] == 0  # moving 2 would misclassify the negatives


@settings(max_examples=100, deadline=None)
@given(inst=instances())
def test_generalize_never_raises_cost(inst):
    dfa, traces = inst
    dfa = dfa.trim()
    out, cost, before = _generalized(dfa, traces)
    assert cost <= before + 1e-9
    # self-loops move onto targets the state already had, other entries fold into self-loops
    rows, cols = np.nonzero(out.delta != dfa.delta)
    for q, s in zip(rows, cols):
        if dfa.delta[q, s] == q:
            assert out.delta[q, s] in set(dfa.delta[q].tolist()) - {q}
        else:
            assert out.delta[q, s] == q


def test_generalize_folds_unused_entries_into_self_loops():
    traces = [Trace((0, 1), 1), Trace((0,), 0)]
    # symbol 2 is never seen; at state 1 it points back to state 0 for no reason
    dfa = Dfa(np.array([[0, 1, 0], [1, 1, 0]]), [False, True])
    out, cost, before = _generalized(dfa, traces)
    assert out.delta[1, 2] == 1
    assert cost == pytest.approx(before - 0.3)


def test_balanced_weights_by_hand():
    traces = [Trace((0,), 1)] + [Trace((1,), 0)] * 3
    tree = TraceTree(traces, 2)
    # four traces: the positive carries 2, each negative 2/3
    rejector = Dfa.empty(2)
    assert tree.evaluate(rejector)[0] == pytest.approx(2.0)
    acceptor = Dfa([[0, 0]], [True])
    assert tree.evaluate(acceptor)[0] == pytest.approx(2.0)
    cfg = LearnerConfig(max_states=2, loop_penalty=0.01, transition_penalty=0.3)
    obj = objective(rejector, traces, cfg)
    assert obj.error_rate == pytest.approx(0.5)
    assert obj.loop_count == 1 and obj.cross_count == 0
    assert obj.total == pytest.approx(2.0 + 0.01)


def test_prefix_negatives_weights():
    traces = [Trace((0, 0, 1), 1), Trace((0, 1), 0)]
    tree = TraceTree(traces, 2, prefix_negatives=True)
    # observations: one positive, negatives (0,1), (0,), (0,0), (0,)
    assert tree.num_pos_obs == 1 and tree.num_neg_obs == 4
    assert tree.evaluate(Dfa.empty(2))[0] == pytest.approx(1.0)


def test_objective_rejects_over_budget():
    d = Dfa([[1, 1], [0, 0]], [False, True])
    with pytest.raises(ValueError, match="budget"):
        objective(d, [Trace((0,), 1)], LearnerConfig(max_states=1))


def test_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(max_states=0)
    with pytest.raises(ValueError):
        LearnerConfig(loop_penalty=-1.0)
    with pytest.raises(ValueError):
        LearnerConfig(transition_penalty=float("inf"))
    with pytest.raises(ValueError):
        LearnerConfig(timeout=0)


def test_all_negative_gives_empty_dfa():
    traces = [Trace((0, 1), 0), Trace((1,), 0)]
    assert aut_learn(traces, LearnerConfig(), alphabet_size=3) == Dfa.empty(3)


def test_empty_traces_rejected():
    with pytest.raises(ValueError):
        aut_learn([], LearnerConfig())


def test_learns_parity_of_symbol_one():
    rng = np.random.default_rng(3)
    traces = []
    for _ in range(200):
        w = tuple(rng.integers(2, size=rng.integers(1, 8)).tolist())
        traces.append(Trace(w, w.count(1) % 2))
    cfg = LearnerConfig(max_states=3, loop_penalty=0.01, transition_penalty=0.01, restarts=4,
                        anneal_steps=2000)
    d = aut_learn(traces, cfg)
    assert d.num_states == 2
    assert d.classification_error(traces) == 0.0


@settings(max_examples=15, deadline=None)
@given(inst=instances(k=2))
def test_learner_never_beats_exhaustive_optimum(inst):
    _, traces = inst
    cfg = LearnerConfig(max_states=2, loop_penalty=0.01, transition_penalty=0.3, restarts=3,
                        anneal_steps=500)
    d = aut_learn(traces, cfg, alphabet_size=2)
    assert d.num_states <= 2
    got = objective(d, traces, cfg).total
    assert got >= exhaustive_optimum(traces, 2, 2, 0.01, 0.3) - 1e-9


def test_deterministic_given_seed():
    rng = np.random.default_rng(0)
    traces = [Trace(tuple(rng.integers(3, size=5).tolist()), int(rng.random() < 0.3))
              for _ in range(60)]
    cfg = LearnerConfig(max_states=4, restarts=3, anneal_steps=1000)
    assert aut_learn(traces, cfg, seed=7) == aut_learn(traces, cfg, seed=7)


def test_warm_start_keeps_a_perfect_init():
    init = Dfa([[1, 0], [1, 1]], [False, True])  # "contains symbol 0"
    traces = [Trace((1, 1, 0), 1), Trace((1,), 0), Trace((0,), 1), Trace((1, 1), 0)]
    cfg = LearnerConfig(max_states=3, loop_penalty=0.01, transition_penalty=0.01, restarts=1)
    out = aut_learn(traces, cfg, init=init)
    assert out.classification_error(traces) == 0
    assert objective(out, traces, cfg).total <= objective(init, traces, cfg).total + 1e-12


def test_best_of_tie_breaks_on_size():
    small = Dfa.empty(2)
    big = Dfa([[1, 1], [1, 1]], [False, False])
    traces = [Trace((0,), 0)]
    cfg = LearnerConfig(max_states=2, loop_penalty=0.0, transition_penalty=0.0)
    assert best_of([big, small], traces, cfg) is small


def test_classifier_estimator_api():
    X = [(0,), (1,), (0, 1), (1, 1), (1, 0), ()]
    y = [1, 0, 0, 0, 1, 0]  # ends with symbol 0
    clf = DfaClassifier(max_states=2, transition_penalty=0.01, restarts=3, anneal_steps=500)
    params = clf.get_params()
    assert params["max_states"] == 2 and "random_state" in params
    fresh = clone(clf)
    assert not hasattr(fresh, "dfa_")
    clf.fit(X, y)
    assert clf.predict(X).tolist() == y
    assert clf.score(X, y) == 1.0
    assert set(clf.decision_function(X)) <= {-1.0, 1.0}
    with pytest.raises(ValueError):
        clf.predict([(5,)])
    with pytest.raises(ValueError):
        clf.fit(X, y[:-1])
