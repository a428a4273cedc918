"""Noise-robust DFA induction by penalised local search.

The learner minimises

    misclassified_weight + loop_penalty * L + transition_penalty * T

over complete DFAs with at most ``max_states`` states, where ``L`` is the
number of states carrying a self-loop, ``T`` the number of ordered pairs
of distinct states joined by at least one symbol, and
``misclassified_weight`` is the class-balanced count of labelled
histories whose acceptance disagrees with their label.  Each class
carries half of the total, measured in traces.

By default the labelled histories are the traces themselves.  With
``prefix_negatives`` every proper prefix of a trace also counts as a
label-0 history: an episode that ends when the reward arrives has seen
reward 0 after each earlier step, and an automaton that respects this
keeps the product with the environment Markovian even when every
episode has the same length.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import _search
from .core import Trace
from .dfa import Dfa


@dataclass(frozen=True)
class LearnerConfig:
    max_states: int = 5
    loop_penalty: float = 0.01
    transition_penalty: float = 0.3
    timeout: int = 250
    restarts: int = 10
    sideways_cap: int = 50
    anneal_steps: int = 20000
    prefix_negatives: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_states < 1:
            raise ValueError("max_states must be >= 1")
        for name in ("loop_penalty", "transition_penalty"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.anneal_steps < 0:
            raise ValueError("anneal_steps must be >= 0")
        if self.timeout < 1 or self.restarts < 1:
            raise ValueError("timeout and restarts must be positive")


@dataclass(frozen=True)
class LearnerObjective:
    error_rate: float
    misclassified: float
    loop_count: int
    cross_count: int
    total: float


# proposal mix for the stochastic phase of each restart
_P_FLIP = 0.1
_P_RETARGET = 0.2
_P_GROW = 0.1
_P_VISITED = 0.7
_P_REFINE = 0.5


class TraceTree:
    """Prefix tree of a labelled trace set with class-balanced node weights.

    Nodes are numbered in DFS preorder.  A node holds one observation per
    trace ending there (with that trace's label) and, with
    ``prefix_negatives``, one label-0 observation per trace passing
    through it.  When both labels are present each positive observation
    weighs ``n / (2 m_pos)`` and each negative ``n / (2 m_neg)``, where
    ``n`` is the number of traces and ``m_*`` the observation counts, so
    both classes carry half of ``n``.  The weights are stored as the
    integers ``m_neg`` / ``m_pos`` times ``scale``.
    """

    def __init__(self, traces: Sequence[Trace], alphabet_size: int | None = None,
                 prefix_negatives: bool = False):
        if len(traces) == 0:
            raise ValueError("trace set is empty")
        children: list[dict[int, int]] = [{}]
        ends: list[list[int]] = [[0, 0]]
        top = -1
        for tr in traces:
            node = 0
            for s in tr.symbols:
                if prefix_negatives and node:
                    ends[node][0] += 1
                nxt = children[node].get(s)
                if nxt is None:
                    nxt = len(children)
                    children[node][s] = nxt
                    children.append({})
                    ends.append([0, 0])
                node = nxt
                top = max(top, s)
            ends[node][tr.label] += 1
        if alphabet_size is None:
            alphabet_size = top + 1
        elif top >= alphabet_size:
            raise ValueError(f"symbol {top} outside alphabet of size {alphabet_size}")
        self.alphabet_size = max(alphabet_size, 1)
        self.num_traces = n = len(traces)
        self.num_pos = sum(e[1] for e in ends)
        self.num_neg = n - self.num_pos
        self.num_pos_obs = m_pos = self.num_pos
        self.num_neg_obs = m_neg = sum(e[0] for e in ends)
        if m_pos and m_neg:
            iw_pos, iw_neg = m_neg, m_pos
            self.scale = n / (2 * m_pos * m_neg)
        else:
            iw_pos = iw_neg = 1
            self.scale = 1.0

        N = len(children)
        parent = np.empty(N, dtype=np.int64)
        sym = np.zeros(N, dtype=np.int64)
        end = np.empty(N, dtype=np.int64)
        wp = np.empty(N, dtype=np.int64)
        wn = np.empty(N, dtype=np.int64)
        order = 0
        # iterative preorder walk; children visited in symbol order
        stack = [(0, -1, 0, False)]
        new_id = {}
        while stack:
            old, par, s, done = stack.pop()
            if done:
                end[new_id[old]] = order
                continue
            i = new_id[old] = order
            order += 1
            parent[i], sym[i] = par, s
            wn[i], wp[i] = ends[old][0] * iw_neg, ends[old][1] * iw_pos
            stack.append((old, par, s, True))
            for cs in sorted(children[old], reverse=True):
                stack.append((children[old][cs], i, cs, False))
        self.parent, self.sym, self.end, self.wp, self.wn = parent, sym, end, wp, wn
        by_sym = np.argsort(sym[1:], kind="stable") + 1
        self.sym_nodes = by_sym.astype(np.int64)
        self.sym_ptr = np.searchsorted(sym[by_sym], np.arange(self.alphabet_size + 1)).astype(np.int64)

    @property
    def num_nodes(self) -> int:
        return self.parent.shape[0]

    def evaluate(self, dfa: Dfa) -> tuple[float, int, int]:
        """Misclassified weight plus loop/cross counts of the reachable part."""
        if dfa.alphabet_size != self.alphabet_size:
            raise ValueError(
                f"DFA alphabet {dfa.alphabet_size} != trace alphabet {self.alphabet_size}")
        mass, loops, cross = _search.evaluate(
            np.ascontiguousarray(dfa.delta), np.ascontiguousarray(dfa.accepting),
            self.parent, self.sym, self.wp, self.wn)
        return float(mass) * self.scale, int(loops), int(cross)


def objective(dfa: Dfa, traces: Sequence[Trace], cfg: LearnerConfig,
              tree: TraceTree | None = None) -> LearnerObjective:
    """Decomposed penalised objective of ``dfa`` on ``traces``.

    Loop and cross counts are taken over every state of ``dfa`` as given.
    """
    if dfa.num_states > cfg.max_states:
        raise ValueError(f"DFA has {dfa.num_states} states, budget is {cfg.max_states}")
    tree = tree if tree is not None else TraceTree(traces, dfa.alphabet_size, cfg.prefix_negatives)
    mass, _, _ = tree.evaluate(dfa)
    loops, cross = dfa.loop_count(), dfa.cross_count()
    total = mass + cfg.loop_penalty * loops + cfg.transition_penalty * cross
    return LearnerObjective(mass / tree.num_traces, mass, loops, cross, total)


def _temperatures(tree: TraceTree, cfg: LearnerConfig) -> tuple[float, float]:
    """Annealing range scaled to the cheapest structural change or single trace."""
    unit = min(tree.scale * min(tree.num_pos_obs or 1, tree.num_neg_obs or 1), 1.0)
    unit = max(unit, cfg.transition_penalty, cfg.loop_penalty, 1e-6)
    return 2.0 * unit, 0.01 * unit


def _restart_seed(seed: int, restart: int) -> int:
    return int(np.random.SeedSequence([seed, restart]).generate_state(1)[0])


def _pad(dfa: Dfa, num_states: int) -> tuple[np.ndarray, np.ndarray]:
    """Embed ``dfa`` in a larger table; extra rows are unreachable self-loops."""
    Q, S = dfa.delta.shape
    delta = np.tile(np.arange(num_states, dtype=np.int64)[:, None], (1, S))
    delta[:Q] = dfa.delta
    acc = np.zeros(num_states, dtype=np.bool_)
    acc[:Q] = dfa.accepting
    return delta, acc


def aut_learn(traces: Sequence[Trace], cfg: LearnerConfig, seed: int | None = None,
              alphabet_size: int | None = None, init: Dfa | None = None) -> Dfa:
    """Fit a small DFA to labelled traces.

    Restart 0 runs steepest descent from ``init`` (when given and within
    budget) and, if ``init`` was used, restart 1 does the same from the
    single rejecting state.  Every other restart draws a uniformly random
    complete table over ``cfg.max_states`` states (each state accepting
    with probability 1/2), anneals for ``cfg.anneal_steps`` proposals,
    hill-climbs until ``cfg.timeout`` consecutive proposals fail to
    improve, then finishes with steepest descent.  The best trimmed DFA
    over all restarts wins and is tidied without raising its cost (see
    ``_search.generalize``): events are recorded as early as the data
    allows and unused entries become self-loops.  The result depends only on
    ``(traces, cfg, seed, init)``.
    """
    if len(traces) == 0:
        raise ValueError("cannot learn from an empty trace set")
    seed = cfg.seed if seed is None else seed
    tree = TraceTree(traces, alphabet_size, cfg.prefix_negatives)
    S = tree.alphabet_size
    if tree.num_pos == 0:
        return Dfa.empty(S)
    Q = cfg.max_states
    starts = [Dfa.empty(S)]
    if init is not None and init.num_states <= Q and init.alphabet_size == S:
        starts.insert(0, init)
    t_start, t_end = _temperatures(tree, cfg)
    args = (tree.parent, tree.sym, tree.end, tree.sym_ptr, tree.sym_nodes, tree.wp, tree.wn,
            tree.scale, cfg.loop_penalty, cfg.transition_penalty)
    candidates = []
    for r in range(max(cfg.restarts, len(starts))):
        if r < len(starts):
            delta, acc = _pad(starts[r], Q)
            _search.descend(delta, acc, *args)
        else:
            rs = _restart_seed(seed, r)
            g = np.random.default_rng(rs)
            delta = g.integers(Q, size=(Q, S)).astype(np.int64)
            acc = g.random(Q) < 0.5
            _search.search(delta, acc, *args, cfg.anneal_steps, t_start, t_end, cfg.timeout,
                           cfg.sideways_cap, rs % (2**32), _P_FLIP, _P_RETARGET, _P_GROW,
                           _P_REFINE, _P_VISITED)
        candidates.append(Dfa(delta, acc).trim())
    best = best_of(candidates, traces, cfg, tree=tree)
    delta, acc = _pad(best, best.num_states)
    _search.generalize(delta, acc, *args)
    return Dfa(delta, acc).trim()


def best_of(dfas: Sequence[Dfa], traces: Sequence[Trace], cfg: LearnerConfig,
            tree: TraceTree | None = None) -> Dfa:
    """Lowest objective; ties go to fewer states, then fewer cross pairs, then list order."""
    if len(dfas) == 0:
        raise ValueError("best_of needs at least one DFA")
    tree = tree if tree is not None else TraceTree(traces, dfas[0].alphabet_size, cfg.prefix_negatives)
    scored = []
    for i, d in enumerate(dfas):
        obj = objective(d, traces, cfg, tree=tree)
        scored.append((round(obj.total, 9), d.num_states, obj.cross_count, i))
    return dfas[min(scored)[3]]


def _as_traces(X, y=None) -> list[Trace]:
    if y is None:
        return [tr if isinstance(tr, Trace) else Trace(tuple(tr), 0) for tr in X]
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} sequences but y has {len(y)} labels")
    return [Trace(tuple(x.symbols if isinstance(x, Trace) else x), int(lab))
            for x, lab in zip(X, y)]


class DfaClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper: sequences in, accept/reject predictions out.

    ``X`` is a list of integer symbol sequences and ``y`` their binary
    labels.  After ``fit``, ``dfa_`` holds the learned automaton.
    """

    def __init__(self, max_states=5, loop_penalty=0.01, transition_penalty=0.3,
                 timeout=250, restarts=10, sideways_cap=50, anneal_steps=20000,
                 prefix_negatives=False, alphabet_size=None, random_state=0):
        self.max_states = max_states
        self.loop_penalty = loop_penalty
        self.transition_penalty = transition_penalty
        self.timeout = timeout
        self.restarts = restarts
        self.sideways_cap = sideways_cap
        self.anneal_steps = anneal_steps
        self.prefix_negatives = prefix_negatives
        self.alphabet_size = alphabet_size
        self.random_state = random_state

    def _config(self) -> LearnerConfig:
        return LearnerConfig(
            max_states=self.max_states, loop_penalty=self.loop_penalty,
            transition_penalty=self.transition_penalty, timeout=self.timeout,
            restarts=self.restarts, sideways_cap=self.sideways_cap,
            anneal_steps=self.anneal_steps, prefix_negatives=self.prefix_negatives,
            seed=int(self.random_state or 0))

    def fit(self, X, y):
        traces = _as_traces(X, y)
        if not traces:
            raise ValueError("cannot fit on zero sequences")
        cfg = self._config()
        self.dfa_ = aut_learn(traces, cfg, alphabet_size=self.alphabet_size)
        self.objective_ = objective(self.dfa_, traces, cfg)
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        check_is_fitted(self, "dfa_")
        S = self.dfa_.alphabet_size
        out = np.empty(len(X), dtype=np.int64)
        for i, x in enumerate(X):
            syms = x.symbols if isinstance(x, Trace) else x
            if any(not 0 <= s < S for s in syms):
                raise ValueError(f"sequence {i} has a symbol outside alphabet of size {S}")
            out[i] = self.dfa_.accepts(syms)
        return out

    def decision_function(self, X):
        return self.predict(X).astype(float) * 2 - 1


def with_overrides(cfg: LearnerConfig, **kwargs) -> LearnerConfig:
    return replace(cfg, **{k: v for k, v in kwargs.items() if v is not None})
