"""Independent reference implementations used only by the tests."""
import itertools

import numpy as np


def observations(traces, prefix_negatives=False):
    """(symbols, label) pairs the learner objective scores."""
    obs = [(tuple(tr.symbols), tr.label) for tr in traces]
    if prefix_negatives:
        for tr in traces:
            obs += [(tuple(tr.symbols[:k]), 0) for k in range(1, len(tr.symbols))]
    return obs


def run(delta, acc, word):
    q = 0
    for s in word:
        q = delta[q][s]
    return acc[q]


def reachable(delta):
    seen, todo = {0}, [0]
    while todo:
        q = todo.pop()
        for r in delta[q]:
            if r not in seen:
                seen.add(r)
                todo.append(r)
    return seen


def structure(delta):
    """Loop and cross counts over states reachable from 0."""
    live = reachable(delta)
    loops = sum(1 for q in live if q in delta[q])
    cross = sum(len(set(delta[q]) - {q}) for q in live)
    return loops, cross


def misclassified(delta, acc, traces, prefix_negatives=False):
    obs = observations(traces, prefix_negatives)
    n = len(traces)
    m_pos = sum(1 for _, y in obs if y)
    m_neg = len(obs) - m_pos
    w_pos = n / (2 * m_pos) if m_pos and m_neg else 1.0
    w_neg = n / (2 * m_neg) if m_pos and m_neg else 1.0
    return sum((w_pos if y else w_neg) for w, y in obs if run(delta, acc, w) != bool(y))


def brute_objective(delta, acc, traces, lam_loop, lam_trans, prefix_negatives=False):
    delta = [list(map(int, row)) for row in np.asarray(delta)]
    acc = [bool(a) for a in np.asarray(acc)]
    loops, cross = structure(delta)
    return misclassified(delta, acc, traces, prefix_negatives) + lam_loop * loops + lam_trans * cross


def exhaustive_optimum(traces, alphabet, max_states, lam_loop, lam_trans):
    """Minimum objective over every complete DFA with at most ``max_states`` states."""
    n_tr = len(traces)
    m_pos = sum(tr.label for tr in traces)
    m_neg = n_tr - m_pos
    w_pos = n_tr / (2 * m_pos) if m_pos and m_neg else 1.0
    w_neg = n_tr / (2 * m_neg) if m_pos and m_neg else 1.0
    best = np.inf
    for n in range(1, max_states + 1):
        for flat in itertools.product(range(n), repeat=n * alphabet):
            delta = [list(flat[q * alphabet:(q + 1) * alphabet]) for q in range(n)]
            loops, cross = structure(delta)
            base = lam_loop * loops + lam_trans * cross
            if base >= best:
                continue
            # weight landing in each state by label; pick each state's flag independently
            pos = [0.0] * n
            neg = [0.0] * n
            for tr in traces:
                q = 0
                for s in tr.symbols:
                    q = delta[q][s]
                if tr.label:
                    pos[q] += w_pos
                else:
                    neg[q] += w_neg
            best = min(best, base + sum(min(p, m) for p, m in zip(pos, neg)))
    return best
