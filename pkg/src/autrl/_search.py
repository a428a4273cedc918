"""Compiled kernels for the DFA local search.

Traces live in a prefix tree stored in DFS preorder: node ``i > 0`` has
``parent[i] < i``, is entered by symbol ``sym[i]`` and owns the subtree
``[i, end[i])``.  ``wp[i]`` / ``wn[i]`` are the integer class weights of
positive / negative traces ending at node ``i``.  ``sym_nodes`` lists
nodes grouped by entering symbol (CSR offsets in ``sym_ptr``), each group
ascending.

The search state is ``delta``/``acc`` plus three caches kept in sync by
:func:`edit`: ``ns`` (DFA state of every tree node), ``posw``/``negw``
(weight of positive/negative trace ends sitting in each DFA state) and
``cnt`` (number of symbols leading from state q to state r).  Only states
reachable from state 0 count towards the structural penalties, so
unreachable rows of the working table are free scratch space.
"""
import numpy as np
from numba import njit

_EPS = 1e-9


@njit(cache=True)
def init_caches(delta, acc, parent, sym, wp, wn, ns, posw, negw, cnt):
    Q, S = delta.shape
    ns[0] = 0
    for i in range(1, parent.shape[0]):
        ns[i] = delta[ns[parent[i]], sym[i]]
    posw[:] = 0
    negw[:] = 0
    for i in range(parent.shape[0]):
        posw[ns[i]] += wp[i]
        negw[ns[i]] += wn[i]
    cnt[:, :] = 0
    for q in range(Q):
        for s in range(S):
            cnt[q, delta[q, s]] += 1


@njit(cache=True)
def edit(q, s, b, delta, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns, posw, negw, cnt):
    """Set ``delta[q, s] = b`` and repair the caches."""
    old = delta[q, s]
    if old == b:
        return
    delta[q, s] = b
    cnt[q, old] -= 1
    cnt[q, b] += 1
    skip_end = 0
    for k in range(sym_ptr[s], sym_ptr[s + 1]):
        i = sym_nodes[k]
        if i < skip_end or ns[parent[i]] != q:
            continue
        for j in range(i, end[i]):
            nv = delta[ns[parent[j]], sym[j]]
            ov = ns[j]
            if nv != ov:
                ns[j] = nv
                posw[ov] -= wp[j]
                posw[nv] += wp[j]
                negw[ov] -= wn[j]
                negw[nv] += wn[j]
        skip_end = end[i]


@njit(cache=True)
def mass_of(acc, posw, negw):
    m = 0
    for q in range(acc.shape[0]):
        m += negw[q] if acc[q] else posw[q]
    return m


@njit(cache=True)
def structure(cnt, reach, stack):
    """Loop count and cross-pair count over states reachable from 0."""
    Q = cnt.shape[0]
    reach[:] = False
    reach[0] = True
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        q = stack[top]
        for r in range(Q):
            if cnt[q, r] > 0 and not reach[r]:
                reach[r] = True
                stack[top] = r
                top += 1
    loops = 0
    cross = 0
    for q in range(Q):
        if not reach[q]:
            continue
        for r in range(Q):
            if cnt[q, r] > 0:
                if r == q:
                    loops += 1
                else:
                    cross += 1
    return loops, cross


@njit(cache=True)
def _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans):
    loops, cross = structure(cnt, reach, stack)
    return scale * mass_of(acc, posw, negw) + lam_loop * loops + lam_trans * cross


@njit(cache=True)
def _other(Q, a):
    b = np.random.randint(Q - 1)
    if b >= a:
        b += 1
    return b


@njit(cache=True)
def search(delta, acc, parent, sym, end, sym_ptr, sym_nodes, wp, wn, scale,
           lam_loop, lam_trans, anneal_steps, t_start, t_end, timeout,
           sideways_cap, seed, p_flip, p_retarget, p_grow, p_refine, p_visited, polish=True):
    """Anneal, hill-climb, then descend; ``delta``/``acc`` end at the best table found.

    Proposals are accepting-flag flips, single-entry edits (biased towards
    entries that traces actually use), retargets that move every symbol
    of one edge onto another target state, and grow moves that point one
    entry at an unreachable state after resetting that state's row to
    self-loops.  The hill-climbing
    phase accepts strict improvements and at most ``sideways_cap``
    equal-cost moves, and stops after ``timeout`` consecutive
    non-improving proposals.  Returns the objective value.
    """
    np.random.seed(seed)
    Q, S = delta.shape
    N = parent.shape[0]
    ns = np.empty(N, dtype=np.int64)
    posw = np.empty(Q, dtype=np.int64)
    negw = np.empty(Q, dtype=np.int64)
    cnt = np.empty((Q, Q), dtype=np.int64)
    reach = np.empty(Q, dtype=np.bool_)
    stack = np.empty(Q, dtype=np.int64)
    moved = np.empty(S, dtype=np.int64)
    saved_row = np.empty(S, dtype=np.int64)
    best_delta = delta.copy()
    best_acc = acc.copy()

    init_caches(delta, acc, parent, sym, wp, wn, ns, posw, negw, cnt)
    cur = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
    best = cur
    if Q == 1:
        acc[0] = not acc[0]
        alt = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
        if alt < cur - _EPS:
            return alt
        acc[0] = not acc[0]
        return cur

    # phase 1: simulated annealing; phase 2: capped-sideways hill climbing
    total_steps = anneal_steps
    step = 0
    stale = 0
    sideways = 0
    log_ratio = np.log(t_end / t_start) if t_start > 0 and t_end > 0 else 0.0
    while True:
        annealing = step < total_steps
        if not annealing and stale >= timeout:
            break
        temp = t_start * np.exp(log_ratio * step / max(total_steps, 1)) if annealing else 0.0
        step += 1

        u = np.random.random()
        kind = 0
        q = 0
        s0 = 0
        old = 0
        nmoved = 0
        old_acc = False
        if u < p_flip:
            q = np.random.randint(Q)
            acc[q] = not acc[q]
        elif u < p_flip + p_retarget:
            kind = 1
            q = np.random.randint(Q)
            a = delta[q, np.random.randint(S)]
            b = _other(Q, a)
            old = a
            for s in range(S):
                if delta[q, s] == a:
                    moved[nmoved] = s
                    nmoved += 1
            for k in range(nmoved):
                edit(q, moved[k], b, delta, parent, sym, end, sym_ptr, sym_nodes,
                     wp, wn, ns, posw, negw, cnt)
        elif u < p_flip + p_retarget + p_grow:
            kind = 3
            structure(cnt, reach, stack)
            nfree = 0
            for r in range(Q):
                if not reach[r]:
                    nfree += 1
            if nfree == 0:
                continue
            pick = np.random.randint(nfree)
            b = 0
            for r in range(Q):
                if not reach[r]:
                    if pick == 0:
                        b = r
                        break
                    pick -= 1
            if N > 1 and np.random.random() < p_visited:
                i = 1 + np.random.randint(N - 1)
                q = ns[parent[i]]
                s0 = sym[i]
            else:
                q = np.random.randint(Q)
                while not reach[q]:
                    q = np.random.randint(Q)
                s0 = np.random.randint(S)
            nmoved = b  # grown state
            saved_row[:] = delta[b]
            old_acc = acc[b]
            for s in range(S):
                edit(b, s, b, delta, parent, sym, end, sym_ptr, sym_nodes,
                     wp, wn, ns, posw, negw, cnt)
            refine = np.random.random() < p_refine
            if refine:
                acc[b] = acc[q]
                acc[q] = not acc[q]
                kind = 4
            else:
                acc[b] = np.random.random() < 0.5
            old = delta[q, s0]
            edit(q, s0, b, delta, parent, sym, end, sym_ptr, sym_nodes,
                 wp, wn, ns, posw, negw, cnt)
        else:
            kind = 2
            if N > 1 and np.random.random() < p_visited:
                i = 1 + np.random.randint(N - 1)
                q = ns[parent[i]]
                s0 = sym[i]
            else:
                q = np.random.randint(Q)
                s0 = np.random.randint(S)
            old = delta[q, s0]
            edit(q, s0, _other(Q, old), delta, parent, sym, end, sym_ptr, sym_nodes,
                 wp, wn, ns, posw, negw, cnt)

        new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
        if annealing:
            ok = new <= cur + _EPS or np.random.random() < np.exp((cur - new) / temp)
        else:
            if new < cur - _EPS:
                ok = True
                stale = 0
            elif new <= cur + _EPS and sideways < sideways_cap:
                ok = True
                sideways += 1
                stale += 1
            else:
                ok = False
                stale += 1
        if ok:
            cur = new
            if cur < best - _EPS:
                best = cur
                best_delta[:, :] = delta
                best_acc[:] = acc
        elif kind == 0:
            acc[q] = not acc[q]
        elif kind == 1:
            for k in range(nmoved):
                edit(q, moved[k], old, delta, parent, sym, end, sym_ptr, sym_nodes,
                     wp, wn, ns, posw, negw, cnt)
        elif kind == 2:
            edit(q, s0, old, delta, parent, sym, end, sym_ptr, sym_nodes,
                 wp, wn, ns, posw, negw, cnt)
        else:
            b = nmoved
            if kind == 4:
                acc[q] = not acc[q]
            edit(q, s0, old, delta, parent, sym, end, sym_ptr, sym_nodes,
                 wp, wn, ns, posw, negw, cnt)
            for s in range(S):
                edit(b, s, saved_row[s], delta, parent, sym, end, sym_ptr, sym_nodes,
                     wp, wn, ns, posw, negw, cnt)
            acc[b] = old_acc

    if best < cur - _EPS:
        delta[:, :] = best_delta
        acc[:] = best_acc
        cur = best
    if not polish:
        return cur
    return descend(delta, acc, parent, sym, end, sym_ptr, sym_nodes, wp, wn, scale,
                   lam_loop, lam_trans)


@njit(cache=True)
def evaluate(delta, acc, parent, sym, wp, wn):
    """Integer misclassified weight, loop count and cross count of the trimmed table."""
    Q = delta.shape[0]
    ns = np.empty(parent.shape[0], dtype=np.int64)
    posw = np.empty(Q, dtype=np.int64)
    negw = np.empty(Q, dtype=np.int64)
    cnt = np.empty((Q, Q), dtype=np.int64)
    init_caches(delta, acc, parent, sym, wp, wn, ns, posw, negw, cnt)
    loops, cross = structure(cnt, np.empty(Q, dtype=np.bool_), np.empty(Q, dtype=np.int64))
    return mass_of(acc, posw, negw), loops, cross


@njit(cache=True)
def _closure(q, f, delta, acc, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns, posw, negw,
             cnt, reach, stack, scale, lam_loop, lam_trans, cur, added, prev):
    """Greedily redirect more symbols of ``q`` onto ``f`` while that lowers the cost.

    Redirected symbols and their previous targets are appended to
    ``added``/``prev``; returns ``(cost, count)``.
    """
    S = delta.shape[1]
    n = 0
    while True:
        best = cur - _EPS
        bs = -1
        for s in range(S):
            old = delta[q, s]
            if old == f:
                continue
            edit(q, s, f, delta, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns, posw, negw, cnt)
            new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
            edit(q, s, old, delta, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns, posw, negw, cnt)
            if new < best:
                best, bs = new, s
        if bs < 0:
            return cur, n
        added[n] = bs
        prev[n] = delta[q, bs]
        n += 1
        edit(q, bs, f, delta, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns, posw, negw, cnt)
        cur = best


@njit(cache=True)
def _apply_grow(q, s, f, mode, delta, acc, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns,
                posw, negw, cnt):
    """Point ``delta[q, s]`` at fresh state ``f``; mode 0/1 sets f's flag, mode 2 refines."""
    if mode == 2:
        acc[f] = acc[q]
        acc[q] = not acc[q]
    else:
        acc[f] = mode == 1
    edit(q, s, f, delta, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns, posw, negw, cnt)


@njit(cache=True)
def descend(delta, acc, parent, sym, end, sym_ptr, sym_nodes, wp, wn, scale, lam_loop, lam_trans,
            max_iters=-1, split=True):
    """Steepest descent over flips, single-entry edits, retargets, grows and refines.

    A grow points one entry of a reachable state at a fresh state (all
    self-loops) with either accepting flag; a refine does the same but
    hands the source state's flag to the fresh state and flips the source.
    With ``split``, each reachable state is also tried as the source of a
    grow/refine whose edge carries a greedily grown set of symbols, so a
    state can split on several symbols in one step.
    """
    Q, S = delta.shape
    N = parent.shape[0]
    ns = np.empty(N, dtype=np.int64)
    posw = np.empty(Q, dtype=np.int64)
    negw = np.empty(Q, dtype=np.int64)
    cnt = np.empty((Q, Q), dtype=np.int64)
    reach = np.empty(Q, dtype=np.bool_)
    stack = np.empty(Q, dtype=np.int64)
    moved = np.empty(S, dtype=np.int64)
    added = np.empty(S, dtype=np.int64)
    prev = np.empty(S, dtype=np.int64)
    init_caches(delta, acc, parent, sym, wp, wn, ns, posw, negw, cnt)
    cur = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)

    it = 0
    while it != max_iters:
        it += 1
        structure(cnt, reach, stack)
        live = reach.copy()
        fresh = -1
        for r in range(Q):
            if not live[r]:
                fresh = r
                break
        if fresh >= 0:
            for s in range(S):
                edit(fresh, s, fresh, delta, parent, sym, end, sym_ptr, sym_nodes,
                     wp, wn, ns, posw, negw, cnt)
        best_gain = _EPS
        op = -1
        bq = 0
        bs = 0
        bb = 0
        for q in range(Q):
            if not live[q]:
                continue
            acc[q] = not acc[q]
            new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
            acc[q] = not acc[q]
            if cur - new > best_gain:
                best_gain, op, bq = cur - new, 0, q
        for q in range(Q):
            if not live[q]:
                continue
            for s in range(S):
                old = delta[q, s]
                for b in range(Q):
                    if b == old or not live[b]:
                        continue
                    edit(q, s, b, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
                    new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
                    edit(q, s, old, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
                    if cur - new > best_gain:
                        best_gain, op, bq, bs, bb = cur - new, 1, q, s, b
                if fresh < 0:
                    continue
                fa = acc[fresh]
                qa = acc[q]
                for mode in range(3):
                    _apply_grow(q, s, fresh, mode, delta, acc, parent, sym, end, sym_ptr,
                                sym_nodes, wp, wn, ns, posw, negw, cnt)
                    new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
                    edit(q, s, old, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
                    acc[q] = qa
                    acc[fresh] = fa
                    if cur - new > best_gain:
                        best_gain, op, bq, bs, bb = cur - new, 2 + mode, q, s, fresh
        for q in range(Q):
            if not live[q]:
                continue
            for a in range(Q):
                if cnt[q, a] == 0:
                    continue
                nmoved = 0
                for s in range(S):
                    if delta[q, s] == a:
                        moved[nmoved] = s
                        nmoved += 1
                for b in range(Q):
                    if b == a or not live[b]:
                        continue
                    for k in range(nmoved):
                        edit(q, moved[k], b, delta, parent, sym, end, sym_ptr, sym_nodes,
                             wp, wn, ns, posw, negw, cnt)
                    new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
                    for k in range(nmoved):
                        edit(q, moved[k], a, delta, parent, sym, end, sym_ptr, sym_nodes,
                             wp, wn, ns, posw, negw, cnt)
                    if cur - new > best_gain:
                        best_gain, op, bq, bs, bb = cur - new, 5, q, a, b
        if fresh >= 0 and split:
            for q in range(Q):
                if not live[q]:
                    continue
                qa = acc[q]
                fa = acc[fresh]
                for mode in range(3):
                    if mode == 2:
                        acc[fresh] = qa
                        acc[q] = not qa
                    else:
                        acc[fresh] = mode == 1
                    # force the best first symbol, then extend greedily
                    first = -1
                    fbest = np.inf
                    for s in range(S):
                        old = delta[q, s]
                        edit(q, s, fresh, delta, parent, sym, end, sym_ptr, sym_nodes,
                             wp, wn, ns, posw, negw, cnt)
                        new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
                        edit(q, s, old, delta, parent, sym, end, sym_ptr, sym_nodes,
                             wp, wn, ns, posw, negw, cnt)
                        if new < fbest:
                            fbest, first = new, s
                    old = delta[q, first]
                    edit(q, first, fresh, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
                    new, n = _closure(q, fresh, delta, acc, parent, sym, end, sym_ptr,
                                      sym_nodes, wp, wn, ns, posw, negw, cnt, reach, stack,
                                      scale, lam_loop, lam_trans, fbest, added, prev)
                    for k in range(n - 1, -1, -1):
                        edit(q, added[k], prev[k], delta, parent, sym, end, sym_ptr, sym_nodes,
                             wp, wn, ns, posw, negw, cnt)
                    edit(q, first, old, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
                    acc[q] = qa
                    acc[fresh] = fa
                    if cur - new > best_gain:
                        best_gain, op, bq, bs, bb = cur - new, 6 + mode, q, first, fresh

        if op < 0:
            break
        if op == 0:
            acc[bq] = not acc[bq]
        elif op == 1:
            edit(bq, bs, bb, delta, parent, sym, end, sym_ptr, sym_nodes,
                 wp, wn, ns, posw, negw, cnt)
        elif op <= 4:
            _apply_grow(bq, bs, bb, op - 2, delta, acc, parent, sym, end, sym_ptr,
                        sym_nodes, wp, wn, ns, posw, negw, cnt)
        elif op == 5:
            for s in range(S):
                if delta[bq, s] == bs:
                    edit(bq, s, bb, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
        else:
            _apply_grow(bq, bs, bb, op - 6, delta, acc, parent, sym, end, sym_ptr,
                        sym_nodes, wp, wn, ns, posw, negw, cnt)
            base = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
            _closure(bq, bb, delta, acc, parent, sym, end, sym_ptr, sym_nodes, wp, wn, ns,
                     posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans, base, added, prev)
        cur = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
    return cur


@njit(cache=True)
def _mark_used(ns, parent, sym, used):
    used[:, :] = False
    for i in range(1, parent.shape[0]):
        used[ns[parent[i]], sym[i]] = True


@njit(cache=True)
def generalize(delta, acc, parent, sym, end, sym_ptr, sym_nodes, wp, wn, scale, lam_loop,
               lam_trans):
    """Record events as early as the data allows, at equal or lower cost.

    Equal-cost tables can differ in where an event is first recorded:
    the hallway trigger may sit on entering the last square or on acting
    there.  A used self-loop symbol of state ``q`` is moved onto an
    existing edge ``q -> r`` when the cost does not rise and the move
    leaves some other used symbol of that edge unused, i.e. the new
    symbol takes over the old trigger's histories instead of adding new
    ones.

    Then entries that no history uses become self-loops where the cost
    allows.  Returns the final cost.
    """
    Q, S = delta.shape
    N = parent.shape[0]
    ns = np.empty(N, dtype=np.int64)
    posw = np.empty(Q, dtype=np.int64)
    negw = np.empty(Q, dtype=np.int64)
    cnt = np.empty((Q, Q), dtype=np.int64)
    reach = np.empty(Q, dtype=np.bool_)
    stack = np.empty(Q, dtype=np.int64)
    used = np.empty((Q, S), dtype=np.bool_)
    after = np.empty((Q, S), dtype=np.bool_)
    init_caches(delta, acc, parent, sym, wp, wn, ns, posw, negw, cnt)
    cur = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
    for _ in range(Q * S):
        _mark_used(ns, parent, sym, used)
        structure(cnt, reach, stack)
        moved = False
        for q in range(Q):
            if not reach[q]:
                continue
            for s in range(S):
                if delta[q, s] != q or not used[q, s]:
                    continue
                for r in range(Q):
                    if r == q or cnt[q, r] == 0:
                        continue
                    edit(q, s, r, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
                    new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
                    if new <= cur + _EPS:
                        _mark_used(ns, parent, sym, after)
                        for t in range(S):
                            if t != s and delta[q, t] == r and used[q, t] and not after[q, t]:
                                moved = True
                                break
                    if moved:
                        cur = min(cur, new)
                        break
                    edit(q, s, q, delta, parent, sym, end, sym_ptr, sym_nodes,
                         wp, wn, ns, posw, negw, cnt)
                if moved:
                    break
            if moved:
                break
        if not moved:
            break
    # entries no history uses default to self-loops when that costs nothing
    _mark_used(ns, parent, sym, used)
    structure(cnt, reach, stack)
    for q in range(Q):
        if not reach[q]:
            continue
        for s in range(S):
            b = delta[q, s]
            if b == q or used[q, s]:
                continue
            edit(q, s, q, delta, parent, sym, end, sym_ptr, sym_nodes,
                 wp, wn, ns, posw, negw, cnt)
            new = _cost(acc, posw, negw, cnt, reach, stack, scale, lam_loop, lam_trans)
            if new <= cur + _EPS:
                cur = min(cur, new)
            else:
                edit(q, s, b, delta, parent, sym, end, sym_ptr, sym_nodes,
                     wp, wn, ns, posw, negw, cnt)
    return cur
