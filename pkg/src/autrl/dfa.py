"""Complete DFAs over integer alphabets, with product-state tracking."""
from __future__ import annotations

from collections import Counter, deque
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Trace


class Dfa:
    """Complete deterministic automaton with initial state 0.

    ``delta[q, sym]`` is the successor of state ``q`` on symbol ``sym``;
    ``accepting[q]`` marks accepting states.  Instances are immutable.
    """

    __slots__ = ("delta", "accepting")

    def __init__(self, delta, accepting):
        delta = np.array(delta, dtype=np.int64, copy=True)
        accepting = np.array(accepting, dtype=bool, copy=True)
        if delta.ndim != 2 or delta.shape[0] < 1 or delta.shape[1] < 1:
            raise ValueError("delta must be a non-empty (num_states, alphabet_size) table")
        if accepting.shape != (delta.shape[0],):
            raise ValueError("accepting must have one flag per state")
        if delta.min() < 0 or delta.max() >= delta.shape[0]:
            raise ValueError("transition target out of range")
        delta.setflags(write=False)
        accepting.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "accepting", accepting)

    def __setattr__(self, key, value):
        raise AttributeError("Dfa is immutable")

    @classmethod
    def empty(cls, alphabet_size: int) -> "Dfa":
        """One rejecting state that loops on every symbol."""
        return cls(np.zeros((1, alphabet_size), dtype=np.int64), [False])

    @property
    def num_states(self) -> int:
        return self.delta.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.delta.shape[1]

    initial = 0

    def __eq__(self, other):
        if not isinstance(other, Dfa):
            return NotImplemented
        return (
            self.delta.shape == other.delta.shape
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.accepting, other.accepting)
        )

    def __hash__(self):
        return hash((self.delta.shape, self.delta.tobytes(), self.accepting.tobytes()))

    def __repr__(self):
        return f"Dfa(num_states={self.num_states}, alphabet_size={self.alphabet_size})"

    def step(self, q: int, symbol: int) -> int:
        if not 0 <= q < self.num_states:
            raise ValueError(f"DFA state {q} out of range [0, {self.num_states})")
        if not 0 <= symbol < self.alphabet_size:
            raise ValueError(f"symbol {symbol} out of range [0, {self.alphabet_size})")
        return int(self.delta[q, symbol])

    def run(self, symbols: Iterable[int]) -> tuple[int, bool]:
        q = 0
        for sym in symbols:
            q = self.step(q, sym)
        return q, bool(self.accepting[q])

    def accepts(self, symbols: Iterable[int]) -> bool:
        return self.run(symbols)[1]

    def run_batch(self, symbols: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Final states for a padded ``(n, T)`` symbol batch."""
        symbols = np.asarray(symbols)
        lengths = np.asarray(lengths)
        q = np.zeros(symbols.shape[0], dtype=np.int64)
        for t in range(symbols.shape[1]):
            live = lengths > t
            q = np.where(live, self.delta[q, np.where(live, symbols[:, t], 0)], q)
        return q

    def classification_error(self, traces: Sequence[Trace]) -> float:
        """Fraction of traces whose acceptance disagrees with their label."""
        if len(traces) == 0:
            raise ValueError("classification error of an empty trace set is undefined")
        wrong = sum(self.accepts(tr.symbols) != (tr.label == 1) for tr in traces)
        return wrong / len(traces)

    def is_consistent(self, traces: Iterable[Trace]) -> bool:
        return all(self.accepts(tr.symbols) == (tr.label == 1) for tr in traces)

    # -- structure -----------------------------------------------------
    def reachable(self) -> np.ndarray:
        seen = np.zeros(self.num_states, dtype=bool)
        seen[0] = True
        todo = deque([0])
        while todo:
            q = todo.popleft()
            for r in np.unique(self.delta[q]):
                if not seen[r]:
                    seen[r] = True
                    todo.append(int(r))
        return seen

    def trim(self) -> "Dfa":
        """Drop unreachable states and renumber the rest in BFS order."""
        order = [0]
        index = {0: 0}
        i = 0
        while i < len(order):
            q = order[i]
            for r in self.delta[q]:
                r = int(r)
                if r not in index:
                    index[r] = len(order)
                    order.append(r)
            i += 1
        remap = np.zeros(self.num_states, dtype=np.int64)
        for old, new in index.items():
            remap[old] = new
        return Dfa(remap[self.delta[order]], self.accepting[order])

    def loop_count(self) -> int:
        """States with at least one self-loop."""
        own = np.arange(self.num_states)[:, None]
        return int(np.any(self.delta == own, axis=1).sum())

    def cross_count(self) -> int:
        """Ordered state pairs ``(q, r)``, ``r != q``, joined by some symbol."""
        total = 0
        for q in range(self.num_states):
            targets = set(np.unique(self.delta[q]).tolist())
            targets.discard(q)
            total += len(targets)
        return total

    # -- text formats --------------------------------------------------
    def dumps(self) -> str:
        lines = [f"dfa {self.num_states} {self.alphabet_size}"]
        lines += [f"state {q} {int(self.accepting[q])}" for q in range(self.num_states)]
        for q in range(self.num_states):
            lines += [f"t {q} {s} {int(self.delta[q, s])}" for s in range(self.alphabet_size)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, source: str = "<string>") -> "Dfa":
        lines = [(i, ln.split()) for i, ln in enumerate(text.splitlines(), start=1)]
        lines = [(i, toks) for i, toks in lines if toks and not toks[0].startswith("#")]
        if not lines or lines[0][1][0] != "dfa" or len(lines[0][1]) != 3:
            raise ValueError(f"{source}:1: expected header 'dfa <num_states> <alphabet_size>'")
        n, k = int(lines[0][1][1]), int(lines[0][1][2])
        delta = np.full((n, k), -1, dtype=np.int64)
        accepting = np.zeros(n, dtype=bool)
        for lineno, toks in lines[1:]:
            try:
                if toks[0] == "state" and len(toks) == 3:
                    accepting[int(toks[1])] = toks[2] == "1"
                elif toks[0] == "t" and len(toks) == 4:
                    q, s, r = (int(x) for x in toks[1:])
                    if not (0 <= q < n and 0 <= s < k and 0 <= r < n):
                        raise IndexError
                    delta[q, s] = r
                else:
                    raise ValueError(f"{source}:{lineno}: unrecognised line {' '.join(toks)!r}")
            except IndexError:
                raise ValueError(f"{source}:{lineno}: index out of range") from None
        if (delta < 0).any():
            q, s = np.argwhere(delta < 0)[0]
            raise ValueError(f"{source}: missing transition for state {q}, symbol {s}")
        return cls(delta, accepting)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Dfa":
        with open(path) as fh:
            return cls.loads(fh.read(), source=str(path))

    def to_dot(self, symbol_namer: Callable[[int], str] = str) -> str:
        """Graphviz rendering with one ``o/w`` default edge per state.

        The default edge of a state goes to its most frequent target
        (self-loop preferred on ties); other targets list their symbols.
        """
        out = ["digraph dfa {", "  rankdir=LR;", '  start [shape=point, label=""];']
        for q in range(self.num_states):
            shape = "doublecircle" if self.accepting[q] else "circle"
            out.append(f'  q{q} [shape={shape}, label="q{q}"];')
        out.append("  start -> q0;")
        for q in range(self.num_states):
            counts = Counter(self.delta[q].tolist())
            default = max(counts, key=lambda r: (counts[r], r == q, -r))
            for r in sorted(counts):
                if r == default:
                    label = "o/w"
                else:
                    syms = np.flatnonzero(self.delta[q] == r)
                    label = ", ".join(symbol_namer(int(s)) for s in syms)
                label = label.replace('"', '\\"')
                out.append(f'  q{q} -> q{r} [label="{label}"];')
        out.append("}")
        return "\n".join(out) + "\n"


def dfa_empty(alphabet_size: int) -> Dfa:
    return Dfa.empty(alphabet_size)


def dfa_step(dfa: Dfa, q: int, symbol: int) -> int:
    return dfa.step(q, symbol)


def dfa_run(dfa: Dfa, symbols: Iterable[int]) -> tuple[int, bool]:
    return dfa.run(symbols)


def dfa_classification_error(dfa: Dfa, traces: Sequence[Trace]) -> float:
    return dfa.classification_error(traces)


def dfa_to_dot(dfa: Dfa, symbol_namer: Callable[[int], str] = str) -> str:
    return dfa.to_dot(symbol_namer)


def product_index(env_state: int, dfa_state: int, num_dfa_states: int) -> int:
    """Flat index of the product state ``(env_state, dfa_state)``."""
    return env_state * num_dfa_states + dfa_state


def from_edges(
    num_states: int,
    alphabet_size: int,
    edges: dict[int, dict[int, int]],
    accepting: Sequence[int],
) -> Dfa:
    """Build a DFA where every state loops by default.

    ``edges[q][sym] = r`` overrides the default self-loop.
    """
    delta = np.tile(np.arange(num_states)[:, None], (1, alphabet_size))
    for q, row in edges.items():
        for sym, r in row.items():
            delta[q, sym] = r
    acc = np.zeros(num_states, dtype=bool)
    acc[list(accepting)] = True
    return Dfa(delta, acc)
