"""Tabular Q-learning over the product of environment and DFA states."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NmrdpEnv, Trace
from .dfa import Dfa


@dataclass(frozen=True)
class QConfig:
    learning_rate: float = 0.1
    epsilon: float = 0.01
    epsilon_decay: float = 1.0
    epsilon_min: float = 0.001
    gamma: float = 0.99
    episodes_per_epoch: int = 100
    offline: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.epsilon <= 1 or not 0 <= self.epsilon_min <= 1:
            raise ValueError("epsilon and epsilon_min must lie in [0, 1]")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError("epsilon_decay must lie in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.episodes_per_epoch < 0:
            raise ValueError("episodes_per_epoch must be >= 0")

    def decayed(self, epsilon: float) -> float:
        """Exploration rate for the next epoch."""
        if self.epsilon_decay == 1.0:
            return epsilon
        return max(epsilon * self.epsilon_decay, self.epsilon_min)


class QTable:
    """Action values indexed by ``(env_state * num_dfa_states + dfa_state, action)``."""

    def __init__(self, num_env_states: int, num_dfa_states: int, num_actions: int,
                 values: np.ndarray | None = None):
        self.num_env_states = num_env_states
        self.num_dfa_states = num_dfa_states
        self.num_actions = num_actions
        shape = (num_env_states * num_dfa_states, num_actions)
        if values is None:
            values = np.zeros(shape)
        elif values.shape != shape:
            raise ValueError(f"values have shape {values.shape}, expected {shape}")
        self.values = values

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def index(self, env_state: int, dfa_state: int) -> int:
        if not 0 <= env_state < self.num_env_states:
            raise ValueError(f"env state {env_state} out of range")
        if not 0 <= dfa_state < self.num_dfa_states:
            raise ValueError(f"DFA state {dfa_state} out of range")
        return env_state * self.num_dfa_states + dfa_state

    def matches(self, env: NmrdpEnv, dfa: Dfa) -> bool:
        return (self.num_env_states, self.num_dfa_states, self.num_actions) == (
            env.num_states, dfa.num_states, env.num_actions)

    def copy(self) -> "QTable":
        return QTable(self.num_env_states, self.num_dfa_states, self.num_actions,
                      self.values.copy())

    def dumps(self) -> str:
        lines = []
        for s in range(self.num_env_states):
            for q in range(self.num_dfa_states):
                row = self.values[s * self.num_dfa_states + q]
                lines += [f"q {s} {q} {a} {float(row[a])!r}" for a in range(self.num_actions)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, num_env_states: int, num_dfa_states: int,
              num_actions: int) -> "QTable":
        table = cls(num_env_states, num_dfa_states, num_actions)
        for lineno, ln in enumerate(text.splitlines(), start=1):
            toks = ln.split()
            if not toks:
                continue
            if toks[0] != "q" or len(toks) != 5:
                raise ValueError(f"line {lineno}: expected 'q <env_state> <dfa_state> <action> <value>'")
            s, q, a = int(toks[1]), int(toks[2]), int(toks[3])
            if not 0 <= a < num_actions:
                raise ValueError(f"line {lineno}: action {a} out of range")
            table.values[table.index(s, q), a] = float(toks[4])
        return table


def q_reset(env: NmrdpEnv, dfa: Dfa) -> QTable:
    return QTable(env.num_states, dfa.num_states, env.num_actions)


def q_update(q: QTable, s: int, a: int, r: float, s_next: int, done: bool,
             cfg: QConfig) -> QTable:
    """One-step Q-learning backup on flat product indices ``s`` and ``s_next``."""
    n, A = q.values.shape
    if not (0 <= s < n and 0 <= s_next < n and 0 <= a < A):
        raise ValueError(f"index out of range: s={s}, a={a}, s'={s_next} for table {q.shape}")
    target = r if done else r + cfg.gamma * q.values[s_next].max()
    q.values[s, a] += cfg.learning_rate * (target - q.values[s, a])
    return q


def _greedy(row: np.ndarray, rng: np.random.Generator) -> int:
    # rows are tiny, so plain Python beats numpy's per-call overhead here
    vals = row.tolist()
    best = max(vals)
    if vals.count(best) == 1:
        return vals.index(best)
    ties = [a for a, v in enumerate(vals) if v == best]
    return ties[int(rng.integers(len(ties)))]


def epsilon_greedy(q: QTable, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform action with probability ``epsilon``, else argmax with random tie-break."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(q.num_actions))
    return _greedy(q.values[s], rng)


@dataclass
class EpochStats:
    episodes: int = 0
    env_steps: int = 0
    rewards: list[int] = field(default_factory=list)

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.rewards)) if self.rewards else 0.0


def _run_episode(env, dfa, q, epsilon, rng, learn_cfg=None, start=None):
    """One episode under the current table; updates ``q`` online when ``learn_cfg`` is set."""
    s = env.reset(rng, start)
    d = 0
    Qn = dfa.num_states
    delta = dfa.delta
    A = env.num_actions
    values = q.values
    total = 0
    done = False
    while not done:
        i = s * Qn + d
        if epsilon > 0 and rng.random() < epsilon:
            a = int(rng.integers(A))
        else:
            a = _greedy(values[i], rng)
        s2, r, done = env.step(a, rng)
        d2 = int(delta[d, s * A + a])
        if learn_cfg is not None:
            j = s2 * Qn + d2
            target = r if done else r + learn_cfg.gamma * max(values[j].tolist())
            values[i, a] += learn_cfg.learning_rate * (target - values[i, a])
        total += r
        s, d = s2, d2
    symbols = tuple(st * A + ac for st, ac in env.history)
    return Trace(symbols, int(total > 0)), total


def _replay(env, dfa, q, trace, cfg):
    """Apply Q-updates along a recorded trace; reward sits on the final step."""
    Qn, A = dfa.num_states, env.num_actions
    d = 0
    n = len(trace.symbols)
    for t, sym in enumerate(trace.symbols):
        s, a = divmod(sym, A)
        d2 = int(dfa.delta[d, sym])
        last = t == n - 1
        if last:
            # the episode ended here, so the next env state is never used
            s2 = s
        else:
            s2 = trace.symbols[t + 1] // A
        r = trace.label if last else 0
        q_update(q, s * Qn + d, a, r, s2 * Qn + d2, last, cfg)
        d = d2


def markov_learn(env: NmrdpEnv, dfa: Dfa, q: QTable, cfg: QConfig, rng: np.random.Generator,
                 epsilon: float | None = None) -> tuple[QTable, EpochStats, list[Trace]]:
    """Run one epoch of ε-greedy episodes on the product and learn from them.

    The epoch's episodes double as the sampled traces.  With
    ``cfg.offline`` the table is frozen while acting and the updates are
    replayed from the recorded traces afterwards.
    """
    if not q.matches(env, dfa):
        raise ValueError(
            f"Q-table dims {q.shape} do not match env ({env.num_states} states) "
            f"x DFA ({dfa.num_states} states)")
    eps = cfg.epsilon if epsilon is None else epsilon
    stats = EpochStats()
    traces = []
    for _ in range(cfg.episodes_per_epoch):
        tr, total = _run_episode(env, dfa, q, eps, rng, None if cfg.offline else cfg)
        traces.append(tr)
        stats.episodes += 1
        stats.env_steps += len(tr)
        stats.rewards.append(total)
    if cfg.offline:
        for tr in traces:
            _replay(env, dfa, q, tr, cfg)
    return q, stats, traces


def greedy_rollouts(env: NmrdpEnv, dfa: Dfa, q: QTable, episodes: int,
                    rng: np.random.Generator, start: int | None = None) -> tuple[np.ndarray, int]:
    """Rewards of ``episodes`` greedy episodes and the steps they used."""
    if not q.matches(env, dfa):
        raise ValueError(f"Q-table dims {q.shape} do not match env x DFA")
    rewards = np.zeros(episodes)
    steps = 0
    for k in range(episodes):
        tr, total = _run_episode(env, dfa, q, 0.0, rng, None, start)
        rewards[k] = total
        steps += len(tr)
    return rewards, steps


def greedy_eval(env: NmrdpEnv, dfa: Dfa, q: QTable, episodes: int,
                rng: np.random.Generator, start: int | None = None) -> float:
    """Mean reward of the greedy policy (ε = 0, no learning)."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rewards, _ = greedy_rollouts(env, dfa, q, episodes, rng, start)
    return float(rewards.mean())
