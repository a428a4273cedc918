"""The outer AutRL loop: sample, check the automaton, relearn it, learn values."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .core import NmrdpEnv, Trace
from .dfa import Dfa
from .envs import make_env
from .learner import LearnerConfig, aut_learn
from .qlearn import QConfig, QTable, greedy_rollouts, markov_learn, q_reset

REPLACEMENT_MODES = ("strict", "weak")


class TraceStore:
    """Every positive trace ever seen plus a FIFO window of negatives."""

    def __init__(self, negative_capacity: int = 2000):
        if negative_capacity < 1:
            raise ValueError("negative_capacity must be >= 1")
        self.positives: list[Trace] = []
        self.negatives: deque[Trace] = deque(maxlen=negative_capacity)

    def add(self, traces: Iterable[Trace]) -> None:
        for tr in traces:
            (self.positives if tr.label else self.negatives).append(tr)

    def traces(self) -> list[Trace]:
        return self.positives + list(self.negatives)

    def __len__(self):
        return len(self.positives) + len(self.negatives)


@dataclass(frozen=True)
class AutRlConfig:
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    q: QConfig = field(default_factory=QConfig)
    epochs: int = 1000
    max_env_steps: int | None = None
    replacement_mode: str = "strict"
    weak_threshold: float = 0.5
    weak_window: int = 5
    negative_capacity: int = 2000
    eval_episodes: int = 100
    warm_start: bool = True
    stop_reward: float | None = None
    stop_patience: int = 10

    def __post_init__(self):
        if self.replacement_mode not in REPLACEMENT_MODES:
            raise ValueError(
                f"replacement_mode must be one of {REPLACEMENT_MODES}, got {self.replacement_mode!r}")
        if not 0 <= self.weak_threshold <= 1:
            raise ValueError("weak_threshold must lie in [0, 1]")
        if self.weak_window < 1 or self.epochs < 0 or self.eval_episodes < 0:
            raise ValueError("weak_window must be >= 1; epochs and eval_episodes >= 0")
        if self.max_env_steps is not None and self.max_env_steps < 0:
            raise ValueError("max_env_steps must be >= 0")
        if self.stop_patience < 1:
            raise ValueError("stop_patience must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    env_steps: int
    mean_train_reward: float
    greedy_reward: float
    dfa_states: int
    retrained: bool
    epsilon: float
    eval_steps: int = 0


@dataclass
class RunResult:
    dfa: Dfa
    q: QTable
    history: list[EpochRecord]
    retrain_epochs: list[int]
    store: TraceStore

    def __iter__(self):
        # unpacks as (dfa, q, history)
        return iter((self.dfa, self.q, self.history))


def _accepts_proper_prefix(dfa: Dfa, symbols: Sequence[int]) -> bool:
    delta, acc = dfa.delta, dfa.accepting
    q = 0
    for sym in symbols[:-1]:
        q = delta[q, sym]
        if acc[q]:
            return True
    return False


def is_inconsistent(dfa: Dfa, traces: Iterable[Trace], prefixes: bool = False) -> bool:
    """True when ``dfa`` misclassifies at least one trace.

    With ``prefixes`` every proper prefix also counts as an unrewarded
    history, so accepting one is a misclassification too.
    """
    return any(dfa.accepts(tr.symbols) != (tr.label == 1)
               or (prefixes and _accepts_proper_prefix(dfa, tr.symbols)) for tr in traces)


def _weak_performance(rewards: Sequence[float], since: int, rho: float, w: int) -> bool:
    """True when the last epoch's reward fell below ``rho`` times the best
    ``w``-epoch moving average earned under the current automaton.

    ``rewards`` are the mean training rewards of every epoch so far and
    ``since`` is the first epoch under the current automaton.
    """
    prior = np.asarray(rewards[since:-1], dtype=float)
    if prior.size < w:
        return False
    windows = np.convolve(prior, np.ones(w) / w, mode="valid")
    return rewards[-1] < rho * windows.max()


def missed_reward(dfa: Dfa, traces: Iterable[Trace]) -> bool:
    """True when some rewarded trace is rejected by ``dfa``."""
    return any(tr.label == 1 and not dfa.accepts(tr.symbols) for tr in traces)


def run_autrl(env: NmrdpEnv | str, cfg: AutRlConfig, seed: int) -> RunResult:
    """Run AutRL for ``cfg.epochs`` epochs (or until the step budget runs out).

    Strict mode relearns the automaton whenever an epoch produced a trace
    it misclassifies (including its proper prefixes when the learner
    scores them).  Weak mode waits ``cfg.weak_window`` epochs after
    each relearn and then relearns when the epoch's training reward falls
    below ``cfg.weak_threshold`` times the best windowed reward under the
    current automaton, or when the automaton rejects a rewarded trace
    while accepting none of the rewarded traces seen so far (this is what
    replaces the initial empty automaton).
    Either way relearning needs at least one positive trace, and the
    Q-table is reset only if the automaton actually changed.  Each epoch
    ends with a greedy evaluation whose steps are not counted in
    ``env_steps``.
    """
    env = make_env(env) if isinstance(env, str) else env
    ss = np.random.SeedSequence(seed)
    act_seq, eval_seq, learn_seq = ss.spawn(3)
    rng = np.random.default_rng(act_seq)
    eval_rng = np.random.default_rng(eval_seq)
    learn_seeds = learn_seq.generate_state(1 << 12)

    dfa = Dfa.empty(env.num_symbols)
    q = q_reset(env, dfa)
    store = TraceStore(cfg.negative_capacity)
    epsilon = cfg.q.epsilon
    history: list[EpochRecord] = []
    rewards: list[float] = []
    retrains: list[int] = []
    since = 0
    last_retrain = None
    explained = False
    env_steps = 0
    streak = 0
    for epoch in range(cfg.epochs):
        if cfg.max_env_steps is not None and env_steps >= cfg.max_env_steps:
            break
        q, stats, traces = markov_learn(env, dfa, q, cfg.q, rng, epsilon)
        env_steps += stats.env_steps
        store.add(traces)
        rewards.append(stats.mean_reward)
        eps_used = epsilon
        epsilon = cfg.q.decayed(epsilon)

        if cfg.replacement_mode == "strict":
            trigger = is_inconsistent(dfa, traces, cfg.learner.prefix_negatives)
        else:
            stalled = not explained and missed_reward(dfa, traces)
            explained = explained or any(tr.label and dfa.accepts(tr.symbols) for tr in traces)
            trigger = (last_retrain is None or epoch - last_retrain >= cfg.weak_window) and (
                stalled or _weak_performance(rewards, since, cfg.weak_threshold, cfg.weak_window))
        retrained = False
        if trigger and store.positives:
            new = aut_learn(store.traces(), cfg.learner,
                            seed=int(learn_seeds[len(retrains) % len(learn_seeds)]),
                            alphabet_size=env.num_symbols,
                            init=dfa if cfg.warm_start else None)
            retrains.append(epoch)
            retrained = True
            last_retrain = epoch
            if new != dfa:
                dfa = new
                q = q_reset(env, dfa)
                since = epoch + 1
                explained = any(dfa.accepts(tr.symbols) for tr in store.positives)

        greedy = 0.0
        eval_steps = 0
        if cfg.eval_episodes:
            g, eval_steps = greedy_rollouts(env, dfa, q, cfg.eval_episodes, eval_rng)
            greedy = float(g.mean())
        history.append(EpochRecord(epoch, env_steps, stats.mean_reward, greedy,
                                   dfa.num_states, retrained, eps_used, eval_steps))
        if cfg.stop_reward is not None:
            streak = streak + 1 if greedy >= cfg.stop_reward else 0
            if streak >= cfg.stop_patience:
                break
    return RunResult(dfa, q, history, retrains, store)


class AutRlAgent(BaseEstimator):
    """Estimator-style wrapper around :func:`run_autrl`.

    ``fit(env)`` trains on an environment (instance or name); afterwards
    ``dfa_``, ``q_`` and ``history_`` hold the run and ``predict`` gives
    greedy actions for ``(env_state, dfa_state)`` pairs.
    """

    def __init__(self, config: AutRlConfig | None = None, random_state: int = 0):
        self.config = config
        self.random_state = random_state

    def fit(self, env, y=None):
        cfg = self.config if self.config is not None else AutRlConfig()
        result = run_autrl(env, cfg, int(self.random_state))
        self.dfa_, self.q_, self.history_ = result.dfa, result.q, result.history
        self.retrain_epochs_ = result.retrain_epochs
        return self

    def predict(self, X):
        """Greedy action (lowest index on ties) for each ``(env_state, dfa_state)`` row."""
        X = np.asarray(X, dtype=np.int64).reshape(-1, 2)
        idx = [self.q_.index(int(s), int(d)) for s, d in X]
        return self.q_.values[idx].argmax(axis=1)


def with_updates(cfg: AutRlConfig, **kwargs) -> AutRlConfig:
    return replace(cfg, **kwargs)
