"""Episode mechanics for non-Markovian reward decision processes.

An environment exposes a finite state set, a finite action set and a
binary reward that may depend on the whole state-action history of the
current episode.  Histories are written over the flat alphabet of
(state, action) pairs, ``symbol = state * num_actions + action``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np


class StepOutcome(NamedTuple):
    next_state: int
    reward: int
    done: bool


@dataclass(frozen=True)
class Trace:
    """One finished episode: the (state, action) symbols and its reward label."""

    symbols: tuple[int, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"trace label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))

    def __len__(self):
        return len(self.symbols)


class EpisodeFinished(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


class NmrdpEnv:
    """Base class for finite NMRDPs with binary goal rewards.

    Subclasses implement ``_reset`` and ``_transition`` and, for the
    exact dynamic-programming oracles, the augmented model hooks
    ``augmented_start`` / ``augmented_step`` / ``augmented_env_state``.
    """

    name = "nmrdp"
    num_states: int
    num_actions: int
    horizon: int
    gamma: float = 0.99
    deterministic = True
    action_names: Sequence[str] = ()

    def __init__(self):
        if self.num_states < 1 or self.num_actions < 2 or self.horizon < 1:
            raise ValueError("need num_states >= 1, num_actions >= 2, horizon >= 1")
        self._state = 0
        self._t = 0
        self._done = True
        self.history: list[tuple[int, int]] = []

    @property
    def num_symbols(self) -> int:
        return self.num_states * self.num_actions

    # -- symbols -------------------------------------------------------
    def encode(self, state: int, action: int) -> int:
        if not 0 <= state < self.num_states:
            raise ValueError(f"state {state} out of range [0, {self.num_states})")
        if not 0 <= action < self.num_actions:
            raise ValueError(f"action {action} out of range [0, {self.num_actions})")
        return state * self.num_actions + action

    def decode(self, symbol: int) -> tuple[int, int]:
        if not 0 <= symbol < self.num_symbols:
            raise ValueError(f"symbol {symbol} out of range [0, {self.num_symbols})")
        return divmod(symbol, self.num_actions)

    def state_name(self, state: int) -> str:
        return str(state)

    def symbol_name(self, symbol: int) -> str:
        s, a = self.decode(symbol)
        act = self.action_names[a] if self.action_names else str(a)
        return f"{self.state_name(s)}:{act}"

    # -- episodes ------------------------------------------------------
    @property
    def state(self) -> int:
        return self._state

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, rng: np.random.Generator, start: int | None = None) -> int:
        """Start a new episode; ``start`` forces the spawn state."""
        self.history = []
        self._t = 0
        self._done = False
        self._state = self._reset(rng) if start is None else self._forced_start(start)
        return self._state

    def _forced_start(self, start: int) -> int:
        if not 0 <= start < self.num_states:
            raise ValueError(f"start state {start} out of range")
        self._reset_internal(start)
        return start

    def step(self, action: int, rng: np.random.Generator) -> StepOutcome:
        if self._done:
            raise EpisodeFinished("episode is finished; call reset() first")
        if not 0 <= action < self.num_actions:
            raise ValueError(f"action {action} out of range [0, {self.num_actions})")
        self.history.append((self._state, action))
        self._t += 1
        nxt, reward, goal = self._transition(self._state, action, rng)
        self._state = nxt
        self._done = goal or self._t >= self.horizon
        return StepOutcome(nxt, reward, self._done)

    def _reset(self, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def _reset_internal(self, start: int) -> None:
        raise NotImplementedError

    def _transition(
        self, state: int, action: int, rng: np.random.Generator
    ) -> tuple[int, int, bool]:
        """Return ``(next_state, reward, goal_history_reached)``.

        The goal flag ends the episode even when the reward is withheld.
        """
        raise NotImplementedError

    def spawn_distribution(self) -> list[tuple[float, int]]:
        raise NotImplementedError

    # -- exact model for oracles ---------------------------------------
    def augmented_start(self) -> list[tuple[float, object]]:
        """Initial distribution over augmented (env state, reward memory) nodes."""
        raise NotImplementedError

    def augmented_step(self, node, action: int) -> list[tuple[float, object, float, bool]]:
        """Outcomes ``(prob, next_node, expected_reward, goal_terminal)``."""
        raise NotImplementedError

    def augmented_env_state(self, node) -> int:
        raise NotImplementedError

    def replay_label(self, symbols: Sequence[int]) -> int:
        """Reward label of a symbol history under deterministic dynamics."""
        raise NotImplementedError


def encode_symbol(state: int, action: int, env: NmrdpEnv) -> int:
    return env.encode(state, action)


def collect_trace(
    env: NmrdpEnv,
    policy: Callable[[int, np.random.Generator], int],
    rng: np.random.Generator,
) -> Trace:
    """Run one full episode of ``policy`` and return its labelled trace.

    ``policy(state, rng)`` is called once per step with the current
    environment state.
    """
    state = env.reset(rng)
    label = 0
    done = False
    while not done:
        action = policy(state, rng)
        state, reward, done = env.step(action, rng)
        if reward:
            label = 1
    return Trace(tuple(env.encode(s, a) for s, a in env.history), label)


def uniform_policy(num_actions: int) -> Callable[[int, np.random.Generator], int]:
    def policy(state, rng):
        return int(rng.integers(num_actions))

    return policy


def sequence_policy(actions: Sequence[int]) -> Callable[[int, np.random.Generator], int]:
    """Open-loop policy that replays ``actions`` in order, one per step."""
    counter = {"t": 0}

    def policy(state, rng):
        a = actions[counter["t"] % len(actions)]
        counter["t"] += 1
        return a

    return policy


def write_traces(path, traces: Sequence[Trace], alphabet_size: int) -> None:
    """Write traces as ``traces <alphabet_size>`` followed by ``<label> <sym>...`` lines."""
    with open(path, "w") as fh:
        fh.write(f"traces {alphabet_size}\n")
        for tr in traces:
            fh.write(" ".join(str(x) for x in (tr.label, *tr.symbols)) + "\n")


def read_traces(path) -> tuple[list[Trace], int]:
    """Parse a trace file; returns ``(traces, alphabet_size)``."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty trace file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "traces":
        raise ValueError(f"{path}:1: expected header 'traces <alphabet_size>'")
    try:
        alphabet = int(head[1])
    except ValueError:
        raise ValueError(f"{path}:1: alphabet size is not an integer") from None
    traces = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            nums = [int(x) for x in ln.split()]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-integer token") from None
        label, syms = nums[0], nums[1:]
        if label not in (0, 1):
            raise ValueError(f"{path}:{lineno}: label must be 0 or 1")
        if any(not 0 <= s < alphabet for s in syms):
            raise ValueError(f"{path}:{lineno}: symbol outside alphabet of size {alphabet}")
        traces.append(Trace(tuple(syms), label))
    return traces, alphabet
