"""The four benchmark domains and exact dynamic-programming oracles over them."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .core import NmrdpEnv

ENV_NAMES = ("bandit", "hallway", "grid", "grid-stochastic")

LEFT, RIGHT = 0, 1
UP, DOWN, GRID_LEFT, GRID_RIGHT = 0, 1, 2, 3


class BanditEnv(NmrdpEnv):
    """Single state, two arms; reward only for one exact six-pull sequence."""

    name = "bandit"
    num_states = 1
    num_actions = 2
    horizon = 6
    action_names = ("L", "R")
    goal = (LEFT, RIGHT, RIGHT, LEFT, RIGHT, LEFT)

    def __init__(self):
        super().__init__()
        self._matched = 0  # length of matched goal prefix, -1 once broken

    def _reset(self, rng):
        self._matched = 0
        return 0

    def _reset_internal(self, start):
        self._matched = 0

    def spawn_distribution(self):
        return [(1.0, 0)]

    def _transition(self, state, action, rng):
        if self._matched >= 0 and self.goal[self._matched] == action:
            self._matched += 1
        else:
            self._matched = -1
        goal = self._matched == len(self.goal)
        return 0, int(goal), goal

    def augmented_start(self):
        return [(1.0, 0)]

    def augmented_step(self, node, action):
        if node >= 0 and self.goal[node] == action:
            nxt = node + 1
        else:
            nxt = -1
        goal = nxt == len(self.goal)
        return [(1.0, nxt, float(goal), goal)]

    def augmented_env_state(self, node):
        return 0

    def replay_label(self, symbols):
        actions = tuple(self.decode(s)[1] for s in symbols)
        return int(actions == self.goal)

    def sample_random_batch(self, n, rng):
        acts = rng.integers(2, size=(n, self.horizon))
        labels = np.all(acts == np.array(self.goal), axis=1).astype(np.int64)
        lengths = np.full(n, self.horizon, dtype=np.int64)
        return acts.astype(np.int64), lengths, labels


class HallwayEnv(NmrdpEnv):
    """1x10 corridor: touch the right end, then come back to the left end.

    Spawn is uniform over the left half (squares 0..4); moves are clamped
    at both walls.
    """

    name = "hallway"
    length = 10
    num_states = 10
    num_actions = 2
    horizon = 30
    action_names = ("L", "R")

    def __init__(self):
        super().__init__()
        self._visited_end = False

    def _reset(self, rng):
        self._visited_end = False
        return int(rng.integers(self.length // 2))

    def _reset_internal(self, start):
        self._visited_end = start == self.length - 1

    def spawn_distribution(self):
        half = self.length // 2
        return [(1.0 / half, s) for s in range(half)]

    def _move(self, pos, action):
        if action == RIGHT:
            return min(pos + 1, self.length - 1)
        return max(pos - 1, 0)

    def _transition(self, state, action, rng):
        nxt = self._move(state, action)
        if nxt == self.length - 1:
            self._visited_end = True
        goal = self._visited_end and nxt == 0
        return nxt, int(goal), goal

    def augmented_start(self):
        return [(p, (s, False)) for p, s in self.spawn_distribution()]

    def augmented_step(self, node, action):
        pos, phase = node
        nxt = self._move(pos, action)
        phase = phase or nxt == self.length - 1
        goal = phase and nxt == 0
        return [(1.0, (nxt, phase), float(goal), goal)]

    def augmented_env_state(self, node):
        return node[0]

    def replay_label(self, symbols):
        phase = False
        for sym in symbols:
            pos, a = self.decode(sym)
            phase = phase or pos == self.length - 1
            nxt = self._move(pos, a)
            phase = phase or nxt == self.length - 1
            if phase and nxt == 0:
                return 1
        return 0

    def sample_random_batch(self, n, rng):
        H = self.horizon
        pos = rng.integers(self.length // 2, size=n)
        acts = rng.integers(2, size=(n, H))
        syms = np.zeros((n, H), dtype=np.int64)
        lengths = np.full(n, H, dtype=np.int64)
        labels = np.zeros(n, dtype=np.int64)
        alive = np.ones(n, dtype=bool)
        phase = np.zeros(n, dtype=bool)
        for t in range(H):
            syms[:, t] = pos * 2 + acts[:, t]
            nxt = np.clip(pos + np.where(acts[:, t] == RIGHT, 1, -1), 0, self.length - 1)
            phase |= nxt == self.length - 1
            hit = alive & phase & (nxt == 0)
            labels[hit] = 1
            lengths[hit] = t + 1
            alive &= ~hit
            pos = nxt
        return syms, lengths, labels


class GridworldEnv(NmrdpEnv):
    """5x5 grid: visit corner (4,0), then the opposite corner (0,4).

    Cell ``(x, y)`` has id ``y * 5 + x``; ``up`` increases ``y``.  The
    agent always spawns at (0,0).  In the stochastic variant each executed
    action is replaced by a random one with probability ``action_noise``
    and a goal-completing step pays out only with probability
    ``1 - reward_withhold``; the episode ends either way.
    """

    name = "grid"
    size = 5
    num_states = 25
    num_actions = 4
    horizon = 20
    action_names = ("up", "down", "left", "right")
    first_corner = (4, 0)
    second_corner = (0, 4)
    spawn = (0, 0)

    def __init__(self, stochastic=False, action_noise=0.1, reward_withhold=0.1,
                 noise_mode="any"):
        super().__init__()
        if noise_mode not in ("any", "other"):
            raise ValueError(f"noise_mode must be 'any' or 'other', got {noise_mode!r}")
        self.stochastic = stochastic
        self.deterministic = not stochastic
        self.action_noise = action_noise if stochastic else 0.0
        self.reward_withhold = reward_withhold if stochastic else 0.0
        self.noise_mode = noise_mode
        if stochastic:
            self.name = "grid-stochastic"
        self._visited_first = False

    def cell(self, x, y):
        return y * self.size + x

    def coords(self, state):
        return state % self.size, state // self.size

    def state_name(self, state):
        x, y = self.coords(state)
        return f"({x},{y})"

    def _reset(self, rng):
        self._visited_first = False
        return self.cell(*self.spawn)

    def _reset_internal(self, start):
        self._visited_first = start == self.cell(*self.first_corner)

    def spawn_distribution(self):
        return [(1.0, self.cell(*self.spawn))]

    def _move(self, state, action):
        x, y = self.coords(state)
        if action == UP:
            y = min(y + 1, self.size - 1)
        elif action == DOWN:
            y = max(y - 1, 0)
        elif action == GRID_LEFT:
            x = max(x - 1, 0)
        else:
            x = min(x + 1, self.size - 1)
        return self.cell(x, y)

    def _action_outcomes(self, action):
        """Distribution over executed actions for an intended ``action``."""
        if not self.stochastic or self.action_noise == 0:
            return [(1.0, action)]
        eps = self.action_noise
        if self.noise_mode == "any":
            out = {a: eps / self.num_actions for a in range(self.num_actions)}
            out[action] += 1.0 - eps
        else:
            out = {a: eps / (self.num_actions - 1) for a in range(self.num_actions)}
            out[action] = 1.0 - eps
        return sorted((p, a) for a, p in out.items())

    def _transition(self, state, action, rng):
        if self.stochastic and rng.random() < self.action_noise:
            if self.noise_mode == "any":
                action = int(rng.integers(self.num_actions))
            else:
                action = int((action + 1 + rng.integers(self.num_actions - 1)) % self.num_actions)
        nxt = self._move(state, action)
        if nxt == self.cell(*self.first_corner):
            self._visited_first = True
        goal = self._visited_first and nxt == self.cell(*self.second_corner)
        reward = int(goal)
        if goal and self.stochastic and rng.random() < self.reward_withhold:
            reward = 0
        return nxt, reward, goal

    def augmented_start(self):
        return [(1.0, (self.cell(*self.spawn), False))]

    def augmented_step(self, node, action):
        state, phase = node
        pay = 1.0 - self.reward_withhold
        merged: dict = {}
        for p, a in self._action_outcomes(action):
            nxt = self._move(state, a)
            ph = phase or nxt == self.cell(*self.first_corner)
            goal = ph and nxt == self.cell(*self.second_corner)
            key = ((nxt, ph), goal)
            merged[key] = merged.get(key, 0.0) + p
        return [(p, node2, pay if goal else 0.0, goal) for (node2, goal), p in merged.items()]

    def augmented_env_state(self, node):
        return node[0]

    def replay_label(self, symbols):
        phase = False
        first = self.cell(*self.first_corner)
        second = self.cell(*self.second_corner)
        for sym in symbols:
            s, a = self.decode(sym)
            phase = phase or s == first
            nxt = self._move(s, a)
            phase = phase or nxt == first
            if phase and nxt == second:
                return 1
        return 0

    def sample_random_batch(self, n, rng):
        H, S = self.horizon, self.size
        x = np.full(n, self.spawn[0])
        y = np.full(n, self.spawn[1])
        acts = rng.integers(4, size=(n, H))
        syms = np.zeros((n, H), dtype=np.int64)
        lengths = np.full(n, H, dtype=np.int64)
        labels = np.zeros(n, dtype=np.int64)
        alive = np.ones(n, dtype=bool)
        phase = np.zeros(n, dtype=bool)
        for t in range(H):
            a = acts[:, t]
            syms[:, t] = (y * S + x) * 4 + a
            if self.stochastic:
                flip = rng.random(n) < self.action_noise
                if self.noise_mode == "any":
                    alt = rng.integers(4, size=n)
                else:
                    alt = (a + 1 + rng.integers(3, size=n)) % 4
                a = np.where(flip, alt, a)
            y = np.clip(y + (a == UP) - (a == DOWN), 0, S - 1)
            x = np.clip(x + (a == GRID_RIGHT) - (a == GRID_LEFT), 0, S - 1)
            phase |= (x == self.first_corner[0]) & (y == self.first_corner[1])
            hit = alive & phase & (x == self.second_corner[0]) & (y == self.second_corner[1])
            if self.stochastic:
                paid = hit & (rng.random(n) >= self.reward_withhold)
            else:
                paid = hit
            labels[paid] = 1
            lengths[hit] = t + 1
            alive &= ~hit
        return syms, lengths, labels


def make_env(name: str, **kwargs) -> NmrdpEnv:
    """Build a fresh environment by its CLI name."""
    key = name.replace("_", "-")
    if key == "bandit":
        return BanditEnv()
    if key == "hallway":
        return HallwayEnv()
    if key == "grid":
        return GridworldEnv(stochastic=False)
    if key == "grid-stochastic":
        return GridworldEnv(stochastic=True, **kwargs)
    raise ValueError(f"unknown environment {name!r}; expected one of {', '.join(ENV_NAMES)}")


def _as_env(env_or_name):
    return make_env(env_or_name) if isinstance(env_or_name, str) else env_or_name


def optimal_return(env_or_name) -> float:
    """Best achievable expected episode reward, by backward induction over (node, t)."""
    env = _as_env(env_or_name)

    @lru_cache(maxsize=None)
    def value(node, t):
        if t == env.horizon:
            return 0.0
        best = 0.0
        for a in range(env.num_actions):
            q = 0.0
            for p, nxt, r, goal in env.augmented_step(node, a):
                q += p * (r + (0.0 if goal else value(nxt, t + 1)))
            best = max(best, q)
        return best

    return sum(p * value(node, 0) for p, node in env.augmented_start())


def policy_return(env_or_name, action_probs) -> float:
    """Exact expected reward of a memoryless stochastic policy.

    ``action_probs(env_state)`` returns a length-``num_actions`` vector.
    """
    env = _as_env(env_or_name)
    dist = {}
    for p, node in env.augmented_start():
        dist[node] = dist.get(node, 0.0) + p
    total = 0.0
    for _ in range(env.horizon):
        nxt_dist: dict = {}
        for node, pn in dist.items():
            probs = action_probs(env.augmented_env_state(node))
            for a, pa in enumerate(probs):
                if pa == 0:
                    continue
                for p, nxt, r, goal in env.augmented_step(node, a):
                    w = pn * pa * p
                    total += w * r
                    if not goal:
                        nxt_dist[nxt] = nxt_dist.get(nxt, 0.0) + w
        dist = nxt_dist
    return total


def random_policy_return(env_or_name) -> float:
    env = _as_env(env_or_name)
    uniform = np.full(env.num_actions, 1.0 / env.num_actions)
    return policy_return(env, lambda s: uniform)


def best_memoryless_return(env_or_name) -> tuple[float, tuple[int, ...]]:
    """Best deterministic state-only policy by exhaustive enumeration."""
    env = _as_env(env_or_name)
    n = env.num_actions ** env.num_states
    if n > 1 << 16:
        raise ValueError(f"{n} memoryless policies is too many to enumerate")
    best, best_pi = -1.0, None
    eye = np.eye(env.num_actions)
    for pi in itertools.product(range(env.num_actions), repeat=env.num_states):
        v = policy_return(env, lambda s, pi=pi: eye[pi[s]])
        if v > best + 1e-12:
            best, best_pi = v, pi
    return best, best_pi


def shortest_goal_length(env_or_name) -> int | None:
    """Fewest steps to a goal history from the spawn (deterministic dynamics)."""
    env = _as_env(env_or_name)
    frontier = {node for _, node in env.augmented_start()}
    for t in range(1, env.horizon + 1):
        nxt = set()
        for node in frontier:
            for a in range(env.num_actions):
                for p, node2, r, goal in env.augmented_step(node, a):
                    if goal:
                        return t
                    nxt.add(node2)
        frontier = nxt
    return None
