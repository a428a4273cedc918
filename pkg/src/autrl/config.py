"""Experiment configuration: strict INI files over per-environment defaults.

A config file has an ``[experiment]`` section naming the environment and
optional ``[learner]``, ``[q]``, ``[autrl]`` and ``[env]`` sections whose
keys override that environment's defaults::

    [experiment]
    env = hallway
    num_runs = 30

    [learner]
    restarts = 3

Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .autrl import AutRlConfig
from .envs import ENV_NAMES
from .learner import LearnerConfig
from .qlearn import QConfig

# Hyperparameters fixed by the benchmark description, plus our search and
# budget settings.  Step budgets match the acceptance budgets per domain.
ENV_DEFAULTS: dict[str, dict[str, dict[str, Any]]] = {
    "bandit": {
        "learner": dict(max_states=14, loop_penalty=0.01, transition_penalty=0.01,
                        restarts=4, anneal_steps=20000),
        "q": dict(learning_rate=0.1, epsilon=0.01),
        "autrl": dict(max_env_steps=300_000, replacement_mode="strict"),
    },
    "hallway": {
        "learner": dict(max_states=5, loop_penalty=0.01, transition_penalty=0.6,
                        restarts=2, anneal_steps=2000),
        "q": dict(learning_rate=0.1, epsilon=0.01),
        "autrl": dict(max_env_steps=500_000, replacement_mode="strict"),
    },
    "grid": {
        "learner": dict(max_states=5, loop_penalty=0.01, transition_penalty=0.3,
                        restarts=2, anneal_steps=2000),
        "q": dict(learning_rate=0.1, epsilon=0.01),
        "autrl": dict(max_env_steps=1_000_000, replacement_mode="strict"),
    },
    "grid-stochastic": {
        "learner": dict(max_states=5, loop_penalty=0.01, transition_penalty=0.3,
                        restarts=2, anneal_steps=2000),
        "q": dict(learning_rate=0.001, epsilon=0.05, epsilon_decay=0.99, epsilon_min=0.001),
        "autrl": dict(max_env_steps=2_000_000, replacement_mode="weak",
                      weak_threshold=0.5, weak_window=5),
    },
}

_COMMON = {
    "learner": dict(timeout=250, sideways_cap=50, prefix_negatives=True),
    "autrl": dict(epochs=1_000_000),
}

ENV_KEYS = {
    "grid-stochastic": {"action_noise": 0.1, "reward_withhold": 0.1, "noise_mode": "any"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    autrl: AutRlConfig
    num_runs: int = 30
    base_seed: int = 0
    output_dir: str = "results"
    workers: int | None = None
    aggregate_every: int | None = None
    env_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.env not in ENV_NAMES:
            raise ValueError(f"unknown env {self.env!r}; expected one of {', '.join(ENV_NAMES)}")
        if self.num_runs < 1:
            raise ValueError("num_runs must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.aggregate_every is not None and self.aggregate_every < 1:
            raise ValueError("aggregate_every must be >= 1")


_EXPERIMENT_KEYS = {"env": str, "num_runs": int, "base_seed": int, "output_dir": str,
                    "workers": int, "aggregate_every": int}
_AUTRL_EXCLUDE = {"learner", "q"}


def _field_types(cls, exclude=()) -> dict[str, type]:
    types = {}
    for f in dataclasses.fields(cls):
        if f.name in exclude:
            continue
        default = f.default
        if f.name in ("max_env_steps", "stop_reward"):
            types[f.name] = int if f.name == "max_env_steps" else float
        elif isinstance(default, bool):
            types[f.name] = bool
        else:
            types[f.name] = type(default)
    return types


SECTIONS = {
    "experiment": _EXPERIMENT_KEYS,
    # each run derives its own learner seeds from the run seed
    "learner": _field_types(LearnerConfig, {"seed"}),
    "q": _field_types(QConfig),
    "autrl": _field_types(AutRlConfig, _AUTRL_EXCLUDE),
}
_OPTIONAL = {("autrl", "max_env_steps"), ("autrl", "stop_reward"),
             ("experiment", "workers"), ("experiment", "aggregate_every")}


class ConfigError(ValueError):
    pass


def defaults_for(env: str) -> dict[str, dict[str, Any]]:
    """Section -> key -> value defaults for ``env``."""
    key = env.replace("_", "-")
    if key not in ENV_DEFAULTS:
        raise ConfigError(f"unknown env {env!r}; expected one of {', '.join(ENV_NAMES)}")
    out = {sec: dict(vals) for sec, vals in _COMMON.items()}
    for sec, vals in ENV_DEFAULTS[key].items():
        out.setdefault(sec, {}).update(vals)
    out["env"] = dict(ENV_KEYS.get(key, {}))
    return out


def _convert(raw: str, typ: type, where: str, optional: bool):
    text = raw.strip()
    if optional and text.lower() in ("none", ""):
        return None
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ is int:
            return int(text.replace("_", ""))
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{where}: expected {typ.__name__}, got {raw!r}") from None


def _line_of(lines: list[str], section: str, key: str) -> int | None:
    current = None
    for i, ln in enumerate(lines, start=1):
        m = re.match(r"\s*\[([^\]]+)\]", ln)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", ln):
            return i
    return None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = text.splitlines()

    def where(sec, key):
        ln = _line_of(lines, sec, key)
        return f"{source}:{ln}: [{sec}] {key}" if ln else f"{source}: [{sec}] {key}"

    if not parser.has_section("experiment") or not parser.has_option("experiment", "env"):
        raise ConfigError(f"{source}: missing required key [experiment] env")
    env = parser.get("experiment", "env").strip().replace("_", "-")
    values = defaults_for(env)
    values["experiment"] = {}
    for sec in parser.sections():
        if sec == "env":
            allowed = {k: type(v) for k, v in values["env"].items()}
        elif sec in SECTIONS:
            allowed = SECTIONS[sec]
        else:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in allowed:
                raise ConfigError(f"{where(sec, key)}: unknown key {key!r}")
            values.setdefault(sec, {})[key] = _convert(
                raw, allowed[key], where(sec, key), (sec, key) in _OPTIONAL)
    values["experiment"]["env"] = env
    try:
        learner = LearnerConfig(**values.get("learner", {}))
        qcfg = QConfig(**values.get("q", {}))
        autrl = AutRlConfig(learner=learner, q=qcfg, **values.get("autrl", {}))
        return ExperimentConfig(autrl=autrl, env_kwargs=values["env"], **values["experiment"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, source=str(path))


def default_config(env: str, **experiment) -> ExperimentConfig:
    """The defaults for ``env`` without reading a file."""
    lines = ["[experiment]", f"env = {env}"]
    lines += [f"{k} = {v}" for k, v in experiment.items()]
    return parse_config("\n".join(lines) + "\n", source=f"<defaults:{env}>")
