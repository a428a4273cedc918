"""Multi-seed experiment runner and artifact export."""
from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autrl import EpochRecord, RunResult, run_autrl
from .config import ExperimentConfig
from .envs import make_env

RUN_COLUMNS = ("epoch", "env_steps", "mean_train_reward", "greedy_reward", "dfa_states",
               "retrained", "epsilon")
OUT_ENV = "AUTRL_OUT"

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AggregateCurve:
    env_steps: np.ndarray
    mean: np.ndarray
    ci95: np.ndarray


def output_dir(cfg: ExperimentConfig) -> Path:
    """``$AUTRL_OUT`` when set, else the configured directory."""
    return Path(os.environ.get(OUT_ENV) or cfg.output_dir)


def history_csv(history: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for r in history:
        w.writerow([r.epoch, r.env_steps, f"{r.mean_train_reward:.6f}", f"{r.greedy_reward:.6f}",
                    r.dfa_states, int(r.retrained), f"{r.epsilon:.8g}"])
    return buf.getvalue()


def read_history(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in RUN_COLUMNS}


def _points(histories, every):
    top = max((h[-1].env_steps for h in histories if h), default=0)
    if top == 0:
        return np.zeros(0, dtype=np.int64)
    pts = list(range(every, top + 1, every))
    if not pts or pts[-1] != top:
        pts.append(top)
    return np.array(pts, dtype=np.int64)


def step_values(steps: np.ndarray, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Value of the last record with ``env_steps <= x`` for each point (0 before the first)."""
    idx = np.searchsorted(steps, points, side="right") - 1
    return np.where(idx >= 0, values[np.maximum(idx, 0)], 0.0)


def aggregate(histories: Sequence[Sequence[EpochRecord]], every: int) -> AggregateCurve:
    """Mean greedy reward and normal 95% CI half-width on a common step grid.

    Each run contributes its most recent greedy evaluation at or before
    each grid point, so runs that stopped early carry their last value.
    """
    points = _points(histories, every)
    vals = np.array([
        step_values(np.array([r.env_steps for r in h]), np.array([r.greedy_reward for r in h]),
                    points)
        for h in histories
    ]).reshape(len(histories), len(points))
    return curve_from_values(points, vals)


def curve_from_values(points: np.ndarray, vals: np.ndarray) -> AggregateCurve:
    n = vals.shape[0]
    mean = vals.mean(axis=0) if n else np.zeros(len(points))
    if n > 1:
        ci = 1.96 * vals.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        ci = np.zeros(len(points))
    return AggregateCurve(points, mean, ci)


def aggregate_csv(curve: AggregateCurve) -> str:
    lines = ["env_steps,mean,ci95"]
    lines += [f"{x},{m:.6f},{c:.6f}" for x, m, c in zip(curve.env_steps, curve.mean, curve.ci95)]
    return "\n".join(lines) + "\n"


def _run_one(args) -> RunResult:
    env_name, env_kwargs, autrl_cfg, seed = args
    return run_autrl(make_env(env_name, **env_kwargs), autrl_cfg, seed)


def run_seeds(cfg: ExperimentConfig) -> list[RunResult]:
    """Run every seed of ``cfg``; results come back in seed order."""
    jobs = [(cfg.env, cfg.env_kwargs, cfg.autrl, cfg.base_seed + i) for i in range(cfg.num_runs)]
    workers = cfg.workers or os.cpu_count() or 1
    workers = min(workers, len(jobs))
    if workers > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_run_one, jobs))
        except (BrokenProcessPool, OSError) as exc:
            # each run depends only on its seed, so serial output is identical
            log.warning("worker pool unavailable (%s); running seeds serially", exc)
    return [_run_one(j) for j in jobs]


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from None


def run_experiment(cfg: ExperimentConfig, out: Path | str | None = None
                   ) -> tuple[AggregateCurve, list[RunResult]]:
    """Run all seeds, write per-run and aggregate files, return the curve and runs."""
    out = Path(out) if out is not None else output_dir(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    results = run_seeds(cfg)
    env = make_env(cfg.env, **cfg.env_kwargs)
    for i, res in enumerate(results):
        _write(out / f"run_{i}.csv", history_csv(res.history))
        _write(out / f"run_{i}.dfa", res.dfa.dumps())
        _write(out / f"run_{i}.dot", res.dfa.to_dot(env.symbol_name))
    every = cfg.aggregate_every
    if every is None:
        budget = cfg.autrl.max_env_steps or max((r.history[-1].env_steps for r in results
                                                 if r.history), default=1)
        every = max(budget // 100, 1)
    curve = aggregate([r.history for r in results], every)
    _write(out / "aggregate.csv", aggregate_csv(curve))
    return curve, results
