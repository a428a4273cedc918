"""Command-line entry point: ``autrl run | learn-dfa | eval | export-dot``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .core import read_traces
from .dfa import Dfa
from .envs import ENV_NAMES, make_env
from .harness import output_dir, run_experiment
from .learner import LearnerConfig, aut_learn, objective


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.runs is not None:
        overrides["num_runs"] = args.runs
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = replace(cfg, **overrides)
    out = Path(args.out) if args.out else output_dir(cfg)
    curve, results = run_experiment(cfg, out)
    final = curve.mean[-1] if len(curve.mean) else 0.0
    ci = curve.ci95[-1] if len(curve.ci95) else 0.0
    print(f"{cfg.env}: {len(results)} runs, final greedy reward {final:.4f} +/- {ci:.4f}")
    print(f"wrote {out}")
    return 0


def _cmd_learn(args) -> int:
    traces, alphabet = read_traces(args.tracefile)
    if not traces:
        raise ValueError(f"{args.tracefile}: no traces")
    cfg = LearnerConfig(
        max_states=args.max_states, loop_penalty=args.loop_penalty,
        transition_penalty=args.transition_penalty, timeout=args.timeout,
        restarts=args.restarts, sideways_cap=args.sideways_cap,
        anneal_steps=args.anneal_steps, prefix_negatives=args.prefix_negatives, seed=args.seed)
    dfa = aut_learn(traces, cfg, alphabet_size=alphabet)
    stem = Path(args.tracefile).with_suffix("")
    dfa_path = Path(args.output) if args.output else stem.with_suffix(".dfa")
    dot_path = Path(args.dot) if args.dot else dfa_path.with_suffix(".dot")
    dfa.save(dfa_path)
    namer = make_env(args.env).symbol_name if args.env else str
    dot_path.write_text(dfa.to_dot(namer))
    obj = objective(dfa, traces, cfg)
    print(f"states {dfa.num_states} error {dfa.classification_error(traces):.6f} "
          f"objective {obj.total:.6f}")
    print(f"wrote {dfa_path} and {dot_path}")
    return 0


def _cmd_eval(args) -> int:
    dfa = Dfa.load(args.dfa_file)
    traces, alphabet = read_traces(args.tracefile)
    if alphabet != dfa.alphabet_size:
        raise ValueError(
            f"{args.tracefile}: alphabet size {alphabet} does not match DFA alphabet "
            f"{dfa.alphabet_size} in {args.dfa_file}")
    print(f"error {dfa.classification_error(traces):.6f}")
    return 0


def _cmd_dot(args) -> int:
    dfa = Dfa.load(args.dfa_file)
    namer = make_env(args.env).symbol_name if args.env else str
    text = dfa.to_dot(namer)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autrl", description=(
        "Learn reward automata from traces and run Q-learning on the product."))
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    r = sub.add_parser("run", help="run a multi-seed experiment from a config file")
    r.add_argument("config")
    r.add_argument("--runs", type=int, help="override num_runs")
    r.add_argument("--workers", type=int, help="override the worker pool size")
    r.add_argument("--out", help="output directory (overrides $AUTRL_OUT and the config)")
    r.set_defaults(func=_cmd_run)

    d = LearnerConfig()
    lrn = sub.add_parser("learn-dfa", help="fit a DFA to a trace file")
    lrn.add_argument("tracefile")
    lrn.add_argument("--max-states", type=int, default=d.max_states)
    lrn.add_argument("--loop-penalty", type=float, default=d.loop_penalty)
    lrn.add_argument("--transition-penalty", type=float, default=d.transition_penalty)
    lrn.add_argument("--timeout", type=int, default=d.timeout)
    lrn.add_argument("--restarts", type=int, default=d.restarts)
    lrn.add_argument("--sideways-cap", type=int, default=d.sideways_cap)
    lrn.add_argument("--anneal-steps", type=int, default=d.anneal_steps)
    lrn.add_argument("--prefix-negatives", action="store_true",
                     help="treat every proper prefix of a trace as a label-0 history")
    lrn.add_argument("--seed", type=int, default=d.seed)
    lrn.add_argument("--env", choices=ENV_NAMES, help="name symbols after this environment")
    lrn.add_argument("-o", "--output", help="DFA file (default: <tracefile>.dfa)")
    lrn.add_argument("--dot", help="DOT file (default: next to the DFA file)")
    lrn.set_defaults(func=_cmd_learn)

    e = sub.add_parser("eval", help="classification error of a DFA on a trace file")
    e.add_argument("dfa_file")
    e.add_argument("tracefile")
    e.set_defaults(func=_cmd_eval)

    x = sub.add_parser("export-dot", help="render a DFA file as Graphviz DOT")
    x.add_argument("dfa_file")
    x.add_argument("--env", choices=ENV_NAMES, help="name symbols after this environment")
    x.add_argument("-o", "--output", help="write to a file instead of stdout")
    x.set_defaults(func=_cmd_dot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"autrl {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
