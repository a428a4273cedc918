"""Reward-automaton learning and Q-learning for non-Markovian reward processes."""
from .autrl import AutRlAgent, AutRlConfig, EpochRecord, TraceStore, is_inconsistent, run_autrl
from .core import NmrdpEnv, StepOutcome, Trace, collect_trace, read_traces, write_traces
from .dfa import Dfa, dfa_empty, dfa_run, dfa_step, dfa_to_dot
from .envs import make_env, optimal_return
from .learner import DfaClassifier, LearnerConfig, aut_learn, best_of, objective
from .qlearn import QConfig, QTable, epsilon_greedy, greedy_eval, markov_learn, q_reset, q_update

__all__ = [
    "AutRlAgent", "AutRlConfig", "EpochRecord", "TraceStore", "is_inconsistent", "run_autrl",
    "NmrdpEnv", "StepOutcome", "Trace", "collect_trace", "read_traces", "write_traces",
    "Dfa", "dfa_empty", "dfa_run", "dfa_step", "dfa_to_dot",
    "make_env", "optimal_return",
    "DfaClassifier", "LearnerConfig", "aut_learn", "best_of", "objective",
    "QConfig", "QTable", "epsilon_greedy", "greedy_eval", "markov_learn", "q_reset", "q_update",
]
