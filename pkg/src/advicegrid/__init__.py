"""Hindsight teacher advice with language goals for gridworld DQN agents."""

from .goals import (
    EventSet,
    GoalSpace,
    apply_synonyms,
    enumerate_goal_space,
    evaluate_predicate,
    parse_instruction,
    render_instruction,
    tokenize,
)
from .gridworld import EnvConfig, GridWorld, Observation, new_env
from .harness import RunConfig, resume_training, run_training
from .teachers import Advice, advice_enabled, advise, compose_advice

__all__ = [
    "Advice",
    "EnvConfig",
    "EventSet",
    "GoalSpace",
    "GridWorld",
    "Observation",
    "RunConfig",
    "advice_enabled",
    "advise",
    "apply_synonyms",
    "compose_advice",
    "enumerate_goal_space",
    "evaluate_predicate",
    "new_env",
    "parse_instruction",
    "render_instruction",
    "resume_training",
    "run_training",
    "tokenize",
]

__version__ = "0.1.0"
