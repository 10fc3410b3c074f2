"""Hindsight relabeling: after each episode, teachers propose (goal, reward)
advice and the episode is copied into the buffer once per advice, with the
goal swapped and the terminal reward set to the advised reward."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .goals import GoalSpace, render_instruction, tokenize
from .teachers import advice_enabled, advise, compose_advice


@dataclass
class EpisodeRecord:
    transitions: list
    goal: object
    events: object
    frame_index: int  # global frame count when the episode ended


def _relabeled_copy(transitions, goal_text, goal_tokens, terminal_reward):
    copied = []
    last = len(transitions) - 1
    for i, tr in enumerate(transitions):
        copied.append(
            replace(
                tr,
                goal_text=goal_text,
                goal_tokens=goal_tokens,
                reward=float(terminal_reward) if i == last else 0.0,
            )
        )
    return copied


def relabel_episode(ep: EpisodeRecord, teachers, gs: GoalSpace, budget_fraction, total_frames, rng):
    """Relabeled transition lists for one finished episode (possibly none).

    Advice generation respects the budget fraction; the caller stores the
    original episode regardless.
    """
    if not advice_enabled(ep.frame_index, total_frames, budget_fraction):
        return []
    if gs.mode == "compositional":
        advices = compose_advice(ep.events, gs, rng, kinds=tuple(teachers))
    else:
        advices = []
        for kind in teachers:
            advices.extend(advise(kind, ep.events, gs, ep.goal, rng))
    copies = []
    for advice in advices:
        text = render_instruction(advice.goal)
        tokens = tuple(tokenize(text, gs.vocab))
        copies.append(_relabeled_copy(ep.transitions, text, tokens, advice.reward))
    return copies


def store_episode(buffer, original: EpisodeRecord, relabeled):
    """Store the original episode, then each relabeled copy, as intact groups."""
    buffer.add_episode(original.transitions)
    for transitions in relabeled:
        buffer.add_episode(transitions)
