"""Teachers that turn a finished episode into hindsight (goal, reward) advice.

Four kinds:

* ``knowledgeable`` — describes anything the episode achieved, sampled from
  the whole instruction list, reward 1.
* ``optimistic`` — like knowledgeable but only from the desired goals;
  silent when the episode achieved nothing desirable.
* ``pessimistic`` — only from the undesired goals.
* ``discouraging`` — an unachieved desired goal that does not describe any
  tile the agent reached, reward 0.

All sampling is uniform over the valid candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

from .goals import (
    GOAL,
    And,
    EventSet,
    GoalAst,
    GoalSpace,
    Reach,
    constituents,
    evaluate_predicate,
    is_composition,
    is_singleton,
)

KNOWLEDGEABLE = "knowledgeable"
OPTIMISTIC = "optimistic"
PESSIMISTIC = "pessimistic"
DISCOURAGING = "discouraging"

TEACHER_KINDS = (KNOWLEDGEABLE, OPTIMISTIC, PESSIMISTIC, DISCOURAGING)
POSITIVE_KINDS = (KNOWLEDGEABLE, OPTIMISTIC, PESSIMISTIC)

# knowledgeable + discouraging is the default ensemble; the reduced variant
# drops knowledge of undesirable achievements
DEFAULT_ENSEMBLE = (KNOWLEDGEABLE, DISCOURAGING)
REDUCED_ENSEMBLE = (OPTIMISTIC, DISCOURAGING)


@dataclass(frozen=True)
class Advice:
    goal: GoalAst
    reward: int
    source: str


def _pool(kind: str, gs: GoalSpace):
    if kind == KNOWLEDGEABLE:
        return gs.all_goals
    if kind == OPTIMISTIC:
        return gs.desired_goals
    if kind == PESSIMISTIC:
        return gs.undesired_goals
    raise ValueError(f"not a positive teacher kind: {kind!r}")


def mentions_reached(g: GoalAst, ev: EventSet) -> bool:
    """True when any Reach constituent of ``g`` names a tile the agent entered."""
    return any(
        isinstance(c, Reach) and (c.kind, c.colour) in ev.reached
        for c in constituents(g)
    )


def _pick(candidates, rng):
    return candidates[int(rng.integers(len(candidates)))]


def advise(kind: str, ev: EventSet, gs: GoalSpace, original_goal: GoalAst, rng):
    """One piece of advice from one teacher, or none.

    Positive teachers sample an achieved instruction from their pool;
    the discouraging teacher samples an unachieved desired instruction
    that does not describe anything the agent reached.
    """
    if kind == DISCOURAGING:
        candidates = [
            g
            for g in gs.desired_goals
            if evaluate_predicate(g, ev) == 0 and not mentions_reached(g, ev)
        ]
        if not candidates:
            return []
        return [Advice(_pick(candidates, rng), 0, kind)]

    candidates = [g for g in _pool(kind, gs) if evaluate_predicate(g, ev) == 1]
    if not candidates:
        return []
    return [Advice(_pick(candidates, rng), 1, kind)]


def compose_advice(ev: EventSet, gs: GoalSpace, rng, kinds=DEFAULT_ENSEMBLE):
    """Compositional-mode advice for a teacher ensemble.

    With two distinct goal tiles reached, positive advice joins their two
    descriptions with "and" (order sampled); negative advice is an
    unachieved desired composition that avoids every reached tile. With
    fewer, both fall back to singleton-instruction advice.
    """
    reached_goals = [t for t in ev.reached if t[0] == GOAL]
    advices = []
    for kind in kinds:
        if kind == DISCOURAGING:
            if len(reached_goals) == 2:
                candidates = [
                    g
                    for g in gs.desired_goals
                    if is_composition(g)
                    and evaluate_predicate(g, ev) == 0
                    and not mentions_reached(g, ev)
                ]
            else:
                candidates = [
                    g
                    for g in gs.desired_goals
                    if is_singleton(g)
                    and evaluate_predicate(g, ev) == 0
                    and not mentions_reached(g, ev)
                ]
            if candidates:
                advices.append(Advice(_pick(candidates, rng), 0, kind))
            continue

        pool = _pool(kind, gs)
        if len(reached_goals) == 2:
            (ka, ca), (kb, cb) = reached_goals
            pair = (Reach(ka, ca), Reach(kb, cb))
            if rng.integers(2):
                pair = (pair[1], pair[0])
            composed = And(pair[0], pair[1])
            if composed in pool:
                advices.append(Advice(composed, 1, kind))
        else:
            candidates = [
                g for g in pool if is_singleton(g) and evaluate_predicate(g, ev) == 1
            ]
            if candidates:
                advices.append(Advice(_pick(candidates, rng), 1, kind))
    return advices


def advice_enabled(frame: int, total_frames: int, budget_fraction: float) -> bool:
    """Advice is only generated during the first ``budget_fraction`` of training."""
    if not 0.0 <= budget_fraction <= 1.0:
        raise ValueError("budget_fraction must lie in [0, 1]")
    return frame < budget_fraction * total_frames
