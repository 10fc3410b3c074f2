"""Language goal space for the colored-tile gridworld.

Goals are short English instructions over tiles with a functionality
(goal / lava) and a colour (red / blue / green):

    singleton    := "Reach <colour> <kind>" | "Avoid any lava" | "Avoid any goal"
    composition  := singleton " and " singleton | singleton " or " singleton

Compositions are one level deep and their two children are distinct.
Each goal induces a binary predicate over what an episode achieved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

GOAL = "goal"
LAVA = "lava"
COLOURS = ("red", "blue", "green")
TILE_KINDS = (GOAL, LAVA)


class UnknownInstruction(ValueError):
    """Instruction text falls outside the goal grammar."""


class OutOfVocabulary(KeyError):
    """A word has no id in the goal-space vocabulary."""


class NoReplaceablePosition(ValueError):
    """No word in the instruction has a synonym entry."""


@dataclass(frozen=True)
class Reach:
    kind: str
    colour: str


@dataclass(frozen=True)
class AvoidAnyLava:
    pass


@dataclass(frozen=True)
class AvoidAnyGoal:
    pass


@dataclass(frozen=True)
class And:
    left: "GoalAst"
    right: "GoalAst"


@dataclass(frozen=True)
class Or:
    left: "GoalAst"
    right: "GoalAst"


GoalAst = Union[Reach, AvoidAnyLava, AvoidAnyGoal, And, Or]

SINGLETON_NODES = (Reach, AvoidAnyLava, AvoidAnyGoal)


@dataclass(frozen=True)
class EventSet:
    """What an episode achieved: tiles entered, in entry order, plus flags.

    ``touched_lava`` / ``touched_goal`` are derived from ``reached`` and
    validated on construction. ``flagged`` records that the episode ended
    on a successful flag action.
    """

    reached: tuple = ()
    touched_lava: bool = False
    touched_goal: bool = False
    flagged: bool = False

    def __post_init__(self):
        lava = any(kind == LAVA for kind, _ in self.reached)
        goal = any(kind == GOAL for kind, _ in self.reached)
        if lava != self.touched_lava or goal != self.touched_goal:
            raise ValueError("touched flags inconsistent with reached list")

    @classmethod
    def from_reached(cls, reached, flagged=False):
        reached = tuple(reached)
        return cls(
            reached=reached,
            touched_lava=any(k == LAVA for k, _ in reached),
            touched_goal=any(k == GOAL for k, _ in reached),
            flagged=flagged,
        )


@dataclass(frozen=True)
class GoalSpace:
    """The full instruction list, the desired subset, and the word ids."""

    mode: str
    all_goals: tuple
    desired_goals: tuple
    vocab: dict = field(compare=False)

    @property
    def undesired_goals(self):
        desired = set(self.desired_goals)
        return tuple(g for g in self.all_goals if g not in desired)


def is_singleton(g: GoalAst) -> bool:
    return isinstance(g, SINGLETON_NODES)


def is_composition(g: GoalAst) -> bool:
    return isinstance(g, (And, Or))


def constituents(g: GoalAst):
    """The singleton children of a goal (the goal itself if already one)."""
    if isinstance(g, (And, Or)):
        return (g.left, g.right)
    return (g,)


def render_instruction(g: GoalAst) -> str:
    if isinstance(g, Reach):
        return f"Reach {g.colour} {g.kind}"
    if isinstance(g, AvoidAnyLava):
        return "Avoid any lava"
    if isinstance(g, AvoidAnyGoal):
        return "Avoid any goal"
    if isinstance(g, And):
        return f"{render_instruction(g.left)} and {render_instruction(g.right)}"
    if isinstance(g, Or):
        return f"{render_instruction(g.left)} or {render_instruction(g.right)}"
    raise TypeError(f"not a goal node: {g!r}")


def _parse_singleton(words) -> GoalAst:
    if len(words) != 3:
        raise UnknownInstruction(" ".join(words))
    head, mid, tail = words
    if head == "Reach" and mid in COLOURS and tail in TILE_KINDS:
        return Reach(tail, mid)
    if head == "Avoid" and mid == "any" and tail in TILE_KINDS:
        return AvoidAnyLava() if tail == LAVA else AvoidAnyGoal()
    raise UnknownInstruction(" ".join(words))


def parse_instruction(text: str) -> GoalAst:
    """Parse an instruction string into its goal node.

    Only the first letter is case-insensitive; the rest of the string must
    match the grammar exactly. Raises UnknownInstruction otherwise.
    """
    text = text[:1].upper() + text[1:]
    words = text.split()
    if not words:
        raise UnknownInstruction(text)
    connectors = [i for i, w in enumerate(words) if w in ("and", "or")]
    if not connectors:
        return _parse_singleton(words)
    if len(connectors) != 1:
        raise UnknownInstruction(text)
    i = connectors[0]
    left = _parse_singleton(words[:i])
    right = _parse_singleton(words[i + 1 :])
    if left == right:
        raise UnknownInstruction(text)
    return And(left, right) if words[i] == "and" else Or(left, right)


def _desired_goals(mode):
    singles = [Reach(GOAL, c) for c in COLOURS]
    if mode == "singleton":
        return singles
    goals = list(singles)
    for a, b in ((0, 1), (0, 2), (1, 2)):
        ga, gb = singles[a], singles[b]
        goals += [And(ga, gb), And(gb, ga), Or(ga, gb), Or(gb, ga)]
    for g in singles:
        goals += [And(g, AvoidAnyLava()), And(AvoidAnyLava(), g)]
    return goals


def _undesired_goals(mode):
    if mode == "singleton":
        return [Reach(LAVA, c) for c in COLOURS] + [AvoidAnyLava(), AvoidAnyGoal()]
    lavas = [Reach(LAVA, c) for c in COLOURS]
    goals = []
    for a, b in ((0, 1), (0, 2), (1, 2)):
        goals += [Or(lavas[a], lavas[b]), Or(lavas[b], lavas[a])]
    for lv in lavas:
        goals += [lv, And(lv, AvoidAnyGoal()), And(AvoidAnyGoal(), lv)]
    goals += [And(AvoidAnyLava(), AvoidAnyGoal()), And(AvoidAnyGoal(), AvoidAnyLava())]
    return goals


def enumerate_goal_space(mode: str) -> GoalSpace:
    """Build the goal space for ``singleton`` or ``compositional`` play.

    Singleton: 8 instructions, 3 of them desired. Compositional: 21 desired
    plus 17 undesired instructions. Word ids are assigned in order of first
    occurrence across the full instruction list.
    """
    if mode not in ("singleton", "compositional"):
        raise ValueError(f"unknown mode: {mode!r}")
    desired = _desired_goals(mode)
    all_goals = desired + _undesired_goals(mode)
    vocab = {}
    for g in all_goals:
        for word in render_instruction(g).split():
            if word not in vocab:
                vocab[word] = len(vocab)
    return GoalSpace(
        mode=mode,
        all_goals=tuple(all_goals),
        desired_goals=tuple(desired),
        vocab=vocab,
    )


def tokenize(text: str, vocab: dict):
    """Map whitespace-separated words to vocabulary ids, order preserved."""
    ids = []
    for word in text.split():
        if word not in vocab:
            raise OutOfVocabulary(word)
        ids.append(vocab[word])
    return ids


def evaluate_predicate(g: GoalAst, ev: EventSet) -> int:
    """Binary success of goal ``g`` over a finished episode's events."""
    if isinstance(g, Reach):
        return int((g.kind, g.colour) in ev.reached)
    if isinstance(g, AvoidAnyLava):
        return int(not ev.touched_lava)
    if isinstance(g, AvoidAnyGoal):
        return int(not ev.touched_goal)
    if isinstance(g, And):
        return evaluate_predicate(g.left, ev) & evaluate_predicate(g.right, ev)
    if isinstance(g, Or):
        return evaluate_predicate(g.left, ev) | evaluate_predicate(g.right, ev)
    raise TypeError(f"not a goal node: {g!r}")


def apply_synonyms(text: str, table: dict, rng) -> str:
    """Swap exactly one word for one of its synonyms.

    The position is chosen uniformly among words that have a nonempty
    synonym list, then the synonym uniformly from that list. Deterministic
    given the rng state.
    """
    words = text.split()
    positions = [i for i, w in enumerate(words) if table.get(w)]
    if not positions:
        raise NoReplaceablePosition(text)
    pos = positions[int(rng.integers(len(positions)))]
    syns = table[words[pos]]
    words[pos] = syns[int(rng.integers(len(syns)))]
    return " ".join(words)


def load_synonym_table(path) -> dict:
    """Read a synonym table: one ``original<TAB>syn1,syn2,...`` line per word."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            original, _, rest = line.partition("\t")
            syns = [s.strip() for s in rest.split(",") if s.strip()]
            table[original] = syns
    return table


def builtin_synonym_path():
    """Path of the synonym table shipped with the package."""
    import importlib.resources

    return importlib.resources.files("advicegrid").joinpath("data/synonyms.tsv")
