"""Colored-tile gridworld with goal, lava, and normal tiles.

The grid is fully observed as stacked one-hot planes (tile functionality,
tile colour, agent position). Singleton play ends on any goal or lava tile;
compositional play adds a flag action and ends on lava, on a second
distinct goal tile, or on a flag raised while the episode's goal predicate
already holds. Reward is judged only at termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .goals import (
    COLOURS,
    GOAL,
    LAVA,
    EventSet,
    GoalAst,
    GoalSpace,
    enumerate_goal_space,
    evaluate_predicate,
    render_instruction,
)

UP, DOWN, LEFT, RIGHT, FLAG = range(5)
ACTION_NAMES = ("up", "down", "left", "right", "flag")
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

# tile functionality / colour plane indices
FUNC_GOAL, FUNC_LAVA, FUNC_NORMAL = 0, 1, 2
COLOUR_NONE = len(COLOURS)
N_CHANNELS = 3 + 4 + 1  # functionality + colour (incl. none) + agent
HISTORY_DIM = len(COLOURS) + 1  # one slot per goal colour + touched-lava slot


class GridTooSmall(ValueError):
    pass


class GoalNotDesired(ValueError):
    pass


class IllegalAction(ValueError):
    pass


class EpisodeOver(RuntimeError):
    pass


class EpisodeNotOver(RuntimeError):
    pass


def n_actions(mode: str) -> int:
    return 5 if mode == "compositional" else 4


@dataclass(frozen=True)
class EnvConfig:
    grid_size: int = 9
    n_goals: int = 3
    n_lavas: int = 3
    mode: str = "singleton"
    max_steps: int = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("singleton", "compositional"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", 25 if self.mode == "singleton" else 50)
        if self.grid_size < 4:
            raise ValueError("grid_size must be at least 4")
        if self.n_goals != len(COLOURS):
            raise ValueError(f"need one goal tile per colour ({len(COLOURS)})")
        if self.n_lavas < len(COLOURS):
            raise ValueError("need at least one lava per colour")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass
class Observation:
    """Stacked (channels, size, size) one-hot planes, plus the reached-goal
    history vector in compositional mode."""

    planes: np.ndarray
    history: np.ndarray = None


class GridWorld:
    """One playable grid. Layout is fixed at construction; ``reset`` starts a
    new episode on the same layout."""

    def __init__(self, cfg: EnvConfig, func, colour, spawn, goal_space):
        self.cfg = cfg
        self.func = func  # (g, g) int array of FUNC_* codes
        self.colour = colour  # (g, g) int array, COLOUR_NONE for normal tiles
        self.spawn = spawn
        self.goal_space = goal_space
        self._static_planes = self._build_static_planes()
        self.current_goal = None
        self.agent_pos = spawn
        self.steps_taken = 0
        self.terminated = True
        self._reached = []
        self._flagged = False
        self.history = np.zeros(HISTORY_DIM)

    def _build_static_planes(self):
        g = self.cfg.grid_size
        planes = np.zeros((N_CHANNELS, g, g))
        for f in (FUNC_GOAL, FUNC_LAVA, FUNC_NORMAL):
            planes[f][self.func == f] = 1.0
        for c in range(len(COLOURS) + 1):
            planes[3 + c][self.colour == c] = 1.0
        return planes

    # -- episode control ---------------------------------------------------

    def reset(self, goal: GoalAst) -> Observation:
        if goal not in self.goal_space.desired_goals:
            raise GoalNotDesired(render_instruction(goal))
        self.current_goal = goal
        self.agent_pos = self.spawn
        self.steps_taken = 0
        self.terminated = False
        self._reached = []
        self._flagged = False
        self.history = np.zeros(HISTORY_DIM)
        return self.encode_observation()

    def events(self) -> EventSet:
        return EventSet.from_reached(self._reached, flagged=self._flagged)

    def step(self, action: int):
        """Apply one action. Returns (observation, terminated, events)."""
        if self.terminated:
            raise EpisodeOver("episode already terminated")
        if action == FLAG and self.cfg.mode != "compositional":
            raise IllegalAction("flag is only available in compositional mode")
        if action not in (UP, DOWN, LEFT, RIGHT, FLAG):
            raise IllegalAction(f"unknown action {action}")

        self.steps_taken += 1
        if action == FLAG:
            # a correct flag ends the episode; a wrong one leaves the grid as is
            if evaluate_predicate(self.current_goal, self.events()):
                self._flagged = True
                self.terminated = True
        else:
            dr, dc = MOVES[action]
            r = self.agent_pos[0] + dr
            c = self.agent_pos[1] + dc
            g = self.cfg.grid_size
            if 0 <= r < g and 0 <= c < g:
                self.agent_pos = (r, c)
                self._enter(r, c)

        if not self.terminated and self.steps_taken >= self.cfg.max_steps:
            self.terminated = True
        return self.encode_observation(), self.terminated, self.events()

    def _enter(self, r, c):
        f = self.func[r, c]
        if f == FUNC_NORMAL:
            return
        kind = GOAL if f == FUNC_GOAL else LAVA
        colour_idx = int(self.colour[r, c])
        tile = (kind, COLOURS[colour_idx])
        if tile not in self._reached:  # re-entering a tile is not a new event
            self._reached.append(tile)
        if kind == GOAL:
            self.history[colour_idx] = 1.0
        else:
            self.history[len(COLOURS)] = 1.0
        if self.cfg.mode == "singleton":
            self.terminated = True
        else:
            if kind == LAVA:
                self.terminated = True
            elif sum(1 for k, _ in self._reached if k == GOAL) >= 2:
                self.terminated = True

    def encode_observation(self) -> Observation:
        planes = self._static_planes.copy()
        planes[N_CHANNELS - 1, self.agent_pos[0], self.agent_pos[1]] = 1.0
        history = self.history.copy() if self.cfg.mode == "compositional" else None
        return Observation(planes=planes, history=history)

    def episode_reward(self, goal: GoalAst) -> int:
        if not self.terminated:
            raise EpisodeNotOver("episode still running")
        return evaluate_predicate(goal, self.events())

    # -- debugging ---------------------------------------------------------

    def render_ascii(self) -> str:
        rows = []
        for r in range(self.cfg.grid_size):
            cells = []
            for c in range(self.cfg.grid_size):
                if (r, c) == self.agent_pos:
                    cells.append("A.")
                    continue
                f = self.func[r, c]
                if f == FUNC_NORMAL:
                    cells.append("..")
                else:
                    letter = "G" if f == FUNC_GOAL else "L"
                    cells.append(letter + COLOURS[int(self.colour[r, c])][0])
            rows.append(" ".join(cells))
        return "\n".join(rows)


def new_env(cfg: EnvConfig, rng, goal_space: GoalSpace = None) -> GridWorld:
    """Sample a fresh layout: non-overlapping uniform placement, one goal per
    colour, at least one lava per colour, agent spawned on a normal tile."""
    g = cfg.grid_size
    n_entities = 1 + cfg.n_goals + cfg.n_lavas
    if g * g < n_entities:
        raise GridTooSmall(f"{g}x{g} grid cannot hold {n_entities} entities")
    cells = rng.permutation(g * g)[:n_entities]
    positions = [(int(i) // g, int(i) % g) for i in cells]

    func = np.full((g, g), FUNC_NORMAL, dtype=np.int64)
    colour = np.full((g, g), COLOUR_NONE, dtype=np.int64)
    spawn = positions[0]
    for i in range(cfg.n_goals):
        r, c = positions[1 + i]
        func[r, c] = FUNC_GOAL
        colour[r, c] = i
    for i in range(cfg.n_lavas):
        r, c = positions[1 + cfg.n_goals + i]
        func[r, c] = FUNC_LAVA
        # first one lava per colour, extras coloured at random
        colour[r, c] = i if i < len(COLOURS) else int(rng.integers(len(COLOURS)))

    if goal_space is None:
        goal_space = enumerate_goal_space(cfg.mode)
    return GridWorld(cfg, func, colour, spawn, goal_space)
