"""Multi-agent grid world: movement, pushing, resource consumption, penalties.

Game rules
----------
Agents move in a bounded rectangular grid, one cell per step, five actions
each (up / down / left / right / idle). A non-idle move aimed at an *idle*
adjacent agent is a push: the pusher stays put and the idle agent is displaced
one cell along the push direction. Stepping onto a cell holding an unconsumed
resource consumes it for +10; each resource can be consumed once. Every step,
each agent pays -1 per still-unconsumed resource unless it is standing on a
resource cell (a safe spot). An episode ends when all resources are consumed
or when the step limit is reached.

Conflict resolution is a deterministic single pass with no agent-index bias:
pushes are classified first and applied (a push fails if its destination is
out of bounds, was occupied at the start of the step, or conflicts with
another push); remaining moves are then blocked if their target cell is still
occupied after push resolution, and movers aiming at the same empty cell all
stay put.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

Cell = tuple[int, int]


class EpisodeError(RuntimeError):
    """Misuse of the environment (e.g. stepping a finished episode)."""


class LayoutError(ValueError):
    """Invalid grid geometry in a layout."""


class AgentAction(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    IDLE = 4


N_ACTIONS = len(AgentAction)

_DELTAS: dict[AgentAction, Cell] = {
    AgentAction.UP: (-1, 0),
    AgentAction.DOWN: (1, 0),
    AgentAction.LEFT: (0, -1),
    AgentAction.RIGHT: (0, 1),
    AgentAction.IDLE: (0, 0),
}


@dataclass(frozen=True)
class GridLayout:
    """Static episode geometry: board size and starting cells.

    The default places every agent exactly two moves from its nearest
    resource (so first-step grabs are impossible and the cooperative optimum
    pays about +6 per agent), gives the team two equally-good assignments of
    the two central-south resources, and leaves agent 3's resource reachable
    by a two-push chain along the top row should that agent ever be unable to
    move on its own.
    """

    width: int = 4
    height: int = 4
    agent_starts: tuple[Cell, ...] = ((0, 0), (1, 1), (3, 3), (0, 1))
    resource_cells: tuple[Cell, ...] = ((2, 0), (2, 2), (3, 1), (0, 3))

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise LayoutError(f"grid size {self.width}x{self.height} is degenerate")
        cells = list(self.agent_starts) + list(self.resource_cells)
        for cell in cells:
            r, c = cell
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise LayoutError(f"cell {cell} outside {self.height}x{self.width} grid")
        if len(set(cells)) != len(cells):
            raise LayoutError("agent starts and resource cells must be pairwise distinct")

    @property
    def n_agents(self) -> int:
        return len(self.agent_starts)

    @property
    def n_resources(self) -> int:
        return len(self.resource_cells)

    def encoding_dim(self) -> int:
        return self.n_agents * self.width * self.height + self.n_resources


DEFAULT_LAYOUT = GridLayout()

# Paper-style display names for the default four agents, in index order.
AGENT_NAMES = ("blue", "red", "orange", "green")


@dataclass
class StepEvent:
    """One notable thing that happened during a step, for logging."""

    kind: str  # "push" | "blocked" | "consumption"
    agent: int
    detail: str


@dataclass
class StepOutcome:
    rewards: np.ndarray
    next_state_encoding: np.ndarray
    done: bool
    # done because the step limit cut the episode short rather than because
    # every resource was consumed; value bootstrapping must see the difference
    truncated: bool = False
    events: list[StepEvent] = field(default_factory=list)


class GridWorld:
    """Mutable episode state; deterministic given the action sequence."""

    def __init__(
        self,
        layout: GridLayout = DEFAULT_LAYOUT,
        max_steps: int = 20,
        safe_spot_includes_consumed: bool = True,
        seed: int = 0,
    ):
        layout.validate()
        if max_steps < 1:
            raise LayoutError(f"max_steps must be positive, got {max_steps}")
        self.layout = layout
        self.max_steps = max_steps
        self.safe_spot_includes_consumed = safe_spot_includes_consumed
        self.rng_seed = seed
        self.agent_positions: list[Cell] = []
        self.resource_consumed: list[bool] = []
        self.step_count = 0
        self.reset()

    @property
    def n_agents(self) -> int:
        return self.layout.n_agents

    def reset(self) -> np.ndarray:
        """Start a fresh episode; returns the initial state encoding."""
        self.agent_positions = list(self.layout.agent_starts)
        self.resource_consumed = [False] * self.layout.n_resources
        self.step_count = 0
        return self.encode()

    def is_terminal(self) -> bool:
        return all(self.resource_consumed) or self.step_count >= self.max_steps

    def encode(self) -> np.ndarray:
        """One-hot agent cells plus consumption flags; injective per layout."""
        w, h = self.layout.width, self.layout.height
        enc = np.zeros(self.layout.encoding_dim())
        for i, (r, c) in enumerate(self.agent_positions):
            enc[i * w * h + r * w + c] = 1.0
        base = self.n_agents * w * h
        for j, used in enumerate(self.resource_consumed):
            if used:
                enc[base + j] = 1.0
        return enc

    def _in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.layout.height and 0 <= c < self.layout.width

    def step(self, joint_action) -> StepOutcome:
        if self.is_terminal():
            raise EpisodeError("step() called on a finished episode")
        actions = [AgentAction(a) for a in joint_action]
        if len(actions) != self.n_agents:
            raise EpisodeError(
                f"joint action has {len(actions)} entries for {self.n_agents} agents"
            )

        n = self.n_agents
        pos = list(self.agent_positions)
        occupied_before = set(pos)
        events: list[StepEvent] = []

        # Phase 1: classify pushes (mover aims at an adjacent idle agent).
        cell_owner = {p: i for i, p in enumerate(pos)}
        push_candidates = []  # (pusher, pushed, destination)
        push_failed: set[int] = set()
        for i, act in enumerate(actions):
            if act == AgentAction.IDLE:
                continue
            dr, dc = _DELTAS[act]
            target = (pos[i][0] + dr, pos[i][1] + dc)
            j = cell_owner.get(target)
            if j is None or actions[j] != AgentAction.IDLE:
                continue
            dest = (target[0] + dr, target[1] + dc)
            if not self._in_bounds(dest) or dest in occupied_before:
                push_failed.add(i)
                events.append(StepEvent("blocked", i, f"push of agent {j} into {dest} failed"))
            else:
                push_candidates.append((i, j, dest))

        # Conflicting pushes (same pushed agent or same destination) all fail.
        pushed_counts: dict[int, int] = {}
        dest_counts: dict[Cell, int] = {}
        for _, j, dest in push_candidates:
            pushed_counts[j] = pushed_counts.get(j, 0) + 1
            dest_counts[dest] = dest_counts.get(dest, 0) + 1
        pushes = []
        for i, j, dest in push_candidates:
            if pushed_counts[j] > 1 or dest_counts[dest] > 1:
                push_failed.add(i)
                events.append(StepEvent("blocked", i, f"conflicting push of agent {j}"))
            else:
                pushes.append((i, j, dest))

        pushers = set()
        for i, j, dest in pushes:
            pos[j] = dest
            pushers.add(i)
            events.append(StepEvent("push", i, f"agent {j} displaced to {dest}"))

        # Phase 2: plain moves against post-push occupancy.
        occupied_after_push = set(pos)
        movers = [
            i
            for i, act in enumerate(actions)
            if act != AgentAction.IDLE and i not in pushers and i not in push_failed
        ]
        targets: dict[int, Cell] = {}
        for i in movers:
            dr, dc = _DELTAS[actions[i]]
            target = (pos[i][0] + dr, pos[i][1] + dc)
            if not self._in_bounds(target):
                events.append(StepEvent("blocked", i, f"move off-grid to {target}"))
            elif target in occupied_after_push:
                events.append(StepEvent("blocked", i, f"move into occupied {target}"))
            else:
                targets[i] = target
        target_counts: dict[Cell, int] = {}
        for t in targets.values():
            target_counts[t] = target_counts.get(t, 0) + 1
        for i, t in targets.items():
            if target_counts[t] > 1:
                events.append(StepEvent("blocked", i, f"move contended for {t}"))
            else:
                pos[i] = t

        assert len(set(pos)) == n, "agents may never share a cell"
        self.agent_positions = pos

        # Phase 3: consumption, then penalties from the post-consumption state.
        rewards = np.zeros(n)
        resource_index = {cell: k for k, cell in enumerate(self.layout.resource_cells)}
        live_before = [not c for c in self.resource_consumed]
        for i, p in enumerate(pos):
            k = resource_index.get(p)
            if k is not None and not self.resource_consumed[k]:
                self.resource_consumed[k] = True
                rewards[i] += 10.0
                events.append(StepEvent("consumption", i, f"resource {k} at {p}"))

        unconsumed = self.resource_consumed.count(False)
        if unconsumed:
            for i, p in enumerate(pos):
                k = resource_index.get(p)
                # In the strict setting a cell only shields while its resource was
                # still live when the step began, so the consumer stays exempt on
                # the consumption step but the cell stops being safe afterwards.
                on_safe_spot = k is not None and (
                    self.safe_spot_includes_consumed or live_before[k]
                )
                if not on_safe_spot:
                    rewards[i] -= float(unconsumed)

        self.step_count += 1
        done = self.is_terminal()
        truncated = done and not all(self.resource_consumed)
        return StepOutcome(rewards, self.encode(), done, truncated, events)
