"""Deterministic MDP oracles that feed state transitions to the ledger."""
import math
import struct
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from pourl.errors import InvalidAction, InvalidState, NonConvergence

EnvState = Tuple[float, ...]
Cell = Tuple[int, int]
QTable = Dict[EnvState, np.ndarray]

# up, right, down, left; y grows downwards
MOVES: Tuple[Cell, ...] = ((0, -1), (1, 0), (0, 1), (-1, 0))
ACTION_NAMES = ("up", "right", "down", "left")


@dataclass(frozen=True)
class OracleSpec:
    state_dim: int
    action_count: int
    initial_state: EnvState
    name: str

    def __post_init__(self) -> None:
        if self.state_dim <= 0 or self.action_count <= 0:
            raise ValueError("oracle dimensions must be positive")
        if len(self.initial_state) != self.state_dim:
            raise ValueError("initial_state length must equal state_dim")


@dataclass(frozen=True)
class StepResult:
    next_state: EnvState
    reward: float
    terminal: bool


def same_bits(a: float, b: float) -> bool:
    return struct.pack("<d", a) == struct.pack("<d", b)


def same_state_bits(a: EnvState, b: EnvState) -> bool:
    return len(a) == len(b) and all(same_bits(x, y) for x, y in zip(a, b))


class Oracle(ABC):
    """Shared environment every node consults; must be pure so blocks are checkable."""

    spec: OracleSpec

    @abstractmethod
    def step(self, state: EnvState, action: int) -> StepResult:
        raise NotImplementedError

    @abstractmethod
    def is_terminal(self, state: EnvState) -> bool:
        raise NotImplementedError

    @abstractmethod
    def header(self) -> Dict[str, Any]:
        """Name and config, enough for oracle_from_header to rebuild this oracle."""
        raise NotImplementedError

    def chain_state(self, state: EnvState) -> EnvState:
        """State a miner starts from when the tip holds ``state`` (episodes chain)."""
        if self.is_terminal(state):
            return self.spec.initial_state
        return state

    def check_action(self, action: int) -> None:
        if not isinstance(action, (int, np.integer)) or not 0 <= int(action) < self.spec.action_count:
            raise InvalidAction(f"action {action!r} outside 0..{self.spec.action_count - 1}")

    def verify_transition(self, state: EnvState, action: int, claimed: StepResult) -> bool:
        actual = self.step(state, action)
        return (
            actual.terminal == claimed.terminal
            and same_bits(actual.reward, claimed.reward)
            and same_state_bits(actual.next_state, claimed.next_state)
        )


@dataclass(frozen=True)
class GridWorldConfig:
    width: int = 4
    height: int = 4
    start: Cell = (0, 0)
    goal: Cell = (3, 3)
    step_reward: float = -0.04
    goal_reward: float = 1.0
    walls: FrozenSet[Cell] = field(default_factory=frozenset)

    def problems(self) -> List[str]:
        found = []
        if any(isinstance(v, bool) or not isinstance(v, (int, np.integer)) for v in (self.width, self.height)):
            return ["width and height must be integers"]
        if self.width <= 0 or self.height <= 0:
            found.append("width and height must be positive")
        if self.start == self.goal:
            found.append("start and goal must differ")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not (0 <= cell[0] < self.width and 0 <= cell[1] < self.height):
                found.append(f"{name} {cell} lies outside the grid")
            if cell in self.walls:
                found.append(f"{name} {cell} is a wall")
        if not all(math.isfinite(r) for r in (self.step_reward, self.goal_reward)):
            found.append("rewards must be finite")
        return found

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["start"] = list(self.start)
        data["goal"] = list(self.goal)
        data["walls"] = sorted([list(w) for w in self.walls])
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridWorldConfig":
        values = dict(data)
        for key in ("start", "goal"):
            if key in values:
                values[key] = tuple(int(v) for v in values[key])
        if "walls" in values:
            values["walls"] = frozenset(tuple(int(v) for v in w) for w in values["walls"])
        return cls(**values)


class GridWorld(Oracle):
    """Episodic grid: state [x, y], four moves, walls and borders block movement."""

    name = "gridworld"

    def __init__(self, config: Optional[GridWorldConfig] = None) -> None:
        self.config = config or GridWorldConfig()
        problems = self.config.problems()
        if problems:
            raise ValueError("; ".join(problems))
        self.spec = OracleSpec(
            state_dim=2,
            action_count=len(MOVES),
            initial_state=self.encode(self.config.start),
            name=self.name,
        )
        self._goal_state = self.encode(self.config.goal)

    @staticmethod
    def encode(cell: Cell) -> EnvState:
        return (float(cell[0]), float(cell[1]))

    def decode(self, state: EnvState) -> Cell:
        if len(state) != 2:
            raise InvalidState(f"expected 2 coordinates, got {len(state)}")
        x, y = state
        if not (math.isfinite(x) and math.isfinite(y)) or x != int(x) or y != int(y):
            raise InvalidState(f"state {state!r} is not a grid cell")
        cell = (int(x), int(y))
        if not self._inside(cell) or cell in self.config.walls:
            raise InvalidState(f"state {state!r} is outside the grid or a wall")
        return cell

    def _inside(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.config.width and 0 <= cell[1] < self.config.height

    def step(self, state: EnvState, action: int) -> StepResult:
        self.check_action(action)
        x, y = self.decode(state)
        dx, dy = MOVES[int(action)]
        target = (x + dx, y + dy)
        if not self._inside(target) or target in self.config.walls:
            target = (x, y)
        if target == self.config.goal:
            return StepResult(self.encode(target), self.config.goal_reward, True)
        return StepResult(self.encode(target), self.config.step_reward, False)

    def is_terminal(self, state: EnvState) -> bool:
        return same_state_bits(tuple(state), self._goal_state)

    def states(self) -> List[EnvState]:
        cells = []
        for y in range(self.config.height):
            for x in range(self.config.width):
                if (x, y) not in self.config.walls:
                    cells.append(self.encode((x, y)))
        return cells

    def header(self) -> Dict[str, Any]:
        return {"oracle": self.name, "config": self.config.to_dict()}


ORACLES: Dict[str, Callable[[Dict[str, Any]], Oracle]] = {
    GridWorld.name: lambda cfg: GridWorld(GridWorldConfig.from_dict(cfg)),
}


def oracle_from_header(header: Dict[str, Any]) -> Oracle:
    name = header.get("oracle")
    if name not in ORACLES:
        raise ValueError(f"unknown oracle {name!r}")
    return ORACLES[name](header.get("config", {}))


def value_iteration_oracle(
    gridworld: GridWorld, gamma: float, tolerance: float = 1e-10, max_sweeps: int = 10_000
) -> QTable:
    """Optimal Q-values by synchronous sweeps; keys are the non-goal cells."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    states = [s for s in gridworld.states() if not gridworld.is_terminal(s)]
    actions = range(gridworld.spec.action_count)
    outcomes = {s: [gridworld.step(s, a) for a in actions] for s in states}
    q: QTable = {s: np.zeros(gridworld.spec.action_count) for s in states}
    for _ in range(max_sweeps):
        new_q: QTable = {}
        delta = 0.0
        for s in states:
            row = np.empty(gridworld.spec.action_count)
            for a, result in enumerate(outcomes[s]):
                future = 0.0 if result.terminal else float(np.max(q[result.next_state]))
                row[a] = result.reward + gamma * future
            delta = max(delta, float(np.max(np.abs(row - q[s]))))
            new_q[s] = row
        q = new_q
        if delta < tolerance:
            return q
    raise NonConvergence(f"value iteration did not reach {tolerance} within {max_sweeps} sweeps")


def optimal_path_length(gridworld: GridWorld) -> Optional[int]:
    """Fewest moves from start to goal, or None when the goal is unreachable."""
    start, goal = gridworld.config.start, gridworld.config.goal
    seen = {start: 0}
    frontier = deque([start])
    while frontier:
        cell = frontier.popleft()
        if cell == goal:
            return seen[cell]
        state = gridworld.encode(cell)
        for a in range(gridworld.spec.action_count):
            nxt = gridworld.decode(gridworld.step(state, a).next_state)
            if nxt not in seen:
                seen[nxt] = seen[cell] + 1
                frontier.append(nxt)
    return None


def greedy_path_length(
    oracle: Oracle, choose: Callable[[EnvState], int], max_steps: int
) -> Optional[int]:
    """Steps a policy needs from initial_state to a terminal state, None if it never arrives."""
    state = oracle.spec.initial_state
    for steps in range(1, max_steps + 1):
        result = oracle.step(state, choose(state))
        if result.terminal:
            return steps
        state = result.next_state
    return None
