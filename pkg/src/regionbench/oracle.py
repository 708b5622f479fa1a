"""Ground-truth region traces from structured directive programs.

A program is a list of directives executed cell by cell on a scenario grid.
The resulting trace lists each distinct region the agent enters, starting
with its start region. Programs are stored as JSON arrays of tagged objects
(see ``data/program.schema.json``), e.g.::

    [{"op": "move", "direction": "E", "until": {"type": "blocked"}},
     {"op": "push_block_into_pit", "direction": "N"},
     {"op": "cross_bridge"},
     {"op": "move", "direction": "W", "until": {"type": "reach_goal"}}]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

from .gridmap import Direction, GridMap, Pit, Pos, Scenario, Wall
from .topology import RegionGraph, push_block_step

RegionTrace = tuple[int, ...]


def as_trace(regions: Sequence[int]) -> RegionTrace:
    """Collapse consecutive duplicates; reject empty or non-positive input."""
    out: list[int] = []
    for r in regions:
        r = int(r)
        if r <= 0:
            raise ValueError(f"region ids must be positive, got {r}")
        if not out or out[-1] != r:
            out.append(r)
    if not out:
        raise ValueError("a region trace must be nonempty")
    return tuple(out)


# ---------------------------------------------------------------------------
# Conditions and directives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Blocked:
    """The next cell ahead is a wall, pit, block or off the grid."""


@dataclass(frozen=True)
class PastObstacle:
    side: str
    obstacle: str = "wall"

    def __post_init__(self) -> None:
        if self.side not in ("left", "right", "front"):
            raise ValueError(f"side must be left, right or front, got {self.side!r}")
        if self.obstacle not in ("wall", "pit"):
            raise ValueError(f"obstacle must be wall or pit, got {self.obstacle!r}")


@dataclass(frozen=True)
class ReachRegion:
    region: int


@dataclass(frozen=True)
class ReachGoal:
    """The agent stands in the goal's region."""


@dataclass(frozen=True)
class AlignedWithBlock:
    """The agent is 4-adjacent to a block cell."""


Condition = Blocked | PastObstacle | ReachRegion | ReachGoal | AlignedWithBlock


@dataclass(frozen=True)
class Move:
    direction: Direction
    until: Condition


@dataclass(frozen=True)
class PushBlockIntoPit:
    direction: Direction


@dataclass(frozen=True)
class CrossBridge:
    pass


@dataclass(frozen=True)
class Stop:
    pass


Directive = Move | PushBlockIntoPit | CrossBridge | Stop


class ProgramFormatError(ValueError):
    pass


def _condition_from_json(obj: dict) -> Condition:
    kind = obj.get("type")
    if kind == "blocked":
        return Blocked()
    if kind == "past_obstacle":
        return PastObstacle(obj["side"], obj.get("obstacle", "wall"))
    if kind == "reach_region":
        return ReachRegion(int(obj["region"]))
    if kind == "reach_goal":
        return ReachGoal()
    if kind == "aligned_with_block":
        return AlignedWithBlock()
    raise ProgramFormatError(f"unknown condition type {kind!r}")


def directive_from_json(obj: dict) -> Directive:
    op = obj.get("op")
    try:
        if op == "move":
            return Move(Direction.parse(obj["direction"]), _condition_from_json(obj["until"]))
        if op == "push_block_into_pit":
            return PushBlockIntoPit(Direction.parse(obj["direction"]))
        if op == "cross_bridge":
            return CrossBridge()
        if op == "stop":
            return Stop()
    except (KeyError, TypeError, ValueError) as exc:
        raise ProgramFormatError(f"malformed directive {obj!r}: {exc}") from exc
    raise ProgramFormatError(f"unknown directive op {op!r}")


def _condition_to_json(cond: Condition) -> dict:
    if isinstance(cond, Blocked):
        return {"type": "blocked"}
    if isinstance(cond, PastObstacle):
        return {"type": "past_obstacle", "side": cond.side, "obstacle": cond.obstacle}
    if isinstance(cond, ReachRegion):
        return {"type": "reach_region", "region": cond.region}
    if isinstance(cond, ReachGoal):
        return {"type": "reach_goal"}
    return {"type": "aligned_with_block"}


def directive_to_json(d: Directive) -> dict:
    if isinstance(d, Move):
        return {"op": "move", "direction": d.direction.name, "until": _condition_to_json(d.until)}
    if isinstance(d, PushBlockIntoPit):
        return {"op": "push_block_into_pit", "direction": d.direction.name}
    if isinstance(d, CrossBridge):
        return {"op": "cross_bridge"}
    return {"op": "stop"}


def load_program(text: str) -> list[Directive]:
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise ProgramFormatError("a program must be a JSON array of directives")
    return [directive_from_json(item) for item in raw]


def dump_program(program: Sequence[Directive]) -> str:
    return json.dumps([directive_to_json(d) for d in program], indent=2)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


class SimulationError(RuntimeError):
    pass


class MovementBlockedError(SimulationError):
    pass


class UnsatisfiableConditionError(SimulationError):
    pass


class PushPreconditionError(SimulationError):
    pass


def _obstacle_kind(grid: GridMap, pos: Pos) -> str | None:
    cell = grid.cell(pos)
    if pos in grid.block_cells:
        return "bridge" if isinstance(cell, Pit) else "block"
    if isinstance(cell, Wall):
        return "wall"
    if isinstance(cell, Pit):
        return "pit"
    return None


def _component(grid: GridMap, seed: Pos, kind: str) -> frozenset[Pos]:
    seen = {seed}
    stack = [seed]
    while stack:
        pos = stack.pop()
        for d in Direction:
            nb = d.step(pos)
            if nb not in seen and grid.in_bounds(nb) and _obstacle_kind(grid, nb) == kind:
                seen.add(nb)
                stack.append(nb)
    return frozenset(seen)


def _first_obstacle(grid: GridMap, pos: Pos, d: Direction) -> Pos | None:
    cur = d.step(pos)
    while grid.in_bounds(cur):
        if _obstacle_kind(grid, cur) is not None:
            return cur
        cur = d.step(cur)
    return None


def _progress(pos: Pos, d: Direction) -> int:
    return pos[0] * d.dr + pos[1] * d.dc


@dataclass
class _Walker:
    grid: GridMap
    pos: Pos
    trace: list[int]
    # Obstacle component latched by the running PastObstacle move
    latched: frozenset[Pos] | None = None

    def enter(self, pos: Pos) -> None:
        self.pos = pos
        region = self.grid.effective_region(pos)
        if region is not None and region != self.trace[-1]:
            self.trace.append(region)

    def passable(self, pos: Pos) -> bool:
        return self.grid.in_bounds(pos) and _obstacle_kind(self.grid, pos) is None

    def satisfied(self, cond: Condition, d: Direction) -> bool:
        if isinstance(cond, Blocked):
            return not self.passable(d.step(self.pos))
        if isinstance(cond, ReachRegion):
            return self.grid.effective_region(self.pos) == cond.region
        if isinstance(cond, ReachGoal):
            return self.grid.effective_region(self.pos) == self.grid.effective_region(
                self.grid.goal_pos
            )
        if isinstance(cond, AlignedWithBlock):
            return any(dd.step(self.pos) in self.grid.block_cells for dd in Direction)
        side = {"left": d.left, "right": d.right, "front": d}[cond.side]
        if self.latched is None:
            hit = _first_obstacle(self.grid, self.pos, side)
            if hit is not None and _obstacle_kind(self.grid, hit) == cond.obstacle:
                self.latched = _component(self.grid, hit, cond.obstacle)
        if self.latched is None:
            return False
        extent = max(_progress(p, d) for p in self.latched)
        return _progress(self.pos, d) > extent

    def move(self, step: Move) -> None:
        d = step.direction
        self.latched = None
        if isinstance(step.until, ReachRegion) and step.until.region not in self.grid.regions():
            raise UnsatisfiableConditionError(f"region {step.until.region} is not on the grid")
        while not self.satisfied(step.until, d):
            nxt = d.step(self.pos)
            if not self.grid.in_bounds(nxt):
                raise UnsatisfiableConditionError(
                    f"moving {d.name} from {self.pos}: grid edge reached before {step.until} held"
                )
            if not self.passable(nxt):
                raise MovementBlockedError(
                    f"moving {d.name} from {self.pos}: blocked before {step.until} held"
                )
            self.enter(nxt)

    def push(self, step: PushBlockIntoPit) -> None:
        if not self.grid.block_cells:
            raise PushPreconditionError("scenario has no block to push")
        d = step.direction
        grid = replace(self.grid, agent_pos=self.pos)
        if d.step(self.pos) not in grid.block_cells:
            raise PushPreconditionError(
                f"agent at {self.pos} is not behind the block for a push {d.name}"
            )
        while not grid.block_in_pit:
            try:
                grid = push_block_step(grid, d)
            except ValueError as exc:
                raise PushPreconditionError(f"block never came to rest in the pit: {exc}") from exc
            self.grid = grid
            self.enter(grid.agent_pos)

    def cross_bridge(self) -> None:
        bridge = set(self.grid.in_pit_cells)
        if not self.grid.block_in_pit:
            raise PushPreconditionError("there is no completed bridge to cross")
        ways = [d for d in Direction if d.step(self.pos) in bridge]
        if len(ways) != 1:
            raise SimulationError(f"agent at {self.pos} is not at a unique bridge end")
        d = ways[0]
        cur = d.step(self.pos)
        while cur in bridge:
            cur = d.step(cur)
        if not self.grid.in_bounds(cur) or self.grid.effective_region(cur) is None:
            raise MovementBlockedError(f"far side of the bridge at {cur} is not walkable")
        self.enter(cur)


@dataclass(frozen=True)
class SimulationResult:
    trace: RegionTrace
    # Trace length after each directive; checkpoints[i] covers directives[:i+1]
    checkpoints: tuple[int, ...]
    # Grid state after the last push (block position); agent_pos is not tracked
    final_grid: GridMap


def run_program(scenario: Scenario | GridMap, program: Sequence[Directive]) -> SimulationResult:
    grid = scenario.grid if isinstance(scenario, Scenario) else scenario
    if not program:
        raise SimulationError("program is empty")
    start = grid.effective_region(grid.agent_pos)
    assert start is not None
    walker = _Walker(grid=grid, pos=grid.agent_pos, trace=[start])
    checkpoints = []
    for step in program:
        if isinstance(step, Stop):
            checkpoints.append(len(walker.trace))
            break
        if isinstance(step, Move):
            walker.move(step)
        elif isinstance(step, PushBlockIntoPit):
            walker.push(step)
        elif isinstance(step, CrossBridge):
            walker.cross_bridge()
        checkpoints.append(len(walker.trace))
    return SimulationResult(tuple(walker.trace), tuple(checkpoints), walker.grid)


def simulate(scenario: Scenario | GridMap, program: Sequence[Directive]) -> RegionTrace:
    return run_program(scenario, program).trace


def phase_trace(scenario: Scenario, program: Sequence[Directive]) -> RegionTrace:
    """Slice of the simulated trace belonging to ``scenario.phase``.

    ``before-block`` runs up to the region where the first push starts;
    ``after-block`` runs from that region to the end. Programs without a push
    have no phase split.
    """
    result = run_program(scenario, program)
    if scenario.phase in ("whole", "", None):
        return result.trace
    split = next((i for i, d in enumerate(program) if isinstance(d, PushBlockIntoPit)), None)
    if split is None:
        raise SimulationError(f"program has no block push to split on for phase {scenario.phase}")
    cut = result.checkpoints[split - 1] if split > 0 else 1
    if scenario.phase == "before-block":
        return result.trace[:cut]
    if scenario.phase == "after-block":
        return result.trace[cut - 1 :]
    raise SimulationError(f"unknown phase {scenario.phase!r}")


class TraceCheck(NamedTuple):
    valid: bool
    offending: tuple[int, int] | None = None


def validate_trace(trace: Sequence[int], graph: RegionGraph) -> TraceCheck:
    """Every consecutive pair of ``trace`` must be an edge of ``graph``."""
    for a, b in zip(trace, trace[1:]):
        if not graph.has_edge(a, b):
            return TraceCheck(False, (a, b))
    return TraceCheck(True)
