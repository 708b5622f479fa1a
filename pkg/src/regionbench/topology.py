"""Region adjacency graphs, block pushing and pit bridging."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .gridmap import Direction, GridError, GridMap, Pit, Wall

Edge = tuple[int, int]


def _edge(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, eq=False)
class RegionGraph:
    nodes: frozenset[int]
    adj: Mapping[int, tuple[int, ...]]
    bridge_edges: frozenset[Edge] = field(default_factory=frozenset)

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[int, int]],
        nodes: Iterable[int] = (),
        bridge_edges: Iterable[tuple[int, int]] = (),
    ) -> RegionGraph:
        bridges = {_edge(a, b) for a, b in bridge_edges}
        pairs = {_edge(a, b) for a, b in edges} | bridges
        all_nodes = set(nodes)
        nbrs: dict[int, set[int]] = {}
        for a, b in pairs:
            if a == b:
                raise ValueError(f"self-loop on region {a}")
            nbrs.setdefault(a, set()).add(b)
            nbrs.setdefault(b, set()).add(a)
            all_nodes.update((a, b))
        adj = {n: tuple(sorted(nbrs.get(n, ()))) for n in sorted(all_nodes)}
        return cls(frozenset(all_nodes), adj, frozenset(bridges))

    @classmethod
    def from_adjacency(cls, adj: Mapping[int, Iterable[int]]) -> RegionGraph:
        """Build from a possibly asymmetric neighbour mapping (union of lists)."""
        return cls.from_edges(
            ((int(r), int(s)) for r, ss in adj.items() for s in ss),
            nodes=(int(r) for r in adj),
        )

    def edges(self) -> frozenset[Edge]:
        return frozenset(_edge(a, b) for a, ss in self.adj.items() for b in ss)

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.adj.get(a, ())

    def neighbors(self, r: int) -> tuple[int, ...]:
        return self.adj.get(r, ())

    def shortest_path(self, start: int, goal: int) -> list[int] | None:
        """Breadth-first path visiting neighbours in ascending order."""
        if start not in self.nodes or goal not in self.nodes:
            return None
        parent: dict[int, int | None] = {start: None}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            if cur == goal:
                path = [cur]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])  # type: ignore[arg-type]
                return path[::-1]
            for nxt in self.adj.get(cur, ()):
                if nxt not in parent:
                    parent[nxt] = cur
                    queue.append(nxt)
        return None

    def connected(self, a: int, b: int) -> bool:
        return self.shortest_path(a, b) is not None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegionGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and dict(self.adj) == dict(other.adj)
            and self.bridge_edges == other.bridge_edges
        )

    def to_dict(self) -> dict[str, list[int]]:
        return {str(r): list(ss) for r, ss in sorted(self.adj.items())}


def extract_graph(grid: GridMap) -> RegionGraph:
    """Region adjacency induced by 4-adjacent cells with distinct regions."""
    nodes: set[int] = set()
    edges: set[Edge] = set()
    for pos in grid.positions():
        here = grid.effective_region(pos)
        if here is None:
            continue
        nodes.add(here)
        for d in (Direction.E, Direction.S):
            nb = d.step(pos)
            if not grid.in_bounds(nb):
                continue
            there = grid.effective_region(nb)
            if there is not None and there != here:
                edges.add(_edge(here, there))
    return RegionGraph.from_edges(edges, nodes)


# ---------------------------------------------------------------------------
# Verification against a declared list
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdjacencyDiff:
    """Edges the declared list lacks (``missing``) or adds (``extra``)."""

    missing: tuple[Edge, ...]
    extra: tuple[Edge, ...]

    @property
    def empty(self) -> bool:
        return not self.missing and not self.extra

    def to_json(self) -> str:
        return json.dumps(
            {"missing": [list(e) for e in self.missing], "extra": [list(e) for e in self.extra]}
        )

    def to_text(self) -> str:
        if self.empty:
            return "adjacency matches: no differences"
        lines = []
        for label, edges in (("missing", self.missing), ("extra", self.extra)):
            for a, b in edges:
                lines.append(f"{label}: {a} -- {b}")
        return "\n".join(lines)


def verify_against(graph: RegionGraph, declared: Mapping[int, Iterable[int]]) -> AdjacencyDiff:
    expected = graph.edges()
    listed = RegionGraph.from_adjacency(declared).edges()
    return AdjacencyDiff(
        missing=tuple(sorted(expected - listed)),
        extra=tuple(sorted(listed - expected)),
    )


def load_adjacency(text: str) -> dict[int, tuple[int, ...]]:
    raw = json.loads(text)
    return {int(k): tuple(int(x) for x in v) for k, v in raw.items()}


# ---------------------------------------------------------------------------
# Block pushing
# ---------------------------------------------------------------------------


class PushError(GridError):
    pass


class AgentNotPositionedError(PushError):
    pass


class BlockedPushError(PushError):
    pass


class BridgeError(GridError):
    pass


def push_block_step(grid: GridMap, direction: Direction | str) -> GridMap:
    """Push the block one cell; the agent follows into the vacated cell.

    Vacated cells show their underlying cell again because ``cells`` never
    stores the block itself.
    """
    d = Direction.parse(direction)
    if not grid.block_cells:
        raise AgentNotPositionedError("grid has no block to push")
    front = d.step(grid.agent_pos)
    if front not in grid.block_cells:
        raise AgentNotPositionedError(
            f"agent at {grid.agent_pos} is not behind the block when pushing {d.name}"
        )
    moved = tuple(sorted(d.step(p) for p in grid.block_cells))
    for p in moved:
        if not grid.in_bounds(p):
            raise BlockedPushError(f"pushing {d.name} moves the block off the grid at {p}")
        if isinstance(grid.cell(p), Wall):
            raise BlockedPushError(f"pushing {d.name} moves the block into a wall at {p}")
        if p == grid.goal_pos:
            raise BlockedPushError(f"pushing {d.name} moves the block onto the goal at {p}")
    return replace(grid, block_cells=moved, agent_pos=front)


def _block_axes(grid: GridMap) -> list[Direction]:
    cells = grid.block_cells
    if len(cells) == 1:
        return [Direction.S, Direction.E]
    if len({r for r, _ in cells}) == 1:
        return [Direction.E]
    return [Direction.S]


def bridge_edges(grid: GridMap) -> set[Edge]:
    """Edges created by in-pit block runs, joining the cells past each end."""
    if not grid.block_in_pit:
        raise BridgeError("the block does not fully rest in the pit")
    in_pit = set(grid.in_pit_cells)
    found: set[Edge] = set()
    for axis in _block_axes(grid):
        back = axis.opposite
        for start in sorted(in_pit):
            if back.step(start) in in_pit:
                continue
            end = start
            while axis.step(end) in in_pit:
                end = axis.step(end)
            before, after = back.step(start), axis.step(end)
            if not (grid.in_bounds(before) and grid.in_bounds(after)):
                continue
            if isinstance(grid.cell(before), Pit) or isinstance(grid.cell(after), Pit):
                continue
            a, b = grid.effective_region(before), grid.effective_region(after)
            if a is not None and b is not None and a != b:
                found.add(_edge(a, b))
    return found


def bridged_graph(grid: GridMap, base: RegionGraph) -> RegionGraph:
    """``base`` plus the traversability edges created by the filled pit."""
    new = bridge_edges(grid)
    return RegionGraph.from_edges(
        base.edges(), nodes=base.nodes, bridge_edges=set(base.bridge_edges) | new
    )

