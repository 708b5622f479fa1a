"""Parsing and serialization of partitioned top-down grid maps.

A grid file is UTF-8 text: optional ``#key: value`` header lines followed by
whitespace-separated tokens, one row per line. Tokens are ``W`` (wall),
``P`` (pit), a positive integer (region id), or one of the overlay markers
``A`` (agent), ``G`` (goal), ``B`` (movable block).

Marker cells sit on top of an underlying cell. ``A`` and ``G`` inherit the
strict majority region of their 4-neighbours; ``B`` cells take the region
declared by the ``block_region`` header. An optional ``underlay`` header
lists explicit underlying cells (``row,col=token``) and overrides both rules;
:func:`serialize_grid` emits it only when a grid could not be recovered
otherwise (e.g. after the block has been pushed).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

Pos = tuple[int, int]


class Direction(Enum):
    """Cardinal direction; rows grow southwards, columns eastwards."""

    N = (-1, 0)
    S = (1, 0)
    E = (0, 1)
    W = (0, -1)

    @property
    def dr(self) -> int:
        return self.value[0]

    @property
    def dc(self) -> int:
        return self.value[1]

    def step(self, pos: Pos, n: int = 1) -> Pos:
        return (pos[0] + n * self.dr, pos[1] + n * self.dc)

    @property
    def opposite(self) -> Direction:
        return Direction((-self.dr, -self.dc))

    @property
    def left(self) -> Direction:
        # rotate 90 degrees counter-clockwise in screen coordinates
        return Direction((-self.dc, self.dr))

    @property
    def right(self) -> Direction:
        return Direction((self.dc, -self.dr))

    @classmethod
    def parse(cls, value: str | Direction) -> Direction:
        if isinstance(value, Direction):
            return value
        try:
            return cls[value.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown direction {value!r}") from None


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Wall:
    def token(self) -> str:
        return "W"


@dataclass(frozen=True)
class Pit:
    def token(self) -> str:
        return "P"


@dataclass(frozen=True)
class Region:
    id: int

    def __post_init__(self) -> None:
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id <= 0:
            raise ValueError(f"region id must be a positive integer, got {self.id!r}")

    def token(self) -> str:
        return str(self.id)


Cell = Wall | Pit | Region

WALL = Wall()
PIT = Pit()


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class GridError(ValueError):
    """Base class for every grid parse or validation failure."""


class EmptyGridError(GridError):
    pass


class RaggedRowsError(GridError):
    pass


class UnknownTokenError(GridError):
    pass


class MarkerCountError(GridError):
    """Zero or several ``A`` / ``G`` markers."""


class AmbiguousMarkerError(GridError):
    """A marker's neighbourhood has no strict majority region."""


class MissingBlockRegionError(GridError):
    """``B`` cells present but no ``block_region`` metadata."""


class UnexpectedBlockRegionError(GridError):
    """``block_region`` metadata given for a grid without ``B`` cells."""


class NonContiguousBlockError(GridError):
    pass


class OverlappingMarkersError(GridError):
    pass


class HeaderError(GridError):
    pass


# ---------------------------------------------------------------------------
# GridMap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridMap:
    """Rectangular grid of underlying cells plus agent/goal/block overlays.

    ``cells`` holds the *underlying* cell at every position, including under
    the markers, so moving an overlay never loses information.
    """

    width: int
    height: int
    cells: tuple[Cell, ...]
    agent_pos: Pos
    goal_pos: Pos
    block_cells: tuple[Pos, ...] = ()
    block_region: int | None = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise EmptyGridError("grid must have at least one cell")
        if len(self.cells) != self.width * self.height:
            raise RaggedRowsError(
                f"expected {self.width * self.height} cells, got {len(self.cells)}"
            )
        for pos in (self.agent_pos, self.goal_pos, *self.block_cells):
            if not self.in_bounds(pos):
                raise GridError(f"overlay position {pos} outside the grid")
        if bool(self.block_cells) != (self.block_region is not None):
            if self.block_cells:
                raise MissingBlockRegionError("block cells present without block_region")
            raise UnexpectedBlockRegionError("block_region given but no block cells")
        if self.block_region is not None:
            Region(self.block_region)
        _check_block_segment(self.block_cells)
        occupied = [self.agent_pos, self.goal_pos, *self.block_cells]
        if len(set(occupied)) != len(occupied):
            raise OverlappingMarkersError("agent, goal and block cells must be disjoint")

    def in_bounds(self, pos: Pos) -> bool:
        return 0 <= pos[0] < self.height and 0 <= pos[1] < self.width

    def cell(self, pos: Pos) -> Cell:
        r, c = pos
        return self.cells[r * self.width + c]

    def positions(self):
        for r in range(self.height):
            for c in range(self.width):
                yield (r, c)

    def effective_region(self, pos: Pos) -> int | None:
        """Region id a position counts as, or None for walls, pits and bridges.

        Block cells count as the block region unless they rest in a pit, in
        which case they are a bridge and belong to no region.
        """
        cell = self.cell(pos)
        if pos in self.block_cells:
            return None if isinstance(cell, Pit) else self.block_region
        return cell.id if isinstance(cell, Region) else None

    @property
    def in_pit_cells(self) -> tuple[Pos, ...]:
        return tuple(p for p in self.block_cells if isinstance(self.cell(p), Pit))

    @property
    def block_in_pit(self) -> bool:
        return bool(self.block_cells) and len(self.in_pit_cells) == len(self.block_cells)

    def regions(self) -> set[int]:
        found = {self.effective_region(p) for p in self.positions()}
        found.discard(None)
        return found  # type: ignore[return-value]

    def overlay_token(self, pos: Pos) -> str | None:
        if pos == self.agent_pos:
            return "A"
        if pos == self.goal_pos:
            return "G"
        if pos in self.block_cells:
            return "B"
        return None

    def rows(self) -> list[list[str]]:
        """Token matrix as it appears in a grid file."""
        return [
            [self.overlay_token((r, c)) or self.cell((r, c)).token() for c in range(self.width)]
            for r in range(self.height)
        ]


def _check_block_segment(cells: tuple[Pos, ...]) -> None:
    if len(cells) <= 1:
        return
    rows = {r for r, _ in cells}
    cols = {c for _, c in cells}
    if len(rows) == 1:
        span = sorted(cols)
    elif len(cols) == 1:
        span = sorted(rows)
    else:
        raise NonContiguousBlockError(f"block cells {sorted(cells)} are not in one line")
    if len(set(span)) != len(cells) or span[-1] - span[0] != len(span) - 1:
        raise NonContiguousBlockError(f"block cells {sorted(cells)} are not contiguous")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^#\s*([A-Za-z_][\w-]*)\s*:\s*(.*?)\s*$")
_UNDERLAY_RE = re.compile(r"^(\d+)\s*,\s*(\d+)\s*=\s*(\S+)$")
MARKERS = frozenset("AGB")


def _parse_token(tok: str, where: str) -> Cell | str:
    if tok == "W":
        return WALL
    if tok == "P":
        return PIT
    if tok in MARKERS:
        return tok
    if tok.isdigit() and int(tok) > 0:
        return Region(int(tok))
    raise UnknownTokenError(f"unknown token {tok!r} at {where}")


def split_headers(text: str) -> tuple[dict[str, str], list[str]]:
    """Separate ``#key: value`` header lines from grid rows.

    Lines starting with ``#`` that are not ``key: value`` pairs are treated
    as comments. Blank lines are dropped.
    """
    headers: dict[str, str] = {}
    rows: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if rows:
                raise HeaderError(f"header line {lineno} appears after grid rows")
            m = _HEADER_RE.match(line)
            if m:
                key = m.group(1).lower().replace("-", "_")
                headers[key] = m.group(2)
            continue
        rows.append(line)
    return headers, rows


def _parse_underlay(value: str) -> dict[Pos, Cell]:
    out: dict[Pos, Cell] = {}
    for item in value.split():
        m = _UNDERLAY_RE.match(item)
        if not m:
            raise HeaderError(f"malformed underlay entry {item!r}")
        tok = m.group(3)
        cell = _parse_token(tok, "underlay")
        if isinstance(cell, str):
            raise HeaderError(f"underlay entry {item!r} must name W, P or a region")
        out[(int(m.group(1)), int(m.group(2)))] = cell
    return out


def _majority_region(tokens: list[list[Cell | str]], pos: Pos) -> int:
    r, c = pos
    counts: Counter[int] = Counter()
    for d in Direction:
        nr, nc = d.step(pos)
        if 0 <= nr < len(tokens) and 0 <= nc < len(tokens[0]):
            nb = tokens[nr][nc]
            if isinstance(nb, Region):
                counts[nb.id] += 1
    ranked = counts.most_common()
    if not ranked:
        raise AmbiguousMarkerError(f"marker at {pos} has no region neighbours")
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        raise AmbiguousMarkerError(
            f"marker at {pos} has tied neighbour regions {dict(counts)}"
        )
    return ranked[0][0]


def parse_grid(text: str, block_region: int | None = None) -> GridMap:
    """Parse grid-file content into a :class:`GridMap`.

    ``block_region`` overrides the ``#block_region`` header when given.
    """
    headers, lines = split_headers(text)
    if not lines:
        raise EmptyGridError("grid text contains no rows")

    tokens = [
        [_parse_token(tok, f"row {r}, col {c}") for c, tok in enumerate(line.split())]
        for r, line in enumerate(lines)
    ]
    width = len(tokens[0])
    for r, row in enumerate(tokens):
        if len(row) != width:
            raise RaggedRowsError(f"row {r} has {len(row)} cells, expected {width}")

    found: dict[str, list[Pos]] = {m: [] for m in MARKERS}
    for r, row in enumerate(tokens):
        for c, tok in enumerate(row):
            if isinstance(tok, str):
                found[tok].append((r, c))
    for marker, name in (("A", "agent"), ("G", "goal")):
        if len(found[marker]) != 1:
            raise MarkerCountError(
                f"expected exactly one {name} marker {marker!r}, found {len(found[marker])}"
            )

    if block_region is None and "block_region" in headers:
        value = headers["block_region"]
        if not value.isdigit() or int(value) <= 0:
            raise HeaderError(f"block_region must be a positive integer, got {value!r}")
        block_region = int(value)
    blocks = tuple(sorted(found["B"]))
    if blocks and block_region is None:
        raise MissingBlockRegionError("B cells present but no block_region metadata")
    if not blocks and block_region is not None:
        raise UnexpectedBlockRegionError("block_region metadata but no B cells")
    _check_block_segment(blocks)

    underlay = _parse_underlay(headers.get("underlay", ""))
    for pos in underlay:
        if not (0 <= pos[0] < len(tokens) and 0 <= pos[1] < width):
            raise HeaderError(f"underlay position {pos} outside the grid")
        if not isinstance(tokens[pos[0]][pos[1]], str):
            raise HeaderError(f"underlay position {pos} is not a marker cell")

    cells: list[Cell] = []
    for r, row in enumerate(tokens):
        for c, tok in enumerate(row):
            if not isinstance(tok, str):
                cells.append(tok)
            elif (r, c) in underlay:
                cells.append(underlay[(r, c)])
            elif tok == "B":
                cells.append(Region(block_region))  # type: ignore[arg-type]
            else:
                cells.append(Region(_majority_region(tokens, (r, c))))

    return GridMap(
        width=width,
        height=len(tokens),
        cells=tuple(cells),
        agent_pos=found["A"][0],
        goal_pos=found["G"][0],
        block_cells=blocks,
        block_region=block_region,
    )


def _default_underlying(grid: GridMap, tokens: list[list[Cell | str]], pos: Pos) -> Cell | None:
    """Underlying cell parse_grid would infer for an overlay, or None if ambiguous."""
    if pos in grid.block_cells:
        return Region(grid.block_region)  # type: ignore[arg-type]
    try:
        return Region(_majority_region(tokens, pos))
    except AmbiguousMarkerError:
        return None


def serialize_grid(grid: GridMap, headers: dict[str, str] | None = None) -> str:
    """Render a grid in the file format; ``parse_grid`` inverts it exactly."""
    rows = grid.rows()
    token_grid: list[list[Cell | str]] = [
        [tok if tok in MARKERS else grid.cell((r, c)) for c, tok in enumerate(row)]
        for r, row in enumerate(rows)
    ]
    overrides = []
    for pos in sorted([grid.agent_pos, grid.goal_pos, *grid.block_cells]):
        if _default_underlying(grid, token_grid, pos) != grid.cell(pos):
            overrides.append(f"{pos[0]},{pos[1]}={grid.cell(pos).token()}")

    out_headers = dict(headers or {})
    out_headers.pop("underlay", None)
    out_headers.pop("block_region", None)
    if grid.block_region is not None:
        out_headers["block_region"] = str(grid.block_region)
    if overrides:
        out_headers["underlay"] = " ".join(overrides)

    lines = [f"#{k}: {v}" for k, v in out_headers.items()]
    lines.extend(format_rows(rows))
    return "\n".join(lines) + "\n"


def format_rows(rows: list[list[str]]) -> list[str]:
    """Left-align tokens in columns the way the top-down maps are printed."""
    pad = max(len(tok) for row in rows for tok in row)
    return [" ".join(tok.ljust(pad) for tok in row).rstrip() for row in rows]


def marker_regions(grid: GridMap) -> tuple[int, int]:
    """Underlying regions of the agent and goal cells."""
    agent = grid.effective_region(grid.agent_pos)
    goal = grid.effective_region(grid.goal_pos)
    assert agent is not None and goal is not None
    return agent, goal


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


class AdjacencyError(ValueError):
    pass


def check_adjacency(adj: dict[int, list[int]] | dict[int, tuple[int, ...]]) -> None:
    """Raise :class:`AdjacencyError` unless ``adj`` is symmetric and irreflexive."""
    for r, nbrs in adj.items():
        for s in nbrs:
            if s == r:
                raise AdjacencyError(f"region {r} lists itself as a neighbour")
            if r not in adj.get(s, ()):
                raise AdjacencyError(f"region {r} lists {s} but {s} does not list {r}")


@dataclass(frozen=True)
class Scenario:
    environment: str
    partition_id: str
    grid: GridMap
    phase: str = "whole"
    declared_adjacency: dict[int, tuple[int, ...]] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.declared_adjacency is not None:
            check_adjacency(self.declared_adjacency)

    @property
    def key(self) -> str:
        return f"{self.environment}/{self.partition_id}/{self.phase}"
