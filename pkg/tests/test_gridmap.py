from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from regionbench.gridmap import (
    PIT,
    WALL,
    AmbiguousMarkerError,
    EmptyGridError,
    GridMap,
    MarkerCountError,
    MissingBlockRegionError,
    NonContiguousBlockError,
    RaggedRowsError,
    Region,
    Scenario,
    UnexpectedBlockRegionError,
    UnknownTokenError,
    marker_regions,
    parse_grid,
    serialize_grid,
    split_headers,
)


def test_minimal_grid_without_markers_rejected():
    with pytest.raises(MarkerCountError):
        parse_grid("1 2")


def test_ant_maze_markers(maze):
    assert (maze.height, maze.width) == (12, 13)
    assert maze.agent_pos == (10, 1)
    assert maze.goal_pos == (2, 1)
    assert marker_regions(maze) == (5, 4)
    assert maze.block_cells == ()


def test_ant_fall_markers_and_block(fall):
    assert (fall.height, fall.width) == (14, 15)
    assert fall.block_cells == ((7, 14), (8, 14))
    assert fall.block_region == 8
    assert marker_regions(fall) == (1, 3)


def test_strip_corridor():
    g = parse_grid("A 1 1 2 G")
    assert marker_regions(g) == (1, 2)
    assert g.cells == (Region(1), Region(1), Region(1), Region(2), Region(2))


@pytest.mark.parametrize(
    "text, error",
    [
        ("", EmptyGridError),
        ("\n\n  \n", EmptyGridError),
        ("A 1 1\n1 G", RaggedRowsError),
        ("A 1 X G", UnknownTokenError),
        ("A 1 0 G", UnknownTokenError),
        ("A 1 -2 G", UnknownTokenError),
        ("A 1 1 A G", MarkerCountError),
        ("A 1 1 2", MarkerCountError),
        ("A 1 G G 1", MarkerCountError),
        ("1 A 2 1 G", AmbiguousMarkerError),
        ("W A W 1 G", AmbiguousMarkerError),
        ("A 1 B 1 G", MissingBlockRegionError),
        ("#block_region: 3\nA 1 2 G", UnexpectedBlockRegionError),
        ("#block_region: 3\nA B 1 B G", NonContiguousBlockError),
        ("#block_region: 3\nA B 1\n1 1 B\n1 1 G", NonContiguousBlockError),
    ],
)
def test_rejections(text, error):
    with pytest.raises(error):
        parse_grid(text)


def test_error_classes_are_distinct():
    classes = [
        EmptyGridError,
        RaggedRowsError,
        UnknownTokenError,
        MarkerCountError,
        AmbiguousMarkerError,
        MissingBlockRegionError,
        NonContiguousBlockError,
    ]
    assert len(set(classes)) == len(classes)
    assert all(issubclass(c, ValueError) for c in classes)


def test_whitespace_tolerance():
    g = parse_grid("\n\n  A\t1   1 2  G  \n\n")
    assert marker_regions(g) == (1, 2)


def test_block_region_argument_overrides_header():
    g = parse_grid("#block_region: 3\nA 1 B B 1 G", block_region=7)
    assert g.block_region == 7


def test_headers_are_parsed():
    headers, rows = split_headers("#environment: ant-maze\n#partition: IV\n# free comment\nA 1 G\n")
    assert headers == {"environment": "ant-maze", "partition": "IV"}
    assert rows == ["A 1 G"]


def test_region_ids_need_not_be_contiguous():
    g = parse_grid("A 40 40 7 G")
    assert g.regions() == {40, 7}


def test_region_cell_rejects_nonpositive():
    with pytest.raises(ValueError):
        Region(0)


def test_round_trip_ant_maze(maze_text, maze):
    text = serialize_grid(maze)
    assert parse_grid(text) == maze
    original = [line.split() for line in maze_text.splitlines() if not line.startswith("#")]
    emitted = [line.split() for line in text.splitlines() if not line.startswith("#")]
    assert emitted == original


def test_round_trip_strip():
    g = parse_grid("A 1 1 2 G")
    assert serialize_grid(g) == "A 1 1 2 G\n"
    assert parse_grid(serialize_grid(g)) == g


def test_round_trip_ant_fall_keeps_block(fall):
    text = serialize_grid(fall)
    back = parse_grid(text)
    assert back == fall
    assert back.block_cells == ((7, 14), (8, 14))
    assert "#block_region: 8" in text


def test_underlay_resolves_ambiguous_marker():
    g = parse_grid("#underlay: 0,1=2\n1 A 2 1 G")
    assert marker_regions(g)[0] == 2
    assert parse_grid(serialize_grid(g)) == g


def test_marker_inherits_strict_majority():
    g = parse_grid("5 5 9\n5 A 5\n1 5 G")
    assert marker_regions(g)[0] == 5


def test_scenario_rejects_asymmetric_adjacency(maze):
    with pytest.raises(ValueError):
        Scenario("ant-maze", "IV", maze, declared_adjacency={1: (2,), 2: ()})
    with pytest.raises(ValueError):
        Scenario("ant-maze", "IV", maze, declared_adjacency={1: (1,)})


def test_gridmap_invariants_enforced():
    cells = (Region(1),) * 3
    with pytest.raises(ValueError):
        GridMap(3, 1, cells, agent_pos=(0, 0), goal_pos=(0, 0))
    with pytest.raises(ValueError):
        GridMap(3, 1, cells, agent_pos=(0, 0), goal_pos=(0, 2), block_cells=((0, 1),))


tokens = st.sampled_from(["W", "P", "1", "2", "3", "4"])


@st.composite
def valid_grids(draw):
    h = draw(st.integers(1, 6))
    w = draw(st.integers(2, 6))
    rows = [[draw(tokens) for _ in range(w)] for _ in range(h)]
    cells = [(r, c) for r in range(h) for c in range(w)]
    a, g = draw(st.lists(st.sampled_from(cells), min_size=2, max_size=2, unique=True))
    rows[a[0]][a[1]] = "A"
    rows[g[0]][g[1]] = "G"
    return "\n".join(" ".join(r) for r in rows)


@given(valid_grids())
def test_round_trip_property(text):
    try:
        g = parse_grid(text)
    except (AmbiguousMarkerError,):
        return
    assert parse_grid(serialize_grid(g)) == g


@given(valid_grids())
def test_marker_assignment_is_deterministic(text):
    try:
        first = parse_grid(text)
    except AmbiguousMarkerError:
        with pytest.raises(AmbiguousMarkerError):
            parse_grid(text)
        return
    assert parse_grid(text) == first


def test_wall_and_pit_tokens(fall):
    assert fall.cell((3, 0)) == PIT
    assert parse_grid("A 1 W 1 G").cell((0, 2)) == WALL
