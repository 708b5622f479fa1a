from __future__ import annotations

import re
import sys
from pathlib import Path

import pytest

from regionbench.corpus import data_path
from regionbench.gridmap import Scenario, parse_grid
from regionbench.oracle import load_program
from regionbench.scenarios import load_scenario
from regionbench.topology import load_adjacency

DATA = data_path("")


@pytest.fixture(scope="session")
def maze_text() -> str:
    return (DATA / "ant_maze_iv.grid").read_text()


@pytest.fixture(scope="session")
def fall_text() -> str:
    return (DATA / "ant_fall_iv.grid").read_text()


@pytest.fixture(scope="session")
def maze(maze_text):
    return parse_grid(maze_text)


@pytest.fixture(scope="session")
def fall(fall_text):
    return parse_grid(fall_text)


@pytest.fixture(scope="session")
def maze_declared():
    return load_adjacency((DATA / "ant_maze_iv.adjacency.json").read_text())


@pytest.fixture(scope="session")
def fall_declared():
    return load_adjacency((DATA / "ant_fall_iv.adjacency.json").read_text())


@pytest.fixture(scope="session")
def maze_scenario() -> Scenario:
    return load_scenario("builtin:ant-maze-iv")


@pytest.fixture(scope="session")
def fall_scenario() -> Scenario:
    return load_scenario("builtin:ant-fall-iv")


@pytest.fixture(scope="session")
def maze_program():
    return load_program((DATA / "programs" / "ant_maze.json").read_text())


@pytest.fixture(scope="session")
def fall_program():
    return load_program((DATA / "programs" / "ant_fall.json").read_text())


# Coarser stand-ins for partitions I-III: the Ant Maze IV layout with regions merged.
MAZE_MERGES = {
    "I": {r: 1 for r in range(1, 18)} | {18: 1, 19: 2, 20: 2, 21: 2, 22: 2, 23: 2, 3: 3, 4: 3},
    "II": {r: 1 for r in range(1, 19)} | {19: 2, 20: 2, 21: 2, 22: 2, 23: 2, 3: 3, 4: 4},
    "III": {r: (1 if r in (5, 6, 7, 8, 9, 11) else 2) for r in range(1, 19)}
    | {19: 3, 20: 3, 21: 3, 22: 3, 23: 3, 3: 4, 4: 5},
}


def remap_grid_text(text: str, mapping: dict[int, int], partition: str) -> str:
    out = []
    for line in text.splitlines():
        if line.startswith("#partition"):
            out.append(f"#partition: {partition}")
            continue
        if line.startswith("#"):
            out.append(line)
            continue
        out.append(re.sub(r"\d+", lambda m: str(mapping[int(m.group())]), line))
    return "\n".join(out) + "\n"


@pytest.fixture
def maze_partitions(tmp_path, maze_text) -> dict[str, Path]:
    """Grid files for four Ant Maze partitions (I-III synthetic, IV shipped)."""
    paths = {}
    for label, mapping in MAZE_MERGES.items():
        path = tmp_path / f"maze_{label}.grid"
        path.write_text(remap_grid_text(maze_text, mapping, label))
        paths[label] = path
    paths["IV"] = tmp_path / "maze_IV.grid"
    paths["IV"].write_text(maze_text)
    return paths


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
