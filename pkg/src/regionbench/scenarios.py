"""Loading scenarios (grid file + optional declared adjacency) by path or builtin name."""

from __future__ import annotations

from pathlib import Path

from .corpus import data_path
from .gridmap import HeaderError, Scenario, parse_grid, split_headers
from .topology import load_adjacency

BUILTIN = {
    "ant-maze-iv": "ant_maze_iv.grid",
    "ant-fall-iv": "ant_fall_iv.grid",
}
PHASES = ("whole", "before-block", "after-block")


def resolve_grid_path(ref: str | Path, base: Path | None = None) -> Path:
    text = str(ref)
    name = text.removeprefix("builtin:")
    if text.startswith("builtin:") or name in BUILTIN:
        if name not in BUILTIN:
            raise FileNotFoundError(f"unknown builtin scenario {name!r}; known: {sorted(BUILTIN)}")
        return data_path(BUILTIN[name])
    path = Path(text)
    if not path.is_absolute() and base is not None:
        path = base / path
    return path


def load_scenario(ref: str | Path, phase: str | None = None, base: Path | None = None) -> Scenario:
    """Read a grid file and its sibling ``<stem>.adjacency.json`` if present.

    The ``environment`` and ``partition`` headers default to the file stem
    and ``"?"``; ``phase`` falls back to the ``phase`` header, then ``whole``.
    """
    path = resolve_grid_path(ref, base)
    text = path.read_text(encoding="utf-8")
    headers, _ = split_headers(text)
    phase = phase or headers.get("phase", "whole")
    if phase not in PHASES:
        raise HeaderError(f"unknown phase {phase!r}; expected one of {PHASES}")
    declared = None
    adj_path = path.with_name(path.stem + ".adjacency.json")
    if adj_path.exists():
        declared = load_adjacency(adj_path.read_text(encoding="utf-8"))
    return Scenario(
        environment=headers.get("environment", path.stem),
        partition_id=headers.get("partition", "?"),
        grid=parse_grid(text),
        phase=phase,
        declared_adjacency=declared,
    )
