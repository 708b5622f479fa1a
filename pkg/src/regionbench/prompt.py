"""Prompt rendering and final-answer parsing."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import InstructionRecord
from .gridmap import Scenario, format_rows, marker_regions
from .oracle import RegionTrace, as_trace
from .topology import RegionGraph

FINAL_OUTPUT_FORM = (
    "reply with one line 'FINAL: r1 -> r2 -> ... -> rn' listing the traversed "
    "regions in order, starting from the current region."
)

_MAZE_VIEW = (
    "- The top-down view of the maze is shown below, 'W' represents walls, "
    "'A' represents the ant's current position, 'G' represents the goal. "
    "The number represents the region number:"
)
_BLOCK_VIEW = "- The top-down view of the maze is shown below:"
_BLOCK_EXPLANATION = (
    "P represents pit, A represents the agent's current position, B represents "
    "the movable block which can be pushed by agent in four directions, G "
    "represents the goal, the number represents the region number. The block "
    "and the pit have the same width, the only way that the agent can pass the "
    "pit is to push the block to fill the pit and bridge the regions or it will "
    "not go through the pit: The action push means that the block moves one "
    "step in front of the agent in the direction that agent moves."
)
_STEPS_COMMON = (
    "1. Identify the agent's current region and the goal region.",
    "2. Interpret the Instruction: Understand the directional commands provided "
    "in the instruction and translate them into movements between regions.",
)
_STEP3_MAZE = (
    "3. Plan the Route: Based on the adjacency list and the maze layout, "
    "determine the sequence of regions the agent should traverse to follow the "
    "given instructions and reach the goal."
)
_STEP3_BLOCK = (
    "3. Plan the Route: Based on the adjacency list, the maze layout and the "
    "explanation, if the agent follows the instructions to reach the goal, "
    "describe the sequence of regions traversed by the agent."
)
_STEP4 = (
    "4. Check for each region of the sequence if the agent can move directly to "
    "the next. If not, correct the sequence according to the instructions."
)

INDENT = "    "


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    text: str
    environment: str
    partition_id: str
    instruction_id: str
    state_region: int
    goal_region: int
    block_region: int | None = None
    phase: str = "whole"


def render_adjacency(graph: RegionGraph) -> list[str]:
    return [
        f"{INDENT}Region {r}: [{', '.join(str(s) for s in graph.adj[r])}]"
        for r in sorted(graph.adj)
    ]


def build_prompt(scenario: Scenario, graph: RegionGraph, instruction: InstructionRecord) -> PromptBundle:
    text = instruction.text.strip()
    if not text:
        raise PromptError(f"instruction {instruction.id!r} has empty text")
    grid = scenario.grid
    state, goal = marker_regions(grid)
    for label, region in (("state", state), ("goal", goal), ("block", grid.block_region)):
        if region is not None and region not in graph.nodes:
            raise PromptError(f"{label} region {region} is not a node of the supplied graph")

    lines = ["Data:", f"- State: Region {state}", f"- Goal: Region {goal}"]
    if grid.block_region is not None:
        lines.append(f"- Block: Region {grid.block_region}")
    lines += ["", "- Adjacency list:", *render_adjacency(graph), ""]
    lines.append(_BLOCK_VIEW if grid.block_cells else _MAZE_VIEW)
    lines += ["", *format_rows(grid.rows()), ""]
    if grid.block_cells:
        lines += ["- Explanation:", INDENT + _BLOCK_EXPLANATION, ""]
    lines += ["- Instruction:", INDENT + text, ""]
    lines.append("- Thinking Process:")
    step3 = _STEP3_BLOCK if grid.block_cells else _STEP3_MAZE
    lines += [INDENT + step for step in (*_STEPS_COMMON, step3, _STEP4)]
    lines += ["", f"- Final output form: {FINAL_OUTPUT_FORM}"]

    return PromptBundle(
        text="\n".join(lines) + "\n",
        environment=scenario.environment,
        partition_id=scenario.partition_id,
        instruction_id=instruction.id,
        state_region=state,
        goal_region=goal,
        block_region=grid.block_region,
        phase=scenario.phase,
    )


# ---------------------------------------------------------------------------
# Reading prompts and responses back
# ---------------------------------------------------------------------------


class UnparseableResponseError(ValueError):
    pass


_NUM = r"(?:region\s*)?\d+"
_SEP = r"\s*(?:->|→|,)\s*"
_FINAL_RE = re.compile(
    rf"^(?:[A-Za-z][\w ]{{0,40}}:\s*)?({_NUM}(?:{_SEP}{_NUM})*)\.?$", re.IGNORECASE
)


def parse_response(text: str) -> RegionTrace:
    """Region sequence from the last line that looks like a final answer."""
    for raw in reversed(text.splitlines()):
        line = raw.strip().strip("*`_ ").replace("**", "").strip()
        m = _FINAL_RE.match(line)
        if not m:
            continue
        ids = [int(x) for x in re.findall(r"\d+", m.group(1))]
        if any(i <= 0 for i in ids):
            continue
        return as_trace(ids)
    raise UnparseableResponseError("no line matches the final-output form")


def format_final(trace: RegionTrace) -> str:
    return "FINAL: " + " -> ".join(str(r) for r in trace)


_ADJ_LINE = re.compile(r"^\s*Region (\d+): \[([\d,\s]*)\]\s*$")
_MARKER_LINE = re.compile(r"^- (State|Goal): Region (\d+)\s*$")


def read_prompt_graph(text: str) -> tuple[RegionGraph, int, int]:
    """Recover the adjacency list and state/goal regions from a rendered prompt."""
    adj: dict[int, list[int]] = {}
    markers: dict[str, int] = {}
    for line in text.splitlines():
        m = _ADJ_LINE.match(line)
        if m:
            adj[int(m.group(1))] = [int(x) for x in re.findall(r"\d+", m.group(2))]
            continue
        m = _MARKER_LINE.match(line)
        if m:
            markers[m.group(1)] = int(m.group(2))
    if "State" not in markers or "Goal" not in markers:
        raise PromptError("prompt has no State/Goal lines")
    return RegionGraph.from_adjacency(adj), markers["State"], markers["Goal"]
