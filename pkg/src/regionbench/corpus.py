"""Instruction corpus: natural-language instructions and their reference traces.

Corpus files are JSON::

    {"instructions": [
        {"id": "ant-maze-b01", "environment": "ant-maze", "author": "designer",
         "scope": "partition-agnostic", "text": "...",
         "program": "programs/ant_maze.json",
         "references": [{"partition": "IV", "phase": "whole",
                         "sequence": [5, 6, 1], "provenance": "human"}]}]}

``program`` is a path relative to the corpus file or an inline directive
list. When a record has no explicit reference for a scenario, one is
generated by simulating its program there (provenance ``oracle``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

from .gridmap import Scenario
from .oracle import (
    Directive,
    RegionTrace,
    as_trace,
    directive_from_json,
    directive_to_json,
    phase_trace,
)

AGNOSTIC = "partition-agnostic"


class CorpusError(ValueError):
    pass


class MissingReferenceError(CorpusError):
    pass


@dataclass(frozen=True)
class Reference:
    sequence: RegionTrace
    partition: str
    phase: str = "whole"
    provenance: str = "human"


@dataclass(frozen=True)
class InstructionRecord:
    id: str
    environment: str
    text: str
    author: str = "canonical"
    scope: str = AGNOSTIC
    references: tuple[Reference, ...] = ()
    program: tuple[Directive, ...] | None = field(default=None, compare=False)
    program_source: str | None = None

    def applies_to(self, scenario: Scenario) -> bool:
        return self.environment == scenario.environment and self.scope in (
            AGNOSTIC,
            scenario.partition_id,
        )


def references_for(record: InstructionRecord, scenario: Scenario) -> list[Reference]:
    """Reference traces of ``record`` on ``scenario``.

    Explicit references win; the program oracle is only a fallback.
    """
    explicit = [
        ref
        for ref in record.references
        if ref.partition == scenario.partition_id and ref.phase == scenario.phase
    ]
    if explicit:
        return explicit
    if record.program is not None:
        trace = phase_trace(scenario, record.program)
        return [
            Reference(
                sequence=trace,
                partition=scenario.partition_id,
                phase=scenario.phase,
                provenance=f"oracle:{record.program_source or 'inline'}",
            )
        ]
    raise MissingReferenceError(
        f"instruction {record.id!r} has no reference for partition "
        f"{scenario.partition_id!r} phase {scenario.phase!r} and no program"
    )


def _record_from_json(obj: dict, base: Path | None) -> InstructionRecord:
    try:
        program = None
        source = None
        raw_program = obj.get("program")
        if isinstance(raw_program, str):
            source = raw_program
            path = Path(raw_program)
            if not path.is_absolute() and base is not None:
                path = base / path
            raw_program = json.loads(path.read_text(encoding="utf-8"))
        if raw_program is not None:
            program = tuple(directive_from_json(d) for d in raw_program)
        refs = tuple(
            Reference(
                sequence=as_trace(r["sequence"]),
                partition=str(r["partition"]),
                phase=r.get("phase", "whole"),
                provenance=r.get("provenance", "human"),
            )
            for r in obj.get("references", [])
        )
        return InstructionRecord(
            id=str(obj["id"]),
            environment=obj["environment"],
            text=obj["text"],
            author=obj.get("author", "canonical"),
            scope=str(obj.get("scope", AGNOSTIC)),
            references=refs,
            program=program,
            program_source=source,
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"malformed instruction record {obj.get('id')!r}: {exc}") from exc


def parse_corpus(text: str, base: Path | None = None) -> list[InstructionRecord]:
    raw = json.loads(text)
    items = raw["instructions"] if isinstance(raw, dict) else raw
    records = [_record_from_json(obj, base) for obj in items]
    ids = [r.id for r in records]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise CorpusError(f"duplicate instruction ids: {sorted(dupes)}")
    return records


def load_corpus(path: str | Path) -> list[InstructionRecord]:
    path = Path(path)
    return parse_corpus(path.read_text(encoding="utf-8"), base=path.parent)


def corpus_to_json(records: Sequence[InstructionRecord]) -> str:
    out = []
    for r in records:
        item: dict = {
            "id": r.id,
            "environment": r.environment,
            "author": r.author,
            "scope": r.scope,
            "text": r.text,
        }
        if r.program is not None:
            item["program"] = r.program_source or [directive_to_json(d) for d in r.program]
        item["references"] = [
            {
                "partition": ref.partition,
                "phase": ref.phase,
                "sequence": list(ref.sequence),
                "provenance": ref.provenance,
            }
            for ref in r.references
        ]
        out.append(item)
    return json.dumps({"instructions": out}, indent=2, ensure_ascii=False)


def data_path(name: str) -> Path:
    return Path(str(resources.files("regionbench") / "data" / name))


@lru_cache(maxsize=1)
def _builtin() -> tuple[InstructionRecord, ...]:
    return tuple(load_corpus(data_path("corpus.json")))


def builtin_corpus() -> list[InstructionRecord]:
    """The shipped corpus: 11 designer instructions per environment plus two canonical ones."""
    return list(_builtin())
