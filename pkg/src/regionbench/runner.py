"""Evaluation loop over (scenario, instruction, run) triples.

For each scenario/instruction pair the prompt is rendered once, queried K
times with derived seeds, each response parsed and scored against the best
matching reference, and the K scores averaged. Everything lands in a run
directory::

    <output_dir>/
      config.lock.json   resolved configuration + backend identity
      responses/         raw responses, content-addressed (replay cache)
      scores.csv         one row per query
      summary.json       full RunResult (records, pair means, distributions)
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from .corpus import (
    InstructionRecord,
    MissingReferenceError,
    builtin_corpus,
    load_corpus,
    references_for,
)
from .gridmap import Scenario
from .llmclient import (
    Backend,
    BackendError,
    CachingBackend,
    EchoReferenceBackend,
    PlannerBackend,
    QueryRequest,
    RandomWalkBackend,
    ReplayBackend,
    ResponseCache,
    configure_http_backend,
)
from .metrics import (
    DEFAULT_MAX_N,
    DistributionSummary,
    aggregate_runs,
    gleu,
    score_pair,
    summarize_distribution,
)
from .oracle import RegionTrace
from .prompt import PromptBundle, UnparseableResponseError, build_prompt, parse_response
from .scenarios import load_scenario
from .topology import extract_graph

logger = logging.getLogger(__name__)

MODES = ("associated", "simplest-on-all", "complex-on-all")
CSV_COLUMNS = (
    "environment",
    "partition",
    "phase",
    "instruction_id",
    "author",
    "k",
    "backend",
    "model",
    "parsed_sequence",
    "best_reference_index",
    "score",
)


class ConfigError(ValueError):
    pass


class RunIncompleteError(RuntimeError):
    """Some queries failed; completed responses are cached and the run can resume."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioRef:
    grid: str
    phase: str | None = None


@dataclass
class RunConfig:
    scenarios: list[ScenarioRef]
    output_dir: str
    backend: dict[str, Any] = field(default_factory=lambda: {"kind": "echo"})
    corpus: str = "builtin"
    k: int = 4
    base_seed: int = 0
    mode: str = "associated"
    phases: list[str] | None = None
    instructions: list[str] | None = None
    authors: list[str] | None = None
    parallelism: int | None = None
    max_n: int = DEFAULT_MAX_N
    # Directory that relative paths are resolved against; not serialized
    base_dir: Path | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("K must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.scenarios:
            raise ConfigError("config lists no scenarios")
        if "kind" not in self.backend:
            raise ConfigError("backend spec needs a 'kind'")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> RunConfig:
        try:
            scenarios = [
                ScenarioRef(s) if isinstance(s, str) else ScenarioRef(s["grid"], s.get("phase"))
                for s in raw["scenarios"]
            ]
            return cls(
                scenarios=scenarios,
                output_dir=raw["output_dir"],
                backend=dict(raw.get("backend", {"kind": "echo"})),
                corpus=raw.get("corpus", "builtin"),
                k=int(raw.get("k", raw.get("K", 4))),
                base_seed=int(raw.get("base_seed", 0)),
                mode=raw.get("mode", "associated"),
                phases=raw.get("phases"),
                instructions=raw.get("instructions"),
                authors=raw.get("authors"),
                parallelism=raw.get("parallelism"),
                max_n=int(raw.get("max_n", DEFAULT_MAX_N)),
                base_dir=base_dir,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed run config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent.resolve())

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        out["scenarios"] = [
            {"grid": s.grid, "phase": s.phase} if s.phase else {"grid": s.grid}
            for s in self.scenarios
        ]
        return out

    def config_hash(self) -> str:
        """Hash of everything that determines results (not where they are written)."""
        body = self.to_dict()
        body.pop("output_dir")
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def resolved(self) -> RunConfig:
        """Copy with every relative path made absolute."""
        scenarios = [
            s if s.grid.startswith("builtin:") else ScenarioRef(str(self.resolve(s.grid)), s.phase)
            for s in self.scenarios
        ]
        corpus = self.corpus if self.corpus == "builtin" else str(self.resolve(self.corpus))
        return replace(
            self,
            scenarios=scenarios,
            corpus=corpus,
            output_dir=str(self.out_path.resolve()),
            base_dir=None,
        )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    @property
    def out_path(self) -> Path:
        return self.resolve(self.output_dir)


def derive_seed(base_seed: int, scenario_key: str, instruction_id: str, k: int) -> int:
    blob = f"{base_seed}|{scenario_key}|{instruction_id}|{k}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:4], "big") & 0x7FFFFFFF


_ROMAN = {"I": 1, "V": 5, "X": 10, "L": 50, "C": 100}


def partition_order(label: str) -> tuple[int, str]:
    """Sort key placing roman-numeral labels (I, II, ..., IV) in numeric order."""
    up = label.upper()
    if up and all(ch in _ROMAN for ch in up):
        total = 0
        for a, b in zip(up, up[1:] + " "):
            v = _ROMAN[a]
            total += -v if b in _ROMAN and _ROMAN[b] > v else v
        return (total, label)
    m = re.fullmatch(r"\d+", label)
    return (int(label), label) if m else (10**9, label)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreRecord:
    environment: str
    partition: str
    phase: str
    instruction_id: str
    author: str
    k: int
    seed: int
    backend: str
    model: str
    parsed_sequence: RegionTrace | None
    reference_scores: tuple[float, ...]
    best_reference_index: int
    score: float

    @property
    def pair_key(self) -> tuple[str, str, str, str]:
        return (self.environment, self.partition, self.phase, self.instruction_id)

    def sort_key(self) -> tuple:
        return (
            self.environment,
            partition_order(self.partition),
            self.phase,
            self.instruction_id,
            self.k,
        )


@dataclass(frozen=True)
class PairResult:
    environment: str
    partition: str
    phase: str
    instruction_id: str
    author: str
    mean: float
    std: float
    k: int


@dataclass(frozen=True)
class PartitionSummary:
    environment: str
    phase: str
    partition: str
    summary: DistributionSummary


@dataclass(frozen=True)
class RunResult:
    records: tuple[ScoreRecord, ...]
    pairs: tuple[PairResult, ...]
    partitions: tuple[PartitionSummary, ...]
    provenance: dict = field(default_factory=dict, compare=True, hash=False)

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "records": [
                {**asdict(r), "parsed_sequence": list(r.parsed_sequence) if r.parsed_sequence else None}
                for r in self.records
            ],
            "pairs": [asdict(p) for p in self.pairs],
            "partitions": [asdict(p) for p in self.partitions],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, raw: dict) -> RunResult:
        records = tuple(
            ScoreRecord(
                **{
                    **r,
                    "parsed_sequence": tuple(r["parsed_sequence"]) if r["parsed_sequence"] else None,
                    "reference_scores": tuple(r["reference_scores"]),
                }
            )
            for r in raw["records"]
        )
        pairs = tuple(PairResult(**p) for p in raw["pairs"])
        parts = tuple(
            PartitionSummary(
                environment=p["environment"],
                phase=p["phase"],
                partition=p["partition"],
                summary=DistributionSummary(**p["summary"]),
            )
            for p in raw["partitions"]
        )
        return cls(records, pairs, parts, dict(raw.get("provenance", {})))

    @classmethod
    def from_json(cls, text: str) -> RunResult:
        return cls.from_dict(json.loads(text))


def read_result(path: str | Path) -> RunResult:
    """Load a RunResult from ``summary.json``, ``report.json`` or a run directory."""
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    return RunResult.from_json(path.read_text(encoding="utf-8"))


def summarize_records(records: Sequence[ScoreRecord], provenance: dict | None = None) -> RunResult:
    """Deterministic reduction of per-query records into pair and partition summaries."""
    ordered = tuple(sorted(records, key=ScoreRecord.sort_key))
    groups: dict[tuple, list[ScoreRecord]] = {}
    for rec in ordered:
        groups.setdefault(rec.pair_key, []).append(rec)
    pairs = []
    for (env, part, phase, iid), recs in groups.items():
        agg = aggregate_runs([r.score for r in recs])
        pairs.append(PairResult(env, part, phase, iid, recs[0].author, agg.mean, agg.std, agg.k))
    by_partition: dict[tuple[str, str, str], list[float]] = {}
    for p in pairs:
        by_partition.setdefault((p.environment, p.phase, p.partition), []).append(p.mean)
    partitions = tuple(
        PartitionSummary(env, phase, part, summarize_distribution(values))
        for (env, phase, part), values in sorted(
            by_partition.items(), key=lambda kv: (kv[0][0], kv[0][1], partition_order(kv[0][2]))
        )
    )
    return RunResult(ordered, tuple(pairs), partitions, dict(provenance or {}))


def scores_csv(records: Sequence[ScoreRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sorted(records, key=ScoreRecord.sort_key):
        writer.writerow(
            [
                r.environment,
                r.partition,
                r.phase,
                r.instruction_id,
                r.author,
                r.k,
                r.backend,
                r.model,
                " -> ".join(map(str, r.parsed_sequence)) if r.parsed_sequence else "",
                r.best_reference_index if r.best_reference_index >= 0 else "",
                repr(r.score),
            ]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Task:
    scenario: Scenario
    record: InstructionRecord
    references: tuple[RegionTrace, ...]


def load_scenarios(config: RunConfig) -> list[Scenario]:
    scenarios = []
    for ref in config.scenarios:
        sc = load_scenario(ref.grid, phase=ref.phase, base=config.base_dir)
        if config.phases is None or sc.phase in config.phases:
            scenarios.append(sc)
    keys = [s.key for s in scenarios]
    if len(set(keys)) != len(keys):
        raise ConfigError(f"duplicate scenarios in config: {keys}")
    return scenarios


def load_config_corpus(config: RunConfig) -> list[InstructionRecord]:
    records = builtin_corpus() if config.corpus == "builtin" else load_corpus(config.resolve(config.corpus))
    if config.instructions is not None:
        known = {r.id for r in records}
        missing = set(config.instructions) - known
        if missing:
            raise ConfigError(f"unknown instruction ids: {sorted(missing)}")
        records = [r for r in records if r.id in config.instructions]
    if config.authors is not None:
        records = [r for r in records if r.author in config.authors]
    return records


def plan_tasks(
    config: RunConfig, scenarios: Sequence[Scenario], corpus: Sequence[InstructionRecord]
) -> list[Task]:
    pairs: list[tuple[Scenario, InstructionRecord]] = []
    if config.mode == "associated":
        pairs = [(s, r) for s in scenarios for r in corpus if r.applies_to(s)]
    else:
        groups: dict[str, list[Scenario]] = {}
        for s in scenarios:
            groups.setdefault(s.environment, []).append(s)
        for env, members in groups.items():
            labels = sorted({s.partition_id for s in members}, key=partition_order)
            source = labels[0] if config.mode == "simplest-on-all" else labels[-1]
            scoped = [r for r in corpus if r.environment == env and r.scope == source]
            if not scoped:
                raise ConfigError(
                    f"{config.mode}: no instructions scoped to partition {source!r} of {env}"
                )
            pairs += [(s, r) for s in members for r in scoped]

    tasks = []
    for scenario, record in pairs:
        try:
            refs = references_for(record, scenario)
        except MissingReferenceError as exc:
            raise MissingReferenceError(
                f"{scenario.key}: {exc}"
            ) from None
        tasks.append(Task(scenario, record, tuple(r.sequence for r in refs)))
    return tasks


# ---------------------------------------------------------------------------
# Backends from config
# ---------------------------------------------------------------------------


def make_backend(spec: dict, references: dict[tuple, tuple[RegionTrace, ...]], cache: ResponseCache) -> Backend:
    kind = spec["kind"]
    if kind == "echo":

        def lookup(prompt: PromptBundle) -> tuple[RegionTrace, ...]:
            return references[
                (prompt.environment, prompt.partition_id, prompt.phase, prompt.instruction_id)
            ]

        return EchoReferenceBackend(lookup, reference_index=int(spec.get("reference_index", 0)))
    if kind == "planner":
        return PlannerBackend()
    if kind == "random-walk":
        return RandomWalkBackend(max_steps=int(spec.get("max_steps", 30)))
    if kind == "replay":
        return ReplayBackend(
            cache,
            name=spec.get("name", "replay"),
            model=spec.get("model", "replay"),
            temperature=float(spec.get("temperature", 0.0)),
        )
    if kind == "http":
        try:
            return configure_http_backend(
                endpoint=spec["endpoint"],
                model=spec["model"],
                api_key_env=spec["api_key_env"],
                temperature=float(spec.get("temperature", 0.0)),
                timeout=float(spec.get("timeout", 120.0)),
                max_retries=int(spec.get("max_retries", 4)),
                min_interval=float(spec.get("min_interval", 0.0)),
                send_seed=bool(spec.get("send_seed", True)),
            )
        except KeyError as exc:
            raise ConfigError(f"http backend needs {exc}") from exc
    raise ConfigError(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _run_query(
    task: Task, prompt: PromptBundle, k: int, config: RunConfig, backend: Backend
) -> ScoreRecord:
    seed = derive_seed(config.base_seed, task.scenario.key, task.record.id, k)
    request = QueryRequest(prompt, seed, backend.temperature, backend.model)
    response = backend.complete(request)
    try:
        hyp = parse_response(response.raw_text)
    except UnparseableResponseError:
        hyp = None
    if hyp is None:
        ref_scores: tuple[float, ...] = tuple(0.0 for _ in task.references)
        best, best_idx = 0.0, -1
    else:
        ref_scores = tuple(gleu(hyp, ref, config.max_n) for ref in task.references)
        best, best_idx = score_pair(hyp, task.references, config.max_n)
    return ScoreRecord(
        environment=task.scenario.environment,
        partition=task.scenario.partition_id,
        phase=task.scenario.phase,
        instruction_id=task.record.id,
        author=task.record.author,
        k=k,
        seed=seed,
        backend=backend.name,
        model=backend.model,
        parsed_sequence=hyp,
        reference_scores=ref_scores,
        best_reference_index=best_idx,
        score=best,
    )


def evaluate(config: RunConfig, backend: Backend | None = None) -> RunResult:
    """Run every (scenario, instruction, k) query and persist the run directory.

    ``backend`` overrides the config's backend spec (useful for tests and
    custom clients); responses are still cached under ``responses/``.
    """
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    config = config.resolved()
    scenarios = load_scenarios(config)
    corpus = load_config_corpus(config)
    tasks = plan_tasks(config, scenarios, corpus)
    if not tasks:
        raise ConfigError("no (scenario, instruction) pairs selected")

    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    cache = ResponseCache(out / "responses")
    references = {
        (t.scenario.environment, t.scenario.partition_id, t.scenario.phase, t.record.id): t.references
        for t in tasks
    }
    inner = backend or make_backend(config.backend, references, cache)
    live = inner if isinstance(inner, ReplayBackend) else CachingBackend(inner, cache)

    lock = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "backend_identity": {
            "name": inner.name,
            "model": inner.model,
            "temperature": inner.temperature,
        },
    }
    (out / "config.lock.json").write_text(json.dumps(lock, indent=2) + "\n", encoding="utf-8")

    jobs = []
    for task in tasks:
        graph = extract_graph(task.scenario.grid)
        prompt = build_prompt(task.scenario, graph, task.record)
        jobs += [(task, prompt, k) for k in range(1, config.k + 1)]

    workers = config.parallelism or (1 if config.backend["kind"] == "http" and backend is None else 8)
    records: list[ScoreRecord] = []
    failures: list[str] = []

    def run(job):
        task, prompt, k = job
        return _run_query(task, prompt, k, config, live)

    if workers <= 1:
        outcomes = []
        for job in jobs:
            try:
                outcomes.append(run(job))
            except BackendError as exc:
                outcomes.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run, job) for job in jobs]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except BackendError as exc:
                    outcomes.append(exc)
    for (task, _, k), outcome in zip(jobs, outcomes):
        if isinstance(outcome, Exception):
            failures.append(f"{task.scenario.key} {task.record.id} k={k}: {outcome}")
        else:
            records.append(outcome)

    provenance = {
        "config_hash": lock["config_hash"],
        "backend": inner.name,
        "model": inner.model,
        "k": config.k,
        "mode": config.mode,
        "seeds": {
            f"{t.scenario.key}|{t.record.id}": [
                derive_seed(config.base_seed, t.scenario.key, t.record.id, k)
                for k in range(1, config.k + 1)
            ]
            for t in tasks
        },
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "complete": not failures,
    }
    result = summarize_records(records, provenance) if records else RunResult((), (), (), provenance)
    (out / "scores.csv").write_text(scores_csv(result.records), encoding="utf-8")
    (out / "summary.json").write_text(result.to_json() + "\n", encoding="utf-8")
    if failures:
        raise RunIncompleteError(
            f"{len(failures)} of {len(jobs)} queries failed; rerun to resume:\n" + "\n".join(failures[:10])
        )
    return result


def run_cross_partition(config: RunConfig, backend: Backend | None = None) -> RunResult:
    """Apply one partition's instructions to every partition of its environment."""
    if config.mode == "associated":
        raise ConfigError("run_cross_partition needs mode simplest-on-all or complex-on-all")
    return evaluate(config, backend)


def replay(run_dir: str | Path) -> RunResult:
    """Re-evaluate a finished run purely from its response cache."""
    run_dir = Path(run_dir)
    lock = json.loads((run_dir / "config.lock.json").read_text(encoding="utf-8"))
    identity = lock["backend_identity"]
    raw = dict(lock["config"])
    raw["output_dir"] = str(run_dir.resolve())
    config = RunConfig.from_dict(raw)
    cache = ResponseCache(run_dir / "responses")
    backend = ReplayBackend(cache, identity["name"], identity["model"], identity["temperature"])
    return evaluate(config, backend)
