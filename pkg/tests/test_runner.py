from __future__ import annotations

import csv
import io
import json

import pytest

from regionbench.corpus import MissingReferenceError, data_path
from regionbench.llmclient import BackendError, PlannerBackend, ResponseCache
from regionbench.metrics import gleu
from regionbench.report import report, report_run_dir, table1
from regionbench.runner import (
    CSV_COLUMNS,
    ConfigError,
    RunConfig,
    RunIncompleteError,
    RunResult,
    ScenarioRef,
    derive_seed,
    evaluate,
    partition_order,
    read_result,
    replay,
    run_cross_partition,
)
from regionbench.scenarios import load_scenario
from regionbench.oracle import simulate, validate_trace
from regionbench.topology import extract_graph

BOTH = [ScenarioRef("builtin:ant-maze-iv"), ScenarioRef("builtin:ant-fall-iv")]


def config(tmp_path, name="run", **kw) -> RunConfig:
    kw.setdefault("scenarios", BOTH)
    return RunConfig(output_dir=str(tmp_path / name), **kw)


def comparable(result: RunResult):
    return result.records, result.pairs, result.partitions


class CountingPlanner(PlannerBackend):
    def __init__(self, fail_after: int | None = None):
        super().__init__()
        self.calls = 0
        self.fail_after = fail_after

    def complete(self, request):
        self.calls += 1
        if self.fail_after is not None and self.calls > self.fail_after:
            raise BackendError("simulated outage")
        return super().complete(request)


def test_echo_scores_one_everywhere(tmp_path):
    cfg = config(tmp_path, k=4, backend={"kind": "echo"})
    result = evaluate(cfg)
    assert len(result.pairs) == 24
    assert len(result.records) == 24 * 4
    assert all(p.mean == 1.0 and p.std == 0.0 for p in result.pairs)
    assert all(v == 1.0 for row in table1(result).values() for v in row.values())


def test_echo_csv_byte_identical(tmp_path):
    evaluate(config(tmp_path, "a", k=4))
    evaluate(config(tmp_path, "b", k=4))
    assert (tmp_path / "a" / "scores.csv").read_bytes() == (tmp_path / "b" / "scores.csv").read_bytes()


def test_csv_columns_and_recheckable_means(tmp_path):
    result = evaluate(config(tmp_path, k=3, backend={"kind": "random-walk"}))
    rows = list(csv.DictReader(io.StringIO((tmp_path / "run" / "scores.csv").read_text())))
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert len(rows) == len(result.pairs) * 3
    by_pair: dict = {}
    for row in rows:
        score = float(row["score"])
        assert 0.0 <= score <= 1.0
        key = (row["environment"], row["partition"], row["phase"], row["instruction_id"])
        by_pair.setdefault(key, []).append(score)
    for p in result.pairs:
        values = by_pair[(p.environment, p.partition, p.phase, p.instruction_id)]
        assert p.mean == pytest.approx(sum(values) / len(values), abs=1e-12)


def test_planner_identical_across_k_and_below_one(tmp_path):
    cfg = config(tmp_path, scenarios=[ScenarioRef("builtin:ant-maze-iv")], k=10, backend={"kind": "planner"})
    result = evaluate(cfg)
    bfs = extract_graph(load_scenario("builtin:ant-maze-iv").grid).shortest_path(5, 4)
    maze = load_scenario("builtin:ant-maze-iv")
    assert all(r.parsed_sequence == tuple(bfs) for r in result.records)
    for p in result.pairs:
        recs = [r for r in result.records if r.instruction_id == p.instruction_id]
        assert len({r.score for r in recs}) == 1 and p.std == 0.0
    # the corpus reference is the canonical simulated route, not the BFS path
    ref = simulate(maze, json_program("ant_maze.json"))
    assert ref != tuple(bfs)
    assert all(p.mean == pytest.approx(gleu(bfs, ref)) and p.mean < 1.0 for p in result.pairs)


def json_program(name):
    from regionbench.oracle import load_program

    return load_program((data_path("programs") / name).read_text())


def test_phases_are_separate_scenarios(tmp_path):
    cfg = config(
        tmp_path,
        scenarios=[
            ScenarioRef("builtin:ant-fall-iv", "before-block"),
            ScenarioRef("builtin:ant-fall-iv", "after-block"),
        ],
        k=1,
    )
    result = evaluate(cfg)
    phases = {r.phase for r in result.records}
    assert phases == {"before-block", "after-block"}
    seqs = {r.phase: r.parsed_sequence for r in result.records}
    assert seqs["before-block"] == (1, 17, 6, 11, 7, 8)
    assert seqs["after-block"] == (8, 10, 9, 23, 4, 3)


def test_replay_reproduces_with_zero_calls(tmp_path):
    backend = CountingPlanner()
    first = evaluate(config(tmp_path, k=2), backend=backend)
    calls = backend.calls
    csv_before = (tmp_path / "run" / "scores.csv").read_bytes()
    again = replay(tmp_path / "run")
    assert backend.calls == calls
    assert comparable(again) == comparable(first)
    assert (tmp_path / "run" / "scores.csv").read_bytes() == csv_before
    assert again.provenance["config_hash"] == first.provenance["config_hash"]


def test_replay_with_missing_cache_entry_fails(tmp_path):
    evaluate(config(tmp_path, k=1))
    victim = next((tmp_path / "run" / "responses").glob("*.txt"))
    victim.unlink()
    with pytest.raises(RunIncompleteError):
        replay(tmp_path / "run")


def test_resume_after_interruption(tmp_path):
    reference = evaluate(config(tmp_path, "whole", k=3), backend=CountingPlanner())
    with pytest.raises(RunIncompleteError):
        evaluate(config(tmp_path, "resumed", k=3), backend=CountingPlanner(fail_after=30))
    cached = len(ResponseCache(tmp_path / "resumed" / "responses"))
    assert 0 < cached < len(reference.records)
    second = CountingPlanner()
    resumed = evaluate(config(tmp_path, "resumed", k=3), backend=second)
    assert second.calls == len(reference.records) - cached
    assert comparable(resumed) == comparable(reference)


def test_order_independence(tmp_path):
    serial = evaluate(config(tmp_path, "serial", k=2, parallelism=1, backend={"kind": "random-walk"}))
    parallel = evaluate(config(tmp_path, "par", k=2, parallelism=8, backend={"kind": "random-walk"}))
    assert comparable(serial) == comparable(parallel)


def test_seed_schedule(tmp_path):
    result = evaluate(config(tmp_path, k=3))
    seeds = {(r.environment, r.instruction_id, r.k): r.seed for r in result.records}
    assert seeds[("ant-maze", "ant-maze-b01", 2)] == derive_seed(0, "ant-maze/IV/whole", "ant-maze-b01", 2)
    assert len(set(seeds.values())) == len(seeds)
    assert 0 <= min(seeds.values()) and max(seeds.values()) < 2**31


def test_json_report_round_trip(tmp_path):
    result = evaluate(config(tmp_path, k=2, backend={"kind": "planner"}))
    (path,) = report(result, "json", tmp_path / "rep")
    assert read_result(path) == result
    assert read_result(tmp_path / "run") == result


def test_csv_and_svg_reports(tmp_path):
    evaluate(config(tmp_path, k=2, backend={"kind": "planner"}))
    csvs = report_run_dir(tmp_path / "run", "csv")
    assert sorted(p.name for p in csvs) == ["partition_summary.csv", "per_instruction.csv", "table1.csv"]
    header = (tmp_path / "run" / "report" / "table1.csv").read_text().splitlines()[0]
    assert header == "backend,ant-fall/IV,ant-maze/IV"
    svgs = report_run_dir(tmp_path / "run", "svg")
    assert all(p.read_text().startswith("<svg") for p in svgs)
    with pytest.raises(ValueError):
        report_run_dir(tmp_path / "run", "pdf")


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        config(tmp_path, k=0)
    with pytest.raises(ConfigError):
        config(tmp_path, mode="everything")
    with pytest.raises(ConfigError):
        config(tmp_path, scenarios=[])
    with pytest.raises(ConfigError):
        evaluate(config(tmp_path, instructions=["nope"]))
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"output_dir": "x"})


def test_config_file_relative_paths(tmp_path, maze_partitions):
    (tmp_path / "cfg.json").write_text(
        json.dumps({"scenarios": [maze_partitions["II"].name], "output_dir": "out", "K": 1})
    )
    cfg = RunConfig.from_file(tmp_path / "cfg.json")
    assert cfg.k == 1
    result = evaluate(cfg)
    assert {r.partition for r in result.records} == {"II"}
    assert (tmp_path / "out" / "config.lock.json").exists()


def test_partition_order():
    assert sorted(["IV", "II", "I", "III", "X"], key=partition_order) == ["I", "II", "III", "IV", "X"]


# ---------------------------------------------------------------------------
# Cross-partition experiments
# ---------------------------------------------------------------------------


def scoped_corpus(tmp_path, scope, n=11, references=None):
    program = str(data_path("programs") / "ant_maze.json")
    items = []
    for i in range(1, n + 1):
        item = {
            "id": f"p{scope}-{i:02d}",
            "environment": "ant-maze",
            "author": f"participant-{i}",
            "scope": scope,
            "text": f"Instruction {i}: go right past the wall, then up, then left to the goal.",
        }
        if references is None:
            item["program"] = program
        else:
            item["references"] = references
        items.append(item)
    path = tmp_path / f"corpus_{scope}.json"
    path.write_text(json.dumps({"instructions": items}))
    return path


def partition_scenarios(paths):
    return [ScenarioRef(str(paths[p])) for p in ("I", "II", "III", "IV")]


def test_synthetic_partitions_are_consistent(maze_partitions):
    program = json_program("ant_maze.json")
    for label, path in maze_partitions.items():
        sc = load_scenario(str(path))
        assert sc.partition_id == label
        trace = simulate(sc, program)
        assert validate_trace(trace, extract_graph(sc.grid)).valid


def test_simplest_on_all_counts(tmp_path, maze_partitions):
    corpus = scoped_corpus(tmp_path, "I")
    cfg = config(
        tmp_path, scenarios=partition_scenarios(maze_partitions), corpus=str(corpus),
        k=10, mode="simplest-on-all", backend={"kind": "planner"},
    )
    result = run_cross_partition(cfg)
    assert len(result.records) == 440
    assert {r.partition for r in result.records} == {"I", "II", "III", "IV"}
    assert len(result.partitions) == 4


def test_simplest_on_source_equals_associated(tmp_path, maze_partitions):
    corpus = scoped_corpus(tmp_path, "I")
    cross = run_cross_partition(
        config(tmp_path, "cross", scenarios=partition_scenarios(maze_partitions), corpus=str(corpus),
               k=2, mode="simplest-on-all", backend={"kind": "planner"})
    )
    assoc = evaluate(
        config(tmp_path, "assoc", scenarios=[ScenarioRef(str(maze_partitions["I"]))],
               corpus=str(corpus), k=2, backend={"kind": "planner"})
    )
    assert [p for p in cross.pairs if p.partition == "I"] == list(assoc.pairs)
    assert [r for r in cross.records if r.partition == "I"] == list(assoc.records)


def test_complex_on_all_missing_reference(tmp_path, maze_partitions):
    refs = [{"partition": p, "sequence": [5, 4]} for p in ("I", "III", "IV")]
    corpus = scoped_corpus(tmp_path, "IV", n=2, references=refs)
    cfg = config(tmp_path, scenarios=partition_scenarios(maze_partitions), corpus=str(corpus),
                 k=1, mode="complex-on-all")
    with pytest.raises(MissingReferenceError) as err:
        run_cross_partition(cfg)
    assert "ant-maze/II/whole" in str(err.value)


def test_cross_partition_needs_scoped_instructions(tmp_path, maze_partitions):
    cfg = config(tmp_path, scenarios=partition_scenarios(maze_partitions), k=1, mode="simplest-on-all")
    with pytest.raises(ConfigError):
        run_cross_partition(cfg)
    with pytest.raises(ConfigError):
        run_cross_partition(config(tmp_path, k=1))
