"""Report tables and boxplot data from a finished run."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from statistics import fmean
from xml.sax.saxutils import escape

from .runner import PairResult, RunResult, partition_order, read_result
from .scenarios import PHASES

FORMATS = ("csv", "json", "svg")


class ReportError(ValueError):
    pass


def column_label(env: str, partition: str, phase: str) -> str:
    return f"{env}/{partition}" if phase == "whole" else f"{env}/{partition}/{phase}"


def table1(result: RunResult) -> dict[str, dict[str, float]]:
    """Mean pair score per (backend/model row, environment/partition column)."""
    cells: dict[str, dict[tuple, list[float]]] = {}
    row_of = {
        (r.environment, r.partition, r.phase, r.instruction_id): f"{r.backend}:{r.model}"
        for r in result.records
    }
    for p in result.pairs:
        row = row_of[(p.environment, p.partition, p.phase, p.instruction_id)]
        cells.setdefault(row, {}).setdefault((p.environment, p.phase, p.partition), []).append(p.mean)
    return {
        row: {
            column_label(env, part, phase): fmean(values)
            for (env, phase, part), values in sorted(
                cols.items(),
                key=lambda kv: (kv[0][0], partition_order(kv[0][2]), PHASES.index(kv[0][1])),
            )
        }
        for row, cols in cells.items()
    }


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def table1_csv(result: RunResult) -> str:
    table = table1(result)
    columns: list[str] = []
    for cols in table.values():
        columns += [c for c in cols if c not in columns]
    rows: list[list] = [["backend", *columns]]
    for row, cols in table.items():
        rows.append([row, *[repr(cols[c]) if c in cols else "" for c in columns]])
    return _csv(rows)


def pairs_csv(pairs: tuple[PairResult, ...]) -> str:
    rows: list[list] = [
        ["environment", "partition", "phase", "instruction_id", "author", "mean", "std", "k"]
    ]
    rows += [
        [p.environment, p.partition, p.phase, p.instruction_id, p.author, repr(p.mean), repr(p.std), p.k]
        for p in pairs
    ]
    return _csv(rows)


def partitions_csv(result: RunResult) -> str:
    rows: list[list] = [
        ["environment", "phase", "partition", "n", "mean", "std", "median", "q1", "q3", "iqr"]
    ]
    for p in result.partitions:
        s = p.summary
        rows.append(
            [p.environment, p.phase, p.partition, s.n]
            + [repr(v) for v in (s.mean, s.std, s.median, s.q1, s.q3, s.iqr)]
        )
    return _csv(rows)


def boxplot_svg(result: RunResult, environment: str, phase: str) -> str:
    """Median/IQR boxes per partition, whiskers at min/max of pair means."""
    parts = sorted(
        {p.partition for p in result.pairs if p.environment == environment and p.phase == phase},
        key=partition_order,
    )
    width, height, pad, box_w = 120 * max(len(parts), 1) + 80, 320, 40, 40
    plot_h = height - 2 * pad

    def y(v: float) -> float:
        return pad + (1.0 - v) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{pad}" y="20" font-size="14">{escape(environment)} ({escape(phase)})</text>',
        f'<line x1="{pad}" y1="{y(0)}" x2="{pad}" y2="{y(1)}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(
            f'<text x="4" y="{y(tick) + 4:.1f}" font-size="10">{tick:.2f}</text>'
        )
    summaries = {
        p.partition: p.summary
        for p in result.partitions
        if p.environment == environment and p.phase == phase
    }
    for i, part in enumerate(parts):
        cx = pad + 60 + i * 120
        means = [p.mean for p in result.pairs if (p.environment, p.phase, p.partition) == (environment, phase, part)]
        s = summaries[part]
        out += [
            f'<line x1="{cx}" y1="{y(max(means)):.1f}" x2="{cx}" y2="{y(min(means)):.1f}" stroke="black"/>',
            f'<rect x="{cx - box_w / 2}" y="{y(s.q3):.1f}" width="{box_w}" '
            f'height="{max(y(s.q1) - y(s.q3), 0.5):.1f}" fill="#f4a460" stroke="black"/>',
            f'<line x1="{cx - box_w / 2}" y1="{y(s.median):.1f}" x2="{cx + box_w / 2}" '
            f'y2="{y(s.median):.1f}" stroke="black" stroke-width="2"/>',
            f'<text x="{cx - 10}" y="{height - 12}" font-size="12">{escape(part)}</text>',
        ]
        for m in means:
            out.append(f'<circle cx="{cx + box_w / 2 + 8}" cy="{y(m):.1f}" r="2" fill="steelblue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report(result: RunResult, fmt: str, out_dir: str | Path) -> list[Path]:
    if fmt not in FORMATS:
        raise ReportError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    if not result.records:
        raise ReportError("run result has no records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def write(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    if fmt == "csv":
        write("table1.csv", table1_csv(result))
        write("per_instruction.csv", pairs_csv(result.pairs))
        write("partition_summary.csv", partitions_csv(result))
    elif fmt == "json":
        body = result.to_dict()
        body["table1"] = table1(result)
        write("report.json", json.dumps(body, indent=2, ensure_ascii=False) + "\n")
    else:
        for env, phase in sorted({(p.environment, p.phase) for p in result.pairs}):
            write(f"boxplot_{env}_{phase}.svg", boxplot_svg(result, env, phase))
    return written


def report_run_dir(run_dir: str | Path, fmt: str) -> list[Path]:
    run_dir = Path(run_dir)
    return report(read_result(run_dir), fmt, run_dir / "report")
