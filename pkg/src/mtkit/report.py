"""Evaluation tables: system comparisons, per-source breakdowns, human eval.

Every cell is recomputed from hypotheses plus references at render time; the
report structures cache nothing that cannot be rebuilt. Display rounding is
BLEU/ChrF++ to 2 decimals, human means to 1 decimal (half-up), acceptance to
integer percent (half-up).
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .dataset import round_half_up
from .ingest import ParallelPair, SourceTag
from .metrics import bleu_corpus, chrf_pp

log = logging.getLogger(__name__)

ABSENT = "—"  # em dash marks a missing cell; 0 is a real score


class Direction(Enum):
    CE_RU = "ce-ru"
    RU_CE = "ru-ce"
    CE_EN = "ce-en"
    EN_CE = "en-ce"


@dataclass(frozen=True)
class SystemRun:
    system_name: str
    direction: Direction
    hypotheses: tuple[str, ...]

    @staticmethod
    def make(system_name: str, direction: str | Direction,
             hypotheses: Iterable[str]) -> "SystemRun":
        d = direction if isinstance(direction, Direction) else Direction(direction)
        return SystemRun(system_name=system_name, direction=d, hypotheses=tuple(hypotheses))


@dataclass(frozen=True)
class ComparisonCell:
    bleu: float
    chrf: float


@dataclass(frozen=True)
class ComparisonTable:
    """system -> direction -> cell; systems keep their declared order."""

    systems: tuple[str, ...]
    directions: tuple[Direction, ...]
    cells: dict[tuple[str, Direction], ComparisonCell]


def model_comparison(
    runs: Sequence[SystemRun],
    references: dict[Direction, Sequence[str]],
    tokenization: str = "intl",
) -> ComparisonTable:
    """Score every run against its direction's references.

    A (system, direction) with no run stays absent; rendering shows an em
    dash for it, never zero.
    """
    systems: list[str] = []
    for run in runs:
        if run.system_name not in systems:
            systems.append(run.system_name)
    directions = tuple(d for d in Direction if d in references)

    cells: dict[tuple[str, Direction], ComparisonCell] = {}
    for run in runs:
        refs = references.get(run.direction)
        if refs is None:
            raise ValueError(f"no references for direction {run.direction.value}")
        if len(run.hypotheses) != len(refs):
            raise ValueError(
                f"{run.system_name} {run.direction.value}: {len(run.hypotheses)} hypotheses "
                f"for {len(refs)} references")
        key = (run.system_name, run.direction)
        if key in cells:
            raise ValueError(f"duplicate run for {key}")
        cells[key] = _score_cell(list(run.hypotheses), list(refs), tokenization)
    return ComparisonTable(systems=tuple(systems), directions=directions, cells=cells)


def _score_cell(hyps: list[str], refs: list[str], tokenization: str) -> ComparisonCell:
    # effective_order keeps subsets of short segments (numbers, single words)
    # scorable: identity still reads 100.00 when no segment reaches 4-grams.
    # On sets with any 4-gram the value is identical to the fixed-order score.
    bleu = bleu_corpus(hyps, refs, tokenization=tokenization, effective_order=True)
    chrf = chrf_pp(hyps, refs)
    return ComparisonCell(bleu=bleu.value, chrf=chrf.value)


@dataclass(frozen=True)
class SourceBreakdown:
    """Per-SourceTag metric rows plus the all-segments row."""

    system_name: str
    direction: Direction
    rows: dict[str, ComparisonCell]  # source tag value or "All"


def per_source_breakdown(
    run: SystemRun,
    eval_pairs: Sequence[ParallelPair],
    references: Sequence[str],
    tokenization: str = "intl",
) -> SourceBreakdown:
    """Metrics on each source-restricted subset; empty subsets are omitted.

    The "All" row is computed over the full set with the same code path as
    model_comparison, which keeps the two tables bit-for-bit consistent.
    """
    if not (len(run.hypotheses) == len(references) == len(eval_pairs)):
        raise ValueError("hypotheses, references, and eval pairs must align")
    rows: dict[str, ComparisonCell] = {}
    for tag in SourceTag:
        idx = [i for i, p in enumerate(eval_pairs) if p.source_tag == tag]
        if not idx:
            continue
        hyps = [run.hypotheses[i] for i in idx]
        refs = [references[i] for i in idx]
        rows[tag.value] = _score_cell(hyps, refs, tokenization)
    rows["All"] = _score_cell(list(run.hypotheses), list(references), tokenization)
    return SourceBreakdown(system_name=run.system_name, direction=run.direction, rows=rows)


@dataclass(frozen=True)
class HumanEvalGroup:
    mean_score: float
    acceptance_rate: int
    n_ratings: int


@dataclass(frozen=True)
class HumanEvalReport:
    groups: dict[tuple[str, str], HumanEvalGroup]  # (system, direction value)


def human_eval_aggregate(ratings: Iterable[tuple[str, str, int]]) -> HumanEvalReport:
    """Group (system, direction, score) triples into means and acceptance.

    Mean is rounded half-up to 1 decimal, acceptance (share of scores >= 3)
    half-up to integer percent.
    """
    buckets: dict[tuple[str, str], list[int]] = {}
    for system, direction, score in ratings:
        if not isinstance(score, int) or not 1 <= score <= 5:
            raise ValueError(f"rating must be an integer 1..5, got {score!r}")
        buckets.setdefault((system, direction), []).append(score)

    groups = {}
    for key, scores in buckets.items():
        if not scores:
            log.warning("no ratings for %s; group omitted", key)
            continue
        mean = round_half_up(sum(scores) / len(scores), 1)
        accepted = sum(1 for s in scores if s >= 3)
        rate = int(round_half_up(100.0 * accepted / len(scores)))
        groups[key] = HumanEvalGroup(mean_score=mean, acceptance_rate=rate,
                                     n_ratings=len(scores))
    return HumanEvalReport(groups=groups)


# --- rendering -------------------------------------------------------------------------

def fmt_score(value: float) -> str:
    return f"{round_half_up(value, 2):.2f}"


def _comparison_grid(table: ComparisonTable, measure: str) -> list[list[str]]:
    header = ["System"] + [d.value for d in table.directions]
    grid = [header]
    for system in table.systems:
        row = [system]
        for d in table.directions:
            cell = table.cells.get((system, d))
            if cell is None:
                row.append(ABSENT)
            else:
                row.append(fmt_score(cell.bleu if measure == "bleu" else cell.chrf))
        grid.append(row)
    return grid


def _breakdown_grid(breakdown: SourceBreakdown) -> list[list[str]]:
    grid = [["Source", "BLEU", "ChrF++"]]
    named = [k for k in breakdown.rows if k != "All"]
    for key in sorted(named):
        cell = breakdown.rows[key]
        grid.append([key, fmt_score(cell.bleu), fmt_score(cell.chrf)])
    all_cell = breakdown.rows["All"]
    grid.append(["All", fmt_score(all_cell.bleu), fmt_score(all_cell.chrf)])
    return grid


def _human_grid(report: HumanEvalReport) -> list[list[str]]:
    grid = [["System", "Direction", "Mean", "Acceptance %", "N"]]
    for (system, direction), group in sorted(report.groups.items()):
        grid.append([system, direction, f"{group.mean_score:.1f}",
                     str(group.acceptance_rate), str(group.n_ratings)])
    return grid


def _grids_for(report) -> dict[str, list[list[str]]]:
    if isinstance(report, ComparisonTable):
        return {"bleu": _comparison_grid(report, "bleu"),
                "chrf": _comparison_grid(report, "chrf")}
    if isinstance(report, SourceBreakdown):
        return {"by_source": _breakdown_grid(report)}
    if isinstance(report, HumanEvalReport):
        return {"human_eval": _human_grid(report)}
    raise TypeError(f"cannot render {type(report).__name__}")


def _to_json_obj(report) -> dict:
    if isinstance(report, ComparisonTable):
        return {
            "kind": "comparison",
            "systems": list(report.systems),
            "directions": [d.value for d in report.directions],
            "cells": {
                f"{system}|{d.value}": {"bleu": cell.bleu, "chrf": cell.chrf}
                for (system, d), cell in sorted(
                    report.cells.items(), key=lambda kv: (kv[0][0], kv[0][1].value))
            },
        }
    if isinstance(report, SourceBreakdown):
        return {
            "kind": "by_source",
            "system": report.system_name,
            "direction": report.direction.value,
            "rows": {key: {"bleu": cell.bleu, "chrf": cell.chrf}
                     for key, cell in sorted(report.rows.items())},
        }
    if isinstance(report, HumanEvalReport):
        return {
            "kind": "human_eval",
            "groups": {
                f"{system}|{direction}": {
                    "mean_score": group.mean_score,
                    "acceptance_rate": group.acceptance_rate,
                    "n_ratings": group.n_ratings,
                }
                for (system, direction), group in sorted(report.groups.items())
            },
        }
    raise TypeError(f"cannot render {type(report).__name__}")


def _markdown_table(grid: list[list[str]]) -> str:
    header, *rows = grid
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(" --- " for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines)


def render(report, format: str = "markdown") -> str:
    """Serialize a report deterministically as markdown, csv, or json."""
    if format == "json":
        return json.dumps(_to_json_obj(report), ensure_ascii=False, indent=2,
                          sort_keys=True) + "\n"
    grids = _grids_for(report)
    if format == "markdown":
        parts = []
        for name, grid in grids.items():
            parts.append(f"### {name}\n\n" + _markdown_table(grid))
        return "\n\n".join(parts) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for name, grid in grids.items():
            writer.writerow([f"# {name}"])
            writer.writerows(grid)
        return buf.getvalue()
    raise ValueError(f"unknown format {format!r}")
