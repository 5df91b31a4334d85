"""Corpus benchmark: run every task under a matrix of configurations."""

from __future__ import annotations

import csv
import itertools
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Optional

from threadreach.arg import run_task
from threadreach.cpa import ExplorationConfig, Verdict, WaitlistPolicy

log = logging.getLogger(__name__)

CSV_HEADER = ["task", "config", "verdict", "expected", "popped", "reached", "comparisons", "wall_ms"]

_PRAGMA = re.compile(r"^//@\s*(\w+)\s*:\s*(\S+)\s*$", re.MULTILINE)


def corpus_dir() -> Path:
    """The tasks bundled with the package."""
    return Path(__file__).parent / "corpus"


def task_files(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.mtc"))


def expected_verdict(task: Path) -> Optional[str]:
    sidecar = task.with_suffix(".expect")
    if not sidecar.exists():
        return None
    return sidecar.read_text().split()[0].strip().upper()


def pragmas(task: Path) -> dict:
    """``//@ key: value`` lines; currently only ``domain`` is honoured."""
    return dict(_PRAGMA.findall(task.read_text()))


def task_config(task: Path, base: ExplorationConfig) -> ExplorationConfig:
    """``base`` adjusted by the task's pragmas (e.g. a task needing intervals)."""
    p = pragmas(task)
    if "domain" in p:
        base = replace(base, domain=p["domain"])
    return base


def config_matrix(por=(True, False), partitioning=(True, False),
                  waitlists: Iterable[WaitlistPolicy] = tuple(WaitlistPolicy),
                  **common) -> list[ExplorationConfig]:
    return [
        ExplorationConfig(waitlist=w, partitioning=p, por=r, **common)
        for r, p, w in itertools.product(por, partitioning, waitlists)
    ]


def _run_cell(args):
    task, config = args
    config = task_config(task, config)
    try:
        report, _, _ = run_task(task, config)
        verdict, stats = report.verdict.value, report.stats
        popped, reached, comparisons, wall = stats.popped, stats.reached, stats.comparisons, stats.wall_ms
    except Exception as exc:  # a broken task must not abort the batch
        log.warning("%s under %s failed: %s", task.name, config.name(), exc)
        verdict, popped, reached, comparisons, wall = Verdict.UNKNOWN.value, 0, 0, 0, 0.0
    return {
        "task": task.name,
        "config": config.name(),
        "verdict": verdict,
        "expected": expected_verdict(task) or "",
        "popped": popped,
        "reached": reached,
        "comparisons": comparisons,
        "wall_ms": round(wall, 3),
    }


def bench(directory, configs: list[ExplorationConfig], jobs: int = 1) -> list[dict]:
    cells = [(task, config) for task in task_files(directory) for config in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]


def write_csv(rows: list[dict], out) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def quantiles(rows: list[dict]) -> dict[str, list[float]]:
    """Per configuration, sorted run times of correctly solved tasks."""
    out: dict[str, list[float]] = {}
    for row in rows:
        if row["expected"] and row["verdict"] == row["expected"]:
            out.setdefault(row["config"], []).append(row["wall_ms"])
    return {k: sorted(v) for k, v in out.items()}


def write_quantiles(rows: list[dict], out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["config", "n", "wall_ms"])
    for config, times in sorted(quantiles(rows).items()):
        for n, t in enumerate(times, 1):
            writer.writerow([config, n, t])
