from __future__ import annotations

import functools
from pathlib import Path

import pytest

from threadreach.arg import analyze
from threadreach.bench import corpus_dir, expected_verdict, task_config, task_files
from threadreach.cpa import ExplorationConfig, PropertySpec

CORPUS = corpus_dir()
TASKS = task_files(CORPUS)
TASK_IDS = [t.stem for t in TASKS]

# The running example and its mutant, used across modules.
FIB = (CORPUS / "fib_safe.mtc").read_text()
FIB7 = (CORPUS / "fib_assert7.mtc").read_text()


def source(name: str) -> str:
    return (CORPUS / f"{name}.mtc").read_text()


def is_loop_free(task: Path) -> bool:
    return "while" not in task.read_text()


@functools.lru_cache(maxsize=None)
def run_cached(name: str, config: ExplorationConfig):
    """Analyse a corpus task once per configuration (honouring its pragmas)."""
    task = CORPUS / f"{name}.mtc"
    return analyze(task.read_text(), task_config(task, config))


def verdict_of(name: str, **kw) -> str:
    config = ExplorationConfig(property=PropertySpec.BOTH, **kw)
    return run_cached(name, config)[1].verdict.value


@pytest.fixture(params=TASKS, ids=TASK_IDS)
def task(request) -> Path:
    return request.param


@pytest.fixture
def expected(task) -> str:
    return expected_verdict(task)


# --- acceptance summary --------------------------------------------------------

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): an acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    n, title = marker.args
    passed = call.excinfo is None
    detail = "" if passed else call.excinfo.exconly().splitlines()[0][:160]
    _CRITERIA[n] = [title, passed, detail]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[n]
        line = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
