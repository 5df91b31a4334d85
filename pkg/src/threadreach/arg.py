"""Run reports, counterexample replay and DOT export of the reachability graph."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from threadreach.cfa import CfaSet, build_cfa
from threadreach.cpa import (
    CompositeCPA, ExplorationConfig, ReachResult, ReachedSet, StatsRecord, Verdict, reach,
)
from threadreach.domains import make_domain
from threadreach.syntax import Program, parse


@dataclass
class RunReport:
    task: str
    config: ExplorationConfig
    verdict: Verdict
    stats: StatsRecord
    counterexample: Optional[list] = None
    message: str = ""
    diagnostics: list = field(default_factory=list)

    def to_json(self) -> dict:
        cex = None
        if self.counterexample is not None:
            cex = [
                {"thread": str(t), "from": e.source.id, "to": e.target.id, "op": str(e.op)}
                for t, e in self.counterexample
            ]
        return {
            "task": self.task,
            "config": {
                "domain": self.config.domain,
                "por": self.config.por,
                "partitioning": self.config.partitioning,
                "waitlist": self.config.waitlist.value,
                "max_clones": self.config.max_clones,
                "property": self.config.property.value,
            },
            "verdict": self.verdict.value,
            "message": self.message,
            "stats": {
                "popped": self.stats.popped,
                "reached": self.stats.reached,
                "comparisons": self.stats.comparisons,
                "peak_reached": self.stats.peak_reached,
                "wall_ms": round(self.stats.wall_ms, 3),
            },
            "counterexample": cex,
            "diagnostics": list(self.diagnostics),
        }

    def to_text(self) -> str:
        lines = [f"Verdict: {self.verdict.value}"]
        if self.message:
            lines.append(f"Reason: {self.message}")
        s = self.stats
        lines.append(
            f"Stats: popped={s.popped} reached={s.reached} comparisons={s.comparisons} "
            f"wall={s.wall_ms:.1f}ms"
        )
        if self.counterexample is not None:
            lines.append("Counterexample:")
            for t, e in self.counterexample:
                lines.append(f"  {t}: {e.source.id} -> {e.target.id}  {e.op}")
        for d in self.diagnostics:
            lines.append(f"Note: {d}")
        return "\n".join(lines)


@dataclass
class Analysis:
    """A parsed task together with the CPA built for one configuration."""

    program: Program
    cfa: CfaSet
    cpa: CompositeCPA
    config: ExplorationConfig


def prepare(source: str, config: ExplorationConfig) -> Analysis:
    program = parse(source)
    cfa = build_cfa(program, config.max_clones)
    kwargs = {"widening_threshold": config.widening_threshold} if config.domain == "interval" else {}
    domain = make_domain(config.domain, **kwargs)
    cpa = CompositeCPA(program, cfa, domain, por=config.por,
                       prune_errors=not config.property.errors)
    return Analysis(program, cfa, cpa, config)


def analyze(source: str, config: ExplorationConfig) -> tuple[Analysis, ReachResult]:
    analysis = prepare(source, config)
    return analysis, reach(analysis.cpa, config)


def run_task(path, config: ExplorationConfig) -> tuple[RunReport, ReachResult, Analysis]:
    source = Path(path).read_text()
    analysis, result = analyze(source, config)
    report = RunReport(str(path), config, result.verdict, result.stats,
                       result.counterexample, result.message, list(result.diagnostics))
    return report, result, analysis


def replay(cpa: CompositeCPA, counterexample) -> list:
    """Follow ``(thread, edge)`` steps from the initial state; return the visited states.

    Raises ``ValueError`` if a step is not enabled.
    """
    state = cpa.initial()
    states = [state]
    for thread, edge in counterexample:
        for t, e, succ in cpa.transfer(state):
            if t == thread and e == edge:
                state = succ
                break
        else:
            raise ValueError(f"step {thread}: {edge} is not enabled in {state!r}")
        states.append(state)
    return states


# ---------------------------------------------------------------------------
# DOT
# ---------------------------------------------------------------------------


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def state_label(state) -> str:
    label = state.threading.label()
    if state.data is not None:
        label += "\n" + repr(state.data)
    return label


def _canonical(state) -> str:
    t = state.threading
    threads = ";".join(
        f"{tid.name}/{tid.ordinal}/{tid.start}@{loc.id}[{','.join(l.id for l in stack)}]"
        for tid, loc, stack in t.threads
    )
    return f"{threads}|{t.locks}|{state.data!r}"


def arg_to_dot(reached: ReachedSet) -> str:
    """Deterministic DOT rendering: nodes ordered by label, then by full state."""
    nodes = sorted(reached.nodes, key=lambda n: (state_label(n.state), _canonical(n.state)))
    index = {n.id: i for i, n in enumerate(nodes)}
    lines = ["digraph arg {", "  node [shape=box];"]
    for i, n in enumerate(nodes):
        attrs = ""
        if any(loc.is_error for _, loc, _ in n.state.threading.threads):
            attrs = " color=red"
        lines.append(f'  n{i} [label="{_escape(state_label(n.state))}"{attrs}];')
    edges = []
    for parent, thread, edge, child, style in (
        [(p, t, e, c, "") for p, t, e, c in reached.arg_edges]
        + [(p, t, e, c, " style=dashed") for p, t, e, c in reached.cover_edges]
    ):
        edges.append((index[parent], index[child], f"{thread}: {edge.op}", style))
    for src, dst, label, style in sorted(set(edges)):
        lines.append(f'  n{src} -> n{dst} [label="{_escape(label)}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_arg_dot(reached: ReachedSet, out_path) -> None:
    Path(out_path).write_text(arg_to_dot(reached), encoding="utf-8")


def dump_json(report: RunReport) -> str:
    return json.dumps(report.to_json(), indent=2, ensure_ascii=False)
