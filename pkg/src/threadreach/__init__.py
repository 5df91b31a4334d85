"""threadreach: an explicit-state model checker for multi-threaded .mtc programs."""

from threadreach.arg import RunReport, analyze, replay, run_task
from threadreach.cpa import ExplorationConfig, PropertySpec, Verdict, WaitlistPolicy, reach
from threadreach.syntax import parse

__all__ = [
    "ExplorationConfig", "PropertySpec", "RunReport", "Verdict", "WaitlistPolicy",
    "analyze", "parse", "reach", "replay", "run_task",
]
__version__ = "0.1.0"
