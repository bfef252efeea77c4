"""Scenario files, batch runs and their on-disk artifacts."""
from .export import export, verify
from .runner import RunRecord, RunSummary, execute_run, run_batch, run_passes, verdict
from .scenario import (
    ControllerConfig,
    Scenario,
    find_scenario,
    load_raw,
    load_scenario,
    parse_scenario,
    resolve_controller,
    shipped_scenarios,
)

__all__ = [
    "ControllerConfig",
    "RunRecord",
    "RunSummary",
    "Scenario",
    "execute_run",
    "export",
    "find_scenario",
    "load_raw",
    "load_scenario",
    "parse_scenario",
    "resolve_controller",
    "run_batch",
    "run_passes",
    "shipped_scenarios",
    "verdict",
    "verify",
]
