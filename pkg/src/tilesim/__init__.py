"""tilesim: deterministic discrete-event simulation of a tiled
multiprocessor protected by thread-level lockstep with checksum voting,
fabric reconfiguration, and mixed-criticality degradation, driven by a
configurable radiation fault injector."""

from .metrics import MetricsSummary, compute_metrics
from .runner import replay_check, run_simulation, sweep
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .simulation import Simulation

__all__ = [
    "MetricsSummary", "Scenario", "ScenarioError", "Simulation",
    "compute_metrics", "load_scenario", "parse_scenario",
    "replay_check", "run_simulation", "sweep",
]

__version__ = "0.1.0"
