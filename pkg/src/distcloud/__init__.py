"""Discrete-event simulator of a multi-cloud batch system with streamed input data."""

from .cloud import CloudModel, VmImageSpec, VmState
from .flows import FlowNetwork, LinkSpec, solve_max_min
from .jobs import JobQueue, JobSpec, JobState, SampleSpec
from .kernel import Simulator, to_s, to_us
from .runner import RunSummary, Simulation, run
from .scenario import ScenarioConfig, load_scenario, paper_scenario

__all__ = [
    "CloudModel", "FlowNetwork", "JobQueue", "JobSpec", "JobState", "LinkSpec", "RunSummary",
    "SampleSpec", "ScenarioConfig", "Simulation", "Simulator", "VmImageSpec", "VmState",
    "load_scenario", "paper_scenario", "run", "solve_max_min", "to_s", "to_us",
]
__version__ = "0.1.0"
