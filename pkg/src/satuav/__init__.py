"""Energy-efficient power allocation for satellite-assisted UAV networks."""

from .scenario import Mode, ScenarioConfig, build_geometry, preset, scenario_streams
from .channel import network_statistics
from .moments import PrecodingMoments, assemble_moments
from .performance import PowerAllocation, energy_efficiency
from .allocation import InfeasibleScenario, epa_allocation, fpa_allocation, random_search_init
from .sca import sca_solve

__all__ = [
    "Mode", "ScenarioConfig", "build_geometry", "preset", "scenario_streams",
    "network_statistics", "PrecodingMoments", "assemble_moments",
    "PowerAllocation", "energy_efficiency", "InfeasibleScenario",
    "epa_allocation", "fpa_allocation", "random_search_init", "sca_solve",
]
