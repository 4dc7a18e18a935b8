"""Thermomechanical phase transitions with voids in shape memory alloys, solved on a 1D bar."""

from .constitutive import MaterialParams
from .scenario import Scenario, load_scenario, parse_scenario
from .solver import SolverConfig, run_simulation

__all__ = ["MaterialParams", "Scenario", "SolverConfig", "load_scenario", "parse_scenario", "run_simulation"]
__version__ = "0.1.0"
