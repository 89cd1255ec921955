"""Robust H-infinity current control of a single-phase LCL grid-feeding inverter."""
from .config import Config, load_config
from .plant import PlantParams, build_plant, resonant_frequency
from .pipeline import run_design
from .simulator import Scenario, load_scenario, run_scenario

__all__ = ["Config", "PlantParams", "Scenario", "build_plant", "load_config", "load_scenario",
           "resonant_frequency", "run_design", "run_scenario"]
__version__ = "0.1.0"
