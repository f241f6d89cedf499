"""Cooperative lane-change control: CHDVs open a gap so a CAV can merge.

Subpackages follow the pipeline: scenario construction -> CAV trajectory
planning -> CHDV MPC (prediction + QP) -> closed-loop simulation -> Monte
Carlo sweeps.
"""

__version__ = "0.1.0"

from .model import (CooperationLevel, SafetyParams, VehicleRole, VehicleState,
                    disc_clearance, initial_headway)
from .scenario import Scenario, build_scenario, coop_assignment

__all__ = [
    "CooperationLevel", "SafetyParams", "VehicleRole", "VehicleState",
    "disc_clearance", "initial_headway",
    "Scenario", "build_scenario", "coop_assignment",
    "__version__",
]
