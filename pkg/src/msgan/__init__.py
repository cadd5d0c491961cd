"""Learned configuration samplers for constrained planar manipulators.

A conditional GAN ensemble proposes joint configurations near a
constraint manifold; those seeds speed up projection, numerical IK and a
constrained RRT.
"""

from .exceptions import (ConfigError, FormatError, InfeasibleScenario, InvalidArgument, InvalidModel, InvalidStart,
                         MsganError, NoGoalFound, NumericalFailure, TrainingDiverged)
from .kinematics import Box, Circle, PlanarChain, World
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Box", "Circle", "ConfigError", "FormatError", "InfeasibleScenario", "InvalidArgument", "InvalidModel",
    "InvalidStart", "MsganError", "NoGoalFound", "NumericalFailure", "PlanarChain", "Scenario", "TrainingDiverged",
    "World", "load_scenario",
]
