"""Simulation, estimation and learning stack for a wire-driven monopedal hopper."""

from .dynamics import ContactReport, NonFiniteState, RobotState, SimConfig, Simulator

__all__ = [
    "ContactReport",
    "NonFiniteState",
    "RobotState",
    "SimConfig",
    "Simulator",
]
