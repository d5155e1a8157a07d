"""Resonant piezoelectric vibration energy harvester toolkit."""

from .harvester import (
    DEFAULT_Q_FACTOR,
    PPA4011,
    HarvesterParams,
    max_power,
    open_circuit_voltage,
    optimal_generator,
    optimal_impedance,
    source_impedance,
)
from .interface import TABLE1, ControllerParams, EmulatedLoad
from .loads import ParallelImpedance, VoltageGenerator
from .transient import AccelProfile, SimConfig, SimResult

__all__ = [
    "DEFAULT_Q_FACTOR",
    "PPA4011",
    "TABLE1",
    "AccelProfile",
    "ControllerParams",
    "EmulatedLoad",
    "HarvesterParams",
    "ParallelImpedance",
    "SimConfig",
    "SimResult",
    "VoltageGenerator",
    "max_power",
    "open_circuit_voltage",
    "optimal_generator",
    "optimal_impedance",
    "source_impedance",
]
