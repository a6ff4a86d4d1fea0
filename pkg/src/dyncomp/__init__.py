"""Behavioral simulator and design toolkit for early-shutdown dynamic comparators."""

__version__ = "0.1.0"

from .devices import (CORNERS, DEFAULT_NMOS, DEFAULT_PMOS, DeviceParams,
                      CornerSpec, MismatchSample, TransistorGeom, ZERO_MISMATCH,
                      apply_corner, apply_temperature, beta, default_geometry,
                      gate_cap, sample_mismatch, threshold)
from .engine import (BodyBias, ComparatorConfig, ComparatorEngine,
                     ComparisonResult, EnergyBreakdown, NodeCaps,
                     OperatingPoint, typical_op)

__all__ = [
    "__version__",
    "CORNERS", "DEFAULT_NMOS", "DEFAULT_PMOS", "DeviceParams", "CornerSpec",
    "MismatchSample", "TransistorGeom", "ZERO_MISMATCH",
    "apply_corner", "apply_temperature", "beta", "default_geometry",
    "gate_cap", "sample_mismatch", "threshold",
    "BodyBias", "ComparatorConfig", "ComparatorEngine", "ComparisonResult",
    "EnergyBreakdown", "NodeCaps", "OperatingPoint", "typical_op",
]
