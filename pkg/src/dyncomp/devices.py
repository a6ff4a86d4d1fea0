"""Square-law MOSFET parameters with PVT adjustment and mismatch sampling.

All values are SI base units (V, A, F, m, K). Threshold voltages follow a
magnitude convention: ``vth0 > 0`` for both polarities, and a positive
``vsb`` (reverse body bias) raises the threshold for either one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from .errors import BodyBiasError, ConfigError

NMOS = "nmos"
PMOS = "pmos"

MIN_WIDTH = 0.22e-6
MIN_LENGTH = 0.18e-6

# First-order temperature behavior: mobility ~ (T/300K)^-1.5 and the
# threshold magnitude drops 2 mV per kelvin above 300 K.
T_REF = 300.0
MU_TEMP_EXPONENT = -1.5
VTH_TEMP_COEFF = 2.0e-3

# Pelgrom coefficients for a generic 0.18 um process: 5 mV*um for the
# threshold, 1 %*um for the relative transconductance factor.
AVT_DEFAULT = 5.0e-9
ABETA_DEFAULT = 1.0e-8


@dataclass(frozen=True)
class DeviceParams:
    """Square-law parameters of one device polarity."""

    polarity: str
    mu_cox: float               # transconductance factor, A/V^2
    vth0: float                 # zero-bias threshold magnitude, V
    gamma: float = 0.4          # body-effect coefficient, V^0.5
    phi2f: float = 0.7          # surface potential (2*phi_F), V
    cox_area: float = 8.5e-3    # gate capacitance per area, F/m^2

    def __post_init__(self):
        if self.polarity not in (NMOS, PMOS):
            raise ConfigError(f"polarity must be '{NMOS}' or '{PMOS}', got {self.polarity!r}")
        if self.mu_cox <= 0:
            raise ConfigError("mu_cox must be > 0")
        if self.vth0 <= 0:
            raise ConfigError("vth0 must be > 0 (magnitude convention)")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.phi2f <= 0:
            raise ConfigError("phi2f must be > 0")
        if self.cox_area <= 0:
            raise ConfigError("cox_area must be > 0")


DEFAULT_NMOS = DeviceParams(NMOS, mu_cox=300e-6, vth0=0.45)
DEFAULT_PMOS = DeviceParams(PMOS, mu_cox=150e-6, vth0=0.45)


@dataclass(frozen=True)
class TransistorGeom:
    """Width/length of one named transistor."""

    name: str
    w: float
    l: float
    polarity: str

    def __post_init__(self):
        if self.w < MIN_WIDTH - 1e-15:
            raise ConfigError(f"{self.name}: width {self.w} below minimum {MIN_WIDTH}")
        if self.l < MIN_LENGTH - 1e-15:
            raise ConfigError(f"{self.name}: length {self.l} below minimum {MIN_LENGTH}")
        if self.polarity not in (NMOS, PMOS):
            raise ConfigError(f"{self.name}: bad polarity {self.polarity!r}")


@dataclass(frozen=True)
class CornerSpec:
    """Process-corner multipliers and threshold shifts per polarity."""

    name: str
    mu_factor_n: float = 1.0
    mu_factor_p: float = 1.0
    vth_shift_n: float = 0.0
    vth_shift_p: float = 0.0

    def __post_init__(self):
        if self.mu_factor_n <= 0 or self.mu_factor_p <= 0:
            raise ConfigError("corner mobility factors must be > 0")


CORNERS: Mapping[str, CornerSpec] = {
    "TT": CornerSpec("TT"),
    "FF": CornerSpec("FF", 1.1, 1.1, -0.030, -0.030),
    "SS": CornerSpec("SS", 0.9, 0.9, +0.030, +0.030),
    "FS": CornerSpec("FS", 1.1, 0.9, -0.030, +0.030),  # fast NMOS, slow PMOS
    "SF": CornerSpec("SF", 0.9, 1.1, +0.030, -0.030),
}


@dataclass(frozen=True)
class MismatchSample:
    """Per-transistor threshold / relative-beta deviations of one trial.

    Transistors absent from the map carry zero deviation, so
    ``MismatchSample({})`` is the zero sample.
    """

    deltas: Mapping[str, tuple[float, float]]

    def delta_vth(self, name: str) -> float:
        return self.deltas.get(name, (0.0, 0.0))[0]

    def delta_beta(self, name: str) -> float:
        return self.deltas.get(name, (0.0, 0.0))[1]


ZERO_MISMATCH = MismatchSample({})


def beta(geom: TransistorGeom, params: DeviceParams) -> float:
    """Transconductance factor mu_cox * W / L, A/V^2."""
    return params.mu_cox * geom.w / geom.l


def gate_cap(geom: TransistorGeom, params: DeviceParams) -> float:
    """Gate capacitance cox_area * W * L, F."""
    return params.cox_area * geom.w * geom.l


def threshold(params: DeviceParams, vsb: float = 0.0, delta_vth: float = 0.0) -> float:
    """Threshold magnitude with body effect and additive mismatch.

    ``vsb`` is the source-body reverse bias; negative values (forward body
    bias) are accepted down to the model validity limit ``phi2f + vsb > 0``.
    """
    arg = params.phi2f + vsb
    if arg <= 0.0:
        raise BodyBiasError(
            f"body bias vsb={vsb} beyond model validity (phi2f={params.phi2f})")
    return params.vth0 + params.gamma * (math.sqrt(arg) - math.sqrt(params.phi2f)) + delta_vth


def apply_corner(params: DeviceParams, corner: CornerSpec) -> DeviceParams:
    """Scale mu_cox and shift vth0 per the polarity's corner entry."""
    if params.polarity == NMOS:
        factor, shift = corner.mu_factor_n, corner.vth_shift_n
    else:
        factor, shift = corner.mu_factor_p, corner.vth_shift_p
    return replace(params, mu_cox=params.mu_cox * factor, vth0=params.vth0 + shift)


def apply_temperature(params: DeviceParams, t_kelvin: float) -> DeviceParams:
    """First-order temperature adjustment; 300 K is the identity."""
    if t_kelvin <= 0:
        raise ConfigError("t_kelvin must be > 0")
    factor = (t_kelvin / T_REF) ** MU_TEMP_EXPONENT
    shift = -VTH_TEMP_COEFF * (t_kelvin - T_REF)
    return replace(params, mu_cox=params.mu_cox * factor, vth0=params.vth0 + shift)


def sample_mismatch(seed: int, trial: int, geoms: Iterable[TransistorGeom],
                    avt: float = AVT_DEFAULT, abeta: float = ABETA_DEFAULT) -> MismatchSample:
    """Draw one Pelgrom mismatch sample, reproducible from (seed, trial).

    Per transistor, delta_vth ~ N(0, avt/sqrt(W*L)) and the relative beta
    deviation ~ N(0, abeta/sqrt(W*L)), all independent. Transistors are
    processed in sorted-name order so the draw is independent of the
    iteration order of ``geoms``.
    """
    if avt < 0 or abeta < 0:
        raise ConfigError("mismatch coefficients must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))
    deltas = {}
    for geom in sorted(geoms, key=lambda g: g.name):
        root_area = math.sqrt(geom.w * geom.l)
        dvth = float(rng.normal(0.0, avt / root_area))
        dbeta = float(rng.normal(0.0, abeta / root_area))
        deltas[geom.name] = (dvth, dbeta)
    return MismatchSample(deltas)


# Final device dimensions of the modeled circuit (W/L in meters).
_GEOM_TABLE = (
    ("Mp1", 2.00, PMOS), ("Mp2", 0.35, PMOS), ("Mp3", 0.35, PMOS),
    ("Mp4", 1.20, PMOS), ("Mp5", 1.20, PMOS), ("Mp6", 0.50, PMOS),
    ("Mp7", 2.00, PMOS), ("Mp8", 2.00, PMOS), ("Mp9", 0.50, PMOS),
    ("Mpi1", 0.22, PMOS), ("Mpi2", 0.22, PMOS), ("Mpi3", 0.22, PMOS), ("Mpi4", 0.22, PMOS),
    ("Mn1", 0.50, NMOS), ("Mn2", 0.50, NMOS), ("Mn3", 1.00, NMOS),
    ("Mn4", 1.00, NMOS), ("Mn5", 2.00, NMOS), ("Mn6", 2.00, NMOS),
    ("Mni1", 0.22, NMOS), ("Mni2", 0.22, NMOS), ("Mni3", 0.22, NMOS), ("Mni4", 0.22, NMOS),
)


def default_geometry() -> dict[str, TransistorGeom]:
    """Default geometry set, every device at minimum length."""
    return {name: TransistorGeom(name, w * 1e-6, MIN_LENGTH, pol)
            for name, w, pol in _GEOM_TABLE}
