"""Single-cycle behavioral model of the early-shutdown double-tail comparator.

The preamplifier is treated as a constant-current integrator: both output
nodes ramp linearly at I/C until they cross the NMOS threshold of the stage
they drive. The side crossing first fixes the decision, the latch adds an
inverter-style regeneration delay, and the shutdown buffer chain on the
leading side sets the instant the tail current is cut.

Decision convention: a positive differential input drives the inverting-side
preamp output high first, the positive latch output ends high and the
decision is +1. The input device on that inverting side is Mp4 (gate at
vcm - vid/2, body ``vb_minus``); Mp5 is its mirror (gate at vcm + vid/2,
body ``vb_plus``). Lowering a body voltage below the supply forward-biases
that device and speeds its side up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

from . import devices as dev
from .devices import (DeviceParams, MismatchSample, TransistorGeom, ZERO_MISMATCH,
                      CORNERS, CornerSpec, beta, gate_cap, threshold)
from .errors import ConfigError, NoDecisionError, OverdriveError

# Geometry pairs that must stay symmetric for the two half-circuits.
_SYMMETRIC_PAIRS = (
    ("Mn1", "Mn2"), ("Mn3", "Mn4"), ("Mn5", "Mn6"), ("Mni2", "Mni3"),
    ("Mni1", "Mni4"), ("Mp2", "Mp3"), ("Mp4", "Mp5"), ("Mp6", "Mp9"),
    ("Mp7", "Mp8"), ("Mpi1", "Mpi4"), ("Mpi2", "Mpi3"),
)

_EXTRA_NODES = ("out", "pi", "p3", "latch")


@dataclass(frozen=True)
class ComparatorConfig:
    """Static description of one comparator instance."""

    geoms: Mapping[str, TransistorGeom] = field(default_factory=dev.default_geometry)
    nmos: DeviceParams = dev.DEFAULT_NMOS
    pmos: DeviceParams = dev.DEFAULT_PMOS
    vdd: float = 1.8
    freq: float = 333e6
    alpha: float = 1.5                  # shutdown-switch turn-off multiplier
    extra_load: Mapping[str, float] = field(default_factory=dict)
    early_shutdown_enabled: bool = True
    tail_derating: float = 0.02         # series on-switch loss of tail current
    tie_break: int = +1

    def __post_init__(self):
        if self.vdd <= 0:
            raise ConfigError("vdd must be > 0")
        if self.freq <= 0:
            raise ConfigError("freq must be > 0")
        if self.alpha < 1.0:
            raise ConfigError("alpha must be >= 1")
        if not 0.0 <= self.tail_derating < 1.0:
            raise ConfigError("tail_derating must be in [0, 1)")
        if self.tie_break not in (+1, -1):
            raise ConfigError("tie_break must be +1 or -1")
        for node in self.extra_load:
            if node not in _EXTRA_NODES:
                raise ConfigError(f"unknown extra_load node {node!r}; expected one of {_EXTRA_NODES}")

    @property
    def window(self) -> float:
        """Comparison window: half the clock period (50% duty)."""
        return 0.5 / self.freq


@dataclass(frozen=True)
class OperatingPoint:
    """Inputs and environment of one comparison."""

    vid: float = 50e-3                  # differential input, V (signed)
    vcm: float = 0.9                    # common-mode input, V
    corner: CornerSpec = CORNERS["TT"]
    t_kelvin: float = 300.15
    vdd_override: float | None = None


@dataclass(frozen=True)
class BodyBias:
    """Tuned body voltages of the input pair."""

    vb_plus: float
    vb_minus: float


@dataclass(frozen=True)
class NodeCaps:
    """Lumped node capacitances derived from the geometry set."""

    c_out: float        # preamp output: latch NMOS gate + buffer NMOS gate
    c_pi: float         # first buffer stage output: gate of the buffer PMOS
    c_p3: float         # second buffer stage output: one parallel tail-switch gate
    c_latch: float      # latch output: cross-coupled PMOS gate + latch NMOS gate


@dataclass(frozen=True)
class EnergyBreakdown:
    e_preamp: float
    e_latch: float
    e_ddvb: float       # shutdown buffer chain overhead (both sides)
    e_reset: float
    total: float


@dataclass(frozen=True)
class ComparisonResult:
    decision: int               # +1 -> Vo+ ends high, -1 -> Vo- ends high
    t0: float                   # leading preamp output crossing the latch threshold, s
    t1: float                   # leading preamp output crossing the buffer threshold, s
    t_esd: float                # tail cutoff instant of the shutdown chain, s
    t_dm: float                 # overall decision delay t0 + latch regeneration, s
    shutdown_occurred: bool
    late: bool                  # decision completes after the comparison window
    energy: EnergyBreakdown | None = None


def _require(geoms: Mapping[str, TransistorGeom], name: str) -> TransistorGeom:
    try:
        return geoms[name]
    except KeyError:
        raise ConfigError(f"geometry set is missing transistor {name!r}") from None


def inverter_delay(c_load: float, beta_eff: float, vdd: float) -> float:
    """Dynamic single-input inverter propagation delay 1.6*C/(beta*Vdd)."""
    return 1.6 * c_load / (beta_eff * vdd)


class ComparatorEngine:
    """Immutable evaluation engine for one ComparatorConfig.

    Every method is a pure function of its arguments, so engines can be
    shared freely across threads and Monte Carlo trials.
    """

    def __init__(self, config: ComparatorConfig):
        self.config = config
        for a, b in _SYMMETRIC_PAIRS:
            ga, gb = _require(config.geoms, a), _require(config.geoms, b)
            if ga.w != gb.w or ga.l != gb.l:
                raise ConfigError(f"asymmetric pair {a}/{b}: {ga.w}x{ga.l} vs {gb.w}x{gb.l}")
        self._caps = self._node_caps()

    # -- static structure ---------------------------------------------------

    def _node_caps(self) -> NodeCaps:
        cfg = self.config
        extra = cfg.extra_load
        g = lambda name: _require(cfg.geoms, name)
        cap = lambda name: gate_cap(g(name), cfg.nmos if g(name).polarity == dev.NMOS else cfg.pmos)
        c_out = cap("Mn3") + cap("Mni2") + extra.get("out", 0.0)
        c_pi = cap("Mpi1") + extra.get("pi", 0.0)
        # The two parallel tail switches split between the two buffer chains:
        # each chain drives one switch gate.
        c_p3 = 0.5 * (cap("Mp2") + cap("Mp3")) + extra.get("p3", 0.0)
        c_latch = cap("Mp8") + cap("Mn6") + extra.get("latch", 0.0)
        return NodeCaps(c_out=c_out, c_pi=c_pi, c_p3=c_p3, c_latch=c_latch)

    def node_caps(self) -> NodeCaps:
        return self._caps

    # -- operating-point resolution ------------------------------------------

    def supply(self, op: OperatingPoint) -> float:
        return self.config.vdd if op.vdd_override is None else op.vdd_override

    def params_at(self, op: OperatingPoint) -> tuple[DeviceParams, DeviceParams]:
        """(nmos, pmos) parameters after corner and temperature adjustment."""
        n = dev.apply_temperature(dev.apply_corner(self.config.nmos, op.corner), op.t_kelvin)
        p = dev.apply_temperature(dev.apply_corner(self.config.pmos, op.corner), op.t_kelvin)
        return n, p

    def _validate_op(self, op: OperatingPoint, vdd: float):
        if not 0.0 <= op.vcm <= vdd:
            raise ConfigError(f"vcm={op.vcm} outside [0, vdd={vdd}]")
        if abs(op.vid) >= vdd:
            raise ConfigError(f"|vid|={abs(op.vid)} must be below vdd={vdd}")

    # -- currents -------------------------------------------------------------

    def tail_current(self, op: OperatingPoint, mismatch: MismatchSample = ZERO_MISMATCH) -> float:
        """Tail current before shutdown, including the on-switch derating."""
        vdd = self.supply(op)
        _, pparams = self.params_at(op)
        g = _require(self.config.geoms, "Mp1")
        b = beta(g, pparams) * (1.0 + mismatch.delta_beta("Mp1"))
        vth = threshold(pparams, 0.0, mismatch.delta_vth("Mp1"))
        ov = vdd - vth
        if ov <= 0.0:
            return 0.0
        return 0.5 * b * ov * ov * (1.0 - self.config.tail_derating)

    def branch_currents(self, op: OperatingPoint, vth_minus: float, vth_plus: float,
                        mismatch: MismatchSample = ZERO_MISMATCH) -> tuple[float, float]:
        """(I_minus, I_plus) of the input pair, clamped by the tail current.

        ``vth_minus``/``vth_plus`` are the per-side input-device thresholds
        already including mismatch and body shift.
        """
        vdd = self.supply(op)
        _, pparams = self.params_at(op)
        b4 = beta(_require(self.config.geoms, "Mp4"), pparams) * (1.0 + mismatch.delta_beta("Mp4"))
        b5 = beta(_require(self.config.geoms, "Mp5"), pparams) * (1.0 + mismatch.delta_beta("Mp5"))
        ov_minus = vdd - (op.vcm - op.vid / 2.0) - vth_minus
        ov_plus = vdd - (op.vcm + op.vid / 2.0) - vth_plus
        i_minus = 0.5 * b4 * ov_minus * ov_minus if ov_minus > 0.0 else 0.0
        i_plus = 0.5 * b5 * ov_plus * ov_plus if ov_plus > 0.0 else 0.0
        i_tail = self.tail_current(op, mismatch)
        total = i_minus + i_plus
        if total > i_tail:
            scale = i_tail / total
            i_minus *= scale
            i_plus *= scale
        return i_minus, i_plus

    # -- analytic timing (nominal devices, leading side) ----------------------

    def preamp_rise_time(self, op: OperatingPoint) -> float:
        """Leading preamp output ramp time up to the NMOS threshold."""
        vdd = self.supply(op)
        nparams, pparams = self.params_at(op)
        v_gate = op.vcm - abs(op.vid) / 2.0
        ov = vdd - v_gate - pparams.vth0
        if ov <= 0.0:
            raise OverdriveError(f"input overdrive {ov} <= 0 at vcm={op.vcm}, vid={op.vid}")
        b = beta(_require(self.config.geoms, "Mp4"), pparams)
        return 2.0 * nparams.vth0 * self._caps.c_out / (b * ov * ov)

    def buffer_n_delay(self, op: OperatingPoint) -> float:
        """First shutdown-buffer stage (NMOS pulldown) delay."""
        nparams, _ = self.params_at(op)
        b = beta(_require(self.config.geoms, "Mni2"), nparams)
        return inverter_delay(self._caps.c_pi, b, self.supply(op))

    def buffer_p_delay(self, op: OperatingPoint) -> float:
        """Second shutdown-buffer stage delay times the switch turn-off margin."""
        _, pparams = self.params_at(op)
        b = beta(_require(self.config.geoms, "Mpi4"), pparams)
        return self.config.alpha * inverter_delay(self._caps.c_p3, b, self.supply(op))

    def shutdown_delay(self, op: OperatingPoint) -> float:
        """Total delay from comparison start to tail cutoff."""
        return self.preamp_rise_time(op) + self.buffer_n_delay(op) + self.buffer_p_delay(op)

    def latch_delay(self, op: OperatingPoint) -> float:
        """Latch regeneration delay; independent of the inputs."""
        nparams, _ = self.params_at(op)
        b = beta(_require(self.config.geoms, "Mn3"), nparams)
        return inverter_delay(self._caps.c_latch, b, self.supply(op))

    def decision_delay(self, op: OperatingPoint) -> float:
        """Overall comparator delay: preamp ramp plus latch regeneration."""
        return self.preamp_rise_time(op) + self.latch_delay(op)

    # -- full cycle -------------------------------------------------------------

    def simulate(self, op: OperatingPoint, mismatch: MismatchSample = ZERO_MISMATCH,
                 body: BodyBias | None = None) -> ComparisonResult:
        """Run one precharge + comparison cycle and return the full result.

        Late decisions (t_dm beyond the window) are flagged, not raised, so
        sweeps near the common-mode limit can complete and report the stall.
        """
        cfg = self.config
        vdd = self.supply(op)
        self._validate_op(op, vdd)
        if body is None:
            body = BodyBias(vdd, vdd)
        if not (0.0 <= body.vb_plus <= vdd and 0.0 <= body.vb_minus <= vdd):
            raise ConfigError(f"body voltages {body} outside [0, vdd={vdd}]")

        nparams, pparams = self.params_at(op)
        caps = self._caps
        geoms = cfg.geoms

        vth_minus = threshold(pparams, body.vb_minus - vdd, mismatch.delta_vth("Mp4"))
        vth_plus = threshold(pparams, body.vb_plus - vdd, mismatch.delta_vth("Mp5"))
        i_minus, i_plus = self.branch_currents(op, vth_minus, vth_plus, mismatch)

        def crossing(i_side: float, vth_sense: float) -> float:
            if i_side <= 0.0 or vth_sense <= 0.0:
                return math.inf
            return vth_sense * caps.c_out / i_side

        t0_minus = crossing(i_minus, threshold(nparams, 0.0, mismatch.delta_vth("Mn3")))
        t0_plus = crossing(i_plus, threshold(nparams, 0.0, mismatch.delta_vth("Mn4")))

        if t0_minus < t0_plus:
            decision = +1
        elif t0_plus < t0_minus:
            decision = -1
        else:
            decision = cfg.tie_break
        lead_minus = decision > 0

        t0 = t0_minus if lead_minus else t0_plus
        window = cfg.window
        if not math.isfinite(t0) or t0 > window:
            raise NoDecisionError(
                f"no preamp crossing within the {window:.3e} s window (t0={t0:.3e})")

        # Shutdown chain on the leading side.
        sense = "Mni2" if lead_minus else "Mni3"
        buf_p = "Mpi1" if lead_minus else "Mpi4"
        i_lead = i_minus if lead_minus else i_plus
        t1 = crossing(i_lead, threshold(nparams, 0.0, mismatch.delta_vth(sense)))
        b_ni = beta(_require(geoms, sense), nparams) * (1.0 + mismatch.delta_beta(sense))
        b_pi = beta(_require(geoms, buf_p), pparams) * (1.0 + mismatch.delta_beta(buf_p))
        t_esd = t1 + inverter_delay(caps.c_pi, b_ni, vdd) \
            + cfg.alpha * inverter_delay(caps.c_p3, b_pi, vdd)

        latch_n = "Mn3" if lead_minus else "Mn4"
        b_n3 = beta(_require(geoms, latch_n), nparams) * (1.0 + mismatch.delta_beta(latch_n))
        t_dm = t0 + inverter_delay(caps.c_latch, b_n3, vdd)

        # Designed regime: the chain fires only after the latch crossing, so
        # cutting the tail never blocks the decision. Flag the stall if a
        # configuration ever inverts the race.
        late = t_dm > window or t_esd < t0
        shutdown_occurred = cfg.early_shutdown_enabled and t_esd <= window

        result = ComparisonResult(decision=decision, t0=t0, t1=t1, t_esd=t_esd,
                                  t_dm=t_dm, shutdown_occurred=shutdown_occurred,
                                  late=late)
        return replace(result, energy=self.energy_per_comparison(result, op, mismatch))

    def energy_per_comparison(self, result: ComparisonResult, op: OperatingPoint,
                              mismatch: MismatchSample = ZERO_MISMATCH) -> EnergyBreakdown:
        """Supply energy of one full cycle, split by subcircuit.

        Without shutdown the preamp tail conducts for the whole comparison
        window; with shutdown it stops at t_esd. The buffer-chain overhead is
        only spent when the chain actually fires.
        """
        cfg = self.config
        vdd = self.supply(op)
        caps = self._caps
        window = cfg.window
        i_tail = self.tail_current(op, mismatch)

        t_eff = result.t_esd if result.shutdown_occurred else window
        e_preamp = vdd * i_tail * min(t_eff, window)
        e_latch = caps.c_latch * vdd * vdd
        e_ddvb = 2.0 * (caps.c_pi + caps.c_p3) * vdd * vdd if result.shutdown_occurred else 0.0
        e_reset = 2.0 * caps.c_out * vdd * vdd
        total = e_preamp + e_latch + e_ddvb + e_reset
        return EnergyBreakdown(e_preamp=e_preamp, e_latch=e_latch, e_ddvb=e_ddvb,
                               e_reset=e_reset, total=total)


def typical_op(config: ComparatorConfig, vid: float = 50e-3, **overrides) -> OperatingPoint:
    """Operating point at the standard conditions: vcm = vdd/2, 27 C, TT."""
    return OperatingPoint(vid=vid, vcm=config.vdd / 2.0, **overrides)
