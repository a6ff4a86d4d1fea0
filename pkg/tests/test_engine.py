"""Comparator engine: node caps, currents, timing, full-cycle simulation."""
import math
from dataclasses import replace

import numpy as np
import pytest

from dyncomp.devices import (CORNERS, DeviceParams, MismatchSample,
                             TransistorGeom, default_geometry, sample_mismatch)
from dyncomp.engine import (BodyBias, ComparatorConfig, ComparatorEngine,
                            OperatingPoint, typical_op)
from dyncomp.errors import ConfigError, NoDecisionError, OverdriveError

# Reference temperature keeps the worked numbers free of temperature factors.
OP0 = OperatingPoint(vid=50e-3, vcm=0.9, t_kelvin=300.0)


@pytest.fixture(scope="module")
def engine():
    return ComparatorEngine(ComparatorConfig())


def rel_err(a, b):
    return abs(a - b) / abs(b)


class TestNodeCaps:
    def test_default_values(self, engine):
        caps = engine.node_caps()
        cox = 8.5e-3
        assert rel_err(caps.c_out, cox * (1e-6 + 0.22e-6) * 0.18e-6) < 1e-12
        assert rel_err(caps.c_pi, cox * 0.22e-6 * 0.18e-6) < 1e-12
        assert rel_err(caps.c_p3, cox * 0.35e-6 * 0.18e-6) < 1e-12
        assert rel_err(caps.c_latch, cox * (2e-6 + 2e-6) * 0.18e-6) < 1e-12

    def test_extra_load_additive(self, engine):
        extra = {"out": 1e-15, "pi": 1e-15, "p3": 1e-15, "latch": 1e-15}
        caps2 = ComparatorEngine(ComparatorConfig(extra_load=extra)).node_caps()
        caps = engine.node_caps()
        assert caps2.c_out == caps.c_out + 1e-15
        assert caps2.c_pi == caps.c_pi + 1e-15
        assert caps2.c_p3 == caps.c_p3 + 1e-15
        assert caps2.c_latch == caps.c_latch + 1e-15

    def test_structural_independence(self, engine):
        geoms = default_geometry()
        for name in ("Mni2", "Mni3"):
            geoms[name] = replace(geoms[name], w=0.44e-6)
        caps2 = ComparatorEngine(ComparatorConfig(geoms=geoms)).node_caps()
        caps = engine.node_caps()
        assert caps2.c_out > caps.c_out
        assert caps2.c_latch == caps.c_latch

    def test_missing_transistor(self):
        geoms = default_geometry()
        del geoms["Mn3"]
        with pytest.raises(ConfigError, match="Mn3"):
            ComparatorEngine(ComparatorConfig(geoms=geoms))

    def test_asymmetric_pair_rejected(self):
        geoms = default_geometry()
        geoms["Mp4"] = replace(geoms["Mp4"], w=1.4e-6)
        with pytest.raises(ConfigError, match="Mp4"):
            ComparatorEngine(ComparatorConfig(geoms=geoms))


class TestCurrents:
    def test_tail_value_before_derating(self):
        eng = ComparatorEngine(ComparatorConfig(tail_derating=0.0))
        expected = 0.5 * (150e-6 * 2e-6 / 0.18e-6) * (1.8 - 0.45) ** 2
        assert rel_err(eng.tail_current(OP0), expected) < 1e-12

    def test_derating_scales_tail(self, engine):
        base = ComparatorEngine(ComparatorConfig(tail_derating=0.0)).tail_current(OP0)
        assert engine.tail_current(OP0) == base * 0.98

    def test_cutoff_when_supply_below_threshold(self, engine):
        op = OperatingPoint(vid=0.0, vcm=0.2, t_kelvin=300.0, vdd_override=0.4)
        assert engine.tail_current(op) == 0.0

    def test_shutdown_flag_does_not_change_tail(self, engine):
        other = ComparatorEngine(ComparatorConfig(early_shutdown_enabled=False))
        assert engine.tail_current(OP0) == other.tail_current(OP0)

    def test_symmetric_at_zero_input(self, engine):
        op = replace(OP0, vid=0.0)
        i_minus, i_plus = engine.branch_currents(op, 0.45, 0.45)
        assert i_minus == i_plus

    def test_vi_minus_side_leads_for_positive_vid(self, engine):
        i_minus, i_plus = engine.branch_currents(OP0, 0.45, 0.45)
        assert i_minus > i_plus

    def test_cutoff_clamp(self, engine):
        op = OperatingPoint(vid=0.2, vcm=1.3, t_kelvin=300.0)
        i_minus, i_plus = engine.branch_currents(op, 0.45, 0.45)
        # lagging gate at 1.4 V leaves no overdrive
        assert i_plus == 0.0
        assert i_minus > 0.0

    def test_tail_limits_total(self, engine):
        op = OperatingPoint(vid=50e-3, vcm=0.05, t_kelvin=300.0)
        i_minus, i_plus = engine.branch_currents(op, 0.45, 0.45)
        assert i_minus + i_plus == pytest.approx(engine.tail_current(op), rel=1e-12)


class TestTimingOps:
    """Worked values computed by independent literal arithmetic."""

    def test_preamp_rise_time(self, engine):
        beta_in = 150e-6 * 1.2e-6 / 0.18e-6
        c_out = 8.5e-3 * 1.22e-6 * 0.18e-6
        expected = 2 * 0.45 * c_out / (beta_in * (1.8 - 0.875 - 0.45) ** 2)
        assert rel_err(engine.preamp_rise_time(OP0), expected) < 1e-12

    def test_buffer_n_delay(self, engine):
        expected = 1.6 * (8.5e-3 * 0.22e-6 * 0.18e-6) / ((300e-6 * 0.22 / 0.18) * 1.8)
        assert rel_err(engine.buffer_n_delay(OP0), expected) < 1e-12

    def test_buffer_p_delay_and_alpha(self):
        c_p3 = 8.5e-3 * 0.35e-6 * 0.18e-6
        beta_pi = 150e-6 * 0.22 / 0.18
        for alpha in (1.0, 1.5, 2.5):
            eng = ComparatorEngine(ComparatorConfig(alpha=alpha))
            expected = alpha * 1.6 * c_p3 / (beta_pi * 1.8)
            assert rel_err(eng.buffer_p_delay(OP0), expected) < 1e-12

    def test_latch_delay(self, engine):
        expected = 1.6 * (8.5e-3 * 4e-6 * 0.18e-6) / ((300e-6 * 1 / 0.18) * 1.8)
        assert rel_err(engine.latch_delay(OP0), expected) < 1e-12
        # independent of the inputs
        assert engine.latch_delay(replace(OP0, vid=1e-3, vcm=0.3)) == engine.latch_delay(OP0)

    def test_shutdown_delay_is_sum(self, engine):
        total = (engine.preamp_rise_time(OP0) + engine.buffer_n_delay(OP0)
                 + engine.buffer_p_delay(OP0))
        assert rel_err(engine.shutdown_delay(OP0), total) < 1e-12

    def test_decision_delay_is_sum(self, engine):
        total = engine.preamp_rise_time(OP0) + engine.latch_delay(OP0)
        assert rel_err(engine.decision_delay(OP0), total) < 1e-12

    def test_rise_time_monotone_in_vid(self, engine):
        times = [engine.preamp_rise_time(replace(OP0, vid=v))
                 for v in (1e-3, 5e-3, 20e-3, 50e-3)]
        assert all(a > b for a, b in zip(times, times[1:]))

    def test_rise_time_linear_in_load(self):
        base = ComparatorEngine(ComparatorConfig()).preamp_rise_time(OP0)
        caps = ComparatorEngine(ComparatorConfig()).node_caps()
        doubled = ComparatorEngine(
            ComparatorConfig(extra_load={"out": caps.c_out})).preamp_rise_time(OP0)
        assert rel_err(doubled, 2 * base) < 1e-12

    def test_degenerate_overdrive(self, engine):
        with pytest.raises(OverdriveError):
            engine.preamp_rise_time(replace(OP0, vcm=1.36, vid=0.0))


def ramp_oracle(config, op, mismatch, body=None):
    """Straight-line re-evaluation of the two ramps; returns the decision."""
    from dyncomp.devices import beta, threshold
    vdd = config.vdd if op.vdd_override is None else op.vdd_override
    body = body or BodyBias(vdd, vdd)
    pp = config.pmos
    np_ = config.nmos
    geoms = config.geoms
    vth4 = threshold(pp, body.vb_minus - vdd, mismatch.delta_vth("Mp4"))
    vth5 = threshold(pp, body.vb_plus - vdd, mismatch.delta_vth("Mp5"))
    b4 = beta(geoms["Mp4"], pp) * (1 + mismatch.delta_beta("Mp4"))
    b5 = beta(geoms["Mp5"], pp) * (1 + mismatch.delta_beta("Mp5"))
    i4 = 0.5 * b4 * max(0.0, vdd - (op.vcm - op.vid / 2) - vth4) ** 2
    i5 = 0.5 * b5 * max(0.0, vdd - (op.vcm + op.vid / 2) - vth5) ** 2
    tail = 0.5 * beta(geoms["Mp1"], pp) * (1 + mismatch.delta_beta("Mp1")) \
        * max(0.0, vdd - threshold(pp, 0, mismatch.delta_vth("Mp1"))) ** 2 \
        * (1 - config.tail_derating)
    if i4 + i5 > tail:
        s = tail / (i4 + i5)
        i4, i5 = i4 * s, i5 * s
    t_minus = (threshold(np_, 0, mismatch.delta_vth("Mn3")) / i4) if i4 > 0 else math.inf
    t_plus = (threshold(np_, 0, mismatch.delta_vth("Mn4")) / i5) if i5 > 0 else math.inf
    if t_minus == t_plus:
        return config.tie_break
    return +1 if t_minus < t_plus else -1


class TestSimulate:
    def test_decision_follows_vid_sign(self, engine):
        for vid in (50e-3, 1e-3, 1e-6):
            assert engine.simulate(replace(OP0, vid=vid)).decision == +1
            assert engine.simulate(replace(OP0, vid=-vid)).decision == -1

    def test_tie_break(self):
        op = replace(OP0, vid=0.0)
        assert ComparatorEngine(ComparatorConfig()).simulate(op).decision == +1
        assert ComparatorEngine(ComparatorConfig(tie_break=-1)).simulate(op).decision == -1

    def test_mismatch_flips_decision(self, engine):
        op = replace(OP0, vid=0.0)
        slow_minus = MismatchSample({"Mp4": (0.010, 0.0)})
        assert engine.simulate(op, slow_minus).decision == -1
        # flipping the sign of the injected delta flips the decision
        assert engine.simulate(op, MismatchSample({"Mp4": (-0.010, 0.0)})).decision == +1
        slow_plus = MismatchSample({"Mp5": (0.010, 0.0)})
        assert engine.simulate(op, slow_plus).decision == +1
        # threshold shift moves the flip point by roughly its own size
        assert engine.simulate(replace(OP0, vid=0.012), slow_minus).decision == +1
        assert engine.simulate(replace(OP0, vid=0.008), slow_minus).decision == -1

    def test_decision_matches_ramp_oracle(self, engine):
        cfg = engine.config
        geoms = list(cfg.geoms.values())
        for trial in range(40):
            mm = sample_mismatch(99, trial, geoms)
            for vid in (0.0, 5e-3, -5e-3):
                op = replace(OP0, vid=vid)
                assert engine.simulate(op, mm).decision == ramp_oracle(cfg, op, mm)

    def test_antisymmetry(self, engine):
        geoms = list(engine.config.geoms.values())
        for trial in range(25):
            mm = sample_mismatch(7, trial, geoms)
            swapped = dict(mm.deltas)
            swapped["Mp4"], swapped["Mp5"] = swapped["Mp5"], swapped["Mp4"]
            swapped["Mn3"], swapped["Mn4"] = swapped["Mn4"], swapped["Mn3"]
            swapped["Mni2"], swapped["Mni3"] = swapped["Mni3"], swapped["Mni2"]
            swapped["Mpi1"], swapped["Mpi4"] = swapped["Mpi4"], swapped["Mpi1"]
            mm2 = MismatchSample(swapped)
            op = replace(OP0, vid=3e-3)
            mirrored = replace(OP0, vid=-3e-3)
            assert engine.simulate(op, mm).decision == -engine.simulate(mirrored, mm2).decision

    def test_timing_identities(self, engine):
        r = engine.simulate(OP0)
        assert r.t0 == r.t1  # zero mismatch: latch and buffer thresholds match
        invn = engine.buffer_n_delay(OP0)
        invp = engine.buffer_p_delay(OP0)
        assert rel_err(r.t_esd, r.t1 + invn + invp) < 1e-12
        assert rel_err(r.t_dm, r.t0 + engine.latch_delay(OP0)) < 1e-12
        assert rel_err(r.t0, engine.preamp_rise_time(OP0)) < 1e-12

    def test_body_bias_speeds_a_side(self, engine):
        op = replace(OP0, vid=0.0)
        # discharging vb_plus forward-biases the plus side and flips the tie
        assert engine.simulate(op, body=BodyBias(1.7, 1.8)).decision == -1
        assert engine.simulate(op, body=BodyBias(1.8, 1.7)).decision == +1

    def test_body_validation(self, engine):
        with pytest.raises(ConfigError):
            engine.simulate(OP0, body=BodyBias(1.9, 1.8))

    def test_late_flag(self):
        eng = ComparatorEngine(ComparatorConfig(freq=47e9))
        r = eng.simulate(OP0)
        assert r.late and r.t_dm > eng.config.window >= r.t0

    def test_no_decision_error(self, engine):
        with pytest.raises(NoDecisionError):
            engine.simulate(OperatingPoint(vid=10e-3, vcm=1.36, t_kelvin=300.0))

    def test_shutdown_mode_does_not_change_decision_or_delay(self):
        on = ComparatorEngine(ComparatorConfig(early_shutdown_enabled=True))
        off = ComparatorEngine(ComparatorConfig(early_shutdown_enabled=False))
        r_on, r_off = on.simulate(OP0), off.simulate(OP0)
        assert r_on.t_esd >= r_on.t_dm  # designed regime
        assert (r_on.decision, r_on.t0, r_on.t_dm, r_on.t_esd) == \
               (r_off.decision, r_off.t0, r_off.t_dm, r_off.t_esd)
        assert r_on.shutdown_occurred and not r_off.shutdown_occurred

    def test_op_validation(self, engine):
        with pytest.raises(ConfigError):
            engine.simulate(OperatingPoint(vid=0.0, vcm=2.0))
        with pytest.raises(ConfigError):
            engine.simulate(OperatingPoint(vid=1.9, vcm=0.9))

    def test_corner_ordering(self, engine):
        delays = {name: engine.simulate(replace(OP0, corner=CORNERS[name])).t_dm
                  for name in ("TT", "FF", "SS", "FS")}
        assert delays["FF"] < delays["TT"] < delays["SS"]
        assert delays["FS"] > delays["TT"]  # slow PMOS inputs dominate


class TestEnergy:
    def test_breakdown_values(self, engine):
        r = engine.simulate(OP0)
        e = r.energy
        caps = engine.node_caps()
        vdd = 1.8
        assert e.e_latch == caps.c_latch * vdd * vdd
        assert e.e_reset == 2 * caps.c_out * vdd * vdd
        assert e.e_ddvb == 2 * (caps.c_pi + caps.c_p3) * vdd * vdd
        assert rel_err(e.e_preamp, vdd * engine.tail_current(OP0) * r.t_esd) < 1e-12
        assert e.total == e.e_preamp + e.e_latch + e.e_ddvb + e.e_reset

    def test_shutdown_saves_energy(self):
        on = ComparatorEngine(ComparatorConfig(early_shutdown_enabled=True))
        off = ComparatorEngine(ComparatorConfig(early_shutdown_enabled=False))
        assert on.simulate(OP0).energy.total < off.simulate(OP0).energy.total

    def test_modes_converge_when_window_beats_chain(self):
        # at 70 GHz the window closes before the chain fires on both modes
        on = ComparatorEngine(ComparatorConfig(freq=6.2e10, early_shutdown_enabled=True))
        off = ComparatorEngine(ComparatorConfig(freq=6.2e10, early_shutdown_enabled=False))
        r_on, r_off = on.simulate(OP0), off.simulate(OP0)
        assert not r_on.shutdown_occurred
        assert r_on.energy.total == r_off.energy.total

    def test_small_input_costs_more(self, engine):
        e_small = engine.simulate(replace(OP0, vid=1e-3)).energy.total
        e_large = engine.simulate(replace(OP0, vid=50e-3)).energy.total
        assert e_large < e_small

    def test_supply_scaling(self, engine):
        lo = engine.simulate(OperatingPoint(vid=50e-3, vcm=0.8, t_kelvin=300.0,
                                            vdd_override=1.6))
        hi = engine.simulate(OperatingPoint(vid=50e-3, vcm=1.0, t_kelvin=300.0,
                                            vdd_override=2.0))
        assert hi.t_dm < lo.t_dm
        assert hi.energy.total > lo.energy.total


class TestConfigValidation:
    def test_alpha_below_one(self):
        with pytest.raises(ConfigError):
            ComparatorConfig(alpha=0.9)

    def test_bad_extra_node(self):
        with pytest.raises(ConfigError):
            ComparatorConfig(extra_load={"bogus": 1e-15})

    def test_window(self):
        assert ComparatorConfig(freq=333e6).window == 0.5 / 333e6

    def test_typical_op(self):
        cfg = ComparatorConfig(vdd=1.6)
        op = typical_op(cfg, vid=1e-3)
        assert op.vcm == 0.8 and op.vid == 1e-3
