"""Batch runners: sweeps, Monte Carlo, CSV/JSON emission and the report.

Output files are deterministic byte-for-byte for a fixed config and seed:
floats are normalized to 9 significant digits when rows are built, so a
table loaded back from its CSV is value-identical to the live one.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import sizing as sizing_mod
from .calibration import (OffsetStats, monte_carlo, residual_bound,
                          run_calibration)
from .config import (RunConfig, build_calibration_config, build_comparator_config,
                     build_operating_point, resolve_vcm, resolved_metadata)
from .devices import CORNERS, sample_mismatch
from .engine import ComparatorEngine
from .errors import ConfigError, SimulationError

TOOL_NAME = "dyncomp-sim"

# Default sweep grids: (start, stop, points, scale).
DEFAULT_GRIDS = {
    "vid": (1e-3, 50e-3, 20, "log"),
    "vcm": (0.1, 1.1, 21, "linear"),
    "vdd": (1.4, 2.0, 13, "linear"),
    "temp": (-20.0, 100.0, 13, "linear"),
    "width_preamp": (0.6e-6, 3.6e-6, 16, "linear"),
    "width_inv_n": (0.22e-6, 0.88e-6, 12, "linear"),
    "width_inv_both": (0.22e-6, 0.88e-6, 12, "linear"),
}

CORNER_ORDER = ("TT", "FF", "SS", "FS", "SF")

_VALUE_COLUMN = {
    "vid": "vid_V", "vcm": "vcm_V", "vdd": "vdd_V", "temp": "temp_C",
    "corner": "corner", "width_preamp": "w_m", "width_inv_n": "w_m",
    "width_inv_both": "w_m",
}


def round9(x: float) -> float:
    """Normalize to the 9-significant-digit CSV representation."""
    if isinstance(x, float) and math.isfinite(x):
        return float(f"{x:.9g}")
    return x


def fmt_cell(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


@dataclass
class Table:
    """One emitted result table: metadata lines, a header and rows."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple]
    metadata: dict[str, str] = field(default_factory=dict)


def base_metadata(cfg: RunConfig, subcommand: str) -> dict[str, str]:
    meta = {"tool": TOOL_NAME, "version": __version__, "subcommand": subcommand}
    meta.update(resolved_metadata(cfg))
    return meta


def _grid_values(cfg: RunConfig) -> list:
    variable = cfg.sweep_variable
    if variable is None:
        raise ConfigError("sweep.variable is not set")
    if variable == "corner":
        return list(CORNER_ORDER)
    start, stop, points, scale = DEFAULT_GRIDS[variable]
    start = cfg.sweep_start if cfg.sweep_start is not None else start
    stop = cfg.sweep_stop if cfg.sweep_stop is not None else stop
    points = cfg.sweep_points if cfg.sweep_points is not None else points
    scale = cfg.sweep_scale if cfg.sweep_scale else scale
    if points < 2:
        raise ConfigError("sweep.points: must be >= 2")
    if scale == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("sweep bounds must be > 0 on a log scale")
        values = np.geomspace(start, stop, points)
    else:
        values = np.linspace(start, stop, points)
    return [float(v) for v in values]


def _point_setup(cfg: RunConfig, variable: str, value):
    """(config_kwargs, op) for one grid point; non-swept values at defaults."""
    op = build_operating_point(cfg)
    width_target = None
    if variable == "vid":
        op = replace(op, vid=value)
    elif variable == "vcm":
        op = replace(op, vcm=value)
    elif variable == "vdd":
        op = replace(op, vdd_override=value, vcm=resolve_vcm(cfg, value))
    elif variable == "temp":
        op = replace(op, t_kelvin=value + 273.15)
    elif variable == "corner":
        op = replace(op, corner=CORNERS[value])
    elif variable.startswith("width_"):
        width_target = variable[len("width_"):]
    else:
        raise ConfigError(f"unknown sweep variable {variable!r}")
    return width_target, op


def run_sweep(cfg: RunConfig, compare: bool = False) -> Table:
    """Evaluate the engine over the sweep grid in deterministic row order.

    With ``compare`` both shutdown modes run at every point and the table
    gains no-shutdown energy and savings-percent columns. Per-point engine
    errors become rows flagged late with NaN metrics.
    """
    variable = cfg.sweep_variable
    values = _grid_values(cfg)
    vcol = _VALUE_COLUMN[variable]
    columns = [vcol, "decision", "t_dm_s", "t_esd_s", "power_W", "energy_J", "late"]
    if compare:
        columns += ["energy_noesd_J", "savings_pct"]

    config_on = build_comparator_config(cfg, shutdown=True if compare else None)
    config_off = build_comparator_config(cfg, shutdown=False)
    engine_on = ComparatorEngine(config_on)
    engine_off = ComparatorEngine(config_off) if compare else None

    rows = []
    for value in values:
        width_target, op = _point_setup(cfg, variable, value)
        if width_target is not None:
            try:
                eng = ComparatorEngine(sizing_mod.scaled_config(config_on, width_target, value))
                eng_off = (ComparatorEngine(sizing_mod.scaled_config(config_off, width_target, value))
                           if compare else None)
            except ConfigError:
                rows.append(_failed_row(value, compare))
                continue
        else:
            eng, eng_off = engine_on, engine_off
        try:
            result = eng.simulate(op)
            row = [value if variable == "corner" else round9(value),
                   result.decision, round9(result.t_dm), round9(result.t_esd),
                   round9(result.energy.total * cfg.freq), round9(result.energy.total),
                   int(result.late)]
            if compare:
                result_off = eng_off.simulate(op)
                e_on, e_off = result.energy.total, result_off.energy.total
                savings = 100.0 * (1.0 - e_on / e_off) if e_off > 0 else math.nan
                row += [round9(e_off), round9(savings)]
            rows.append(tuple(row))
        except SimulationError:
            rows.append(_failed_row(value, compare))

    meta = base_metadata(cfg, "sweep")
    if compare:
        meta["compare"] = "true"
    if variable == "vcm":
        meta["plot_scale"] = "log"  # delay axis is conventionally log vs vcm
    return Table(name=f"sweep_{variable}", columns=tuple(columns), rows=rows, metadata=meta)


def _failed_row(value, compare: bool) -> tuple:
    row = [value if isinstance(value, str) else round9(value),
           0, math.nan, math.nan, math.nan, math.nan, 1]
    if compare:
        row += [math.nan, math.nan]
    return tuple(row)


def run_single(cfg: RunConfig, subcommand: str = "sim") -> Table:
    """One comparison at the configured operating point, as a one-row table."""
    config = build_comparator_config(cfg)
    engine = ComparatorEngine(config)
    op = build_operating_point(cfg)
    result = engine.simulate(op)
    columns = ("vid_V", "decision", "t0_s", "t1_s", "t_dm_s", "t_esd_s",
               "power_W", "energy_J", "shutdown", "late")
    row = (round9(op.vid), result.decision, round9(result.t0), round9(result.t1),
           round9(result.t_dm), round9(result.t_esd),
           round9(result.energy.total * cfg.freq), round9(result.energy.total),
           int(result.shutdown_occurred), int(result.late))
    return Table(name="sim", columns=columns, rows=[row], metadata=base_metadata(cfg, subcommand))


def run_montecarlo(cfg: RunConfig) -> tuple[OffsetStats, OffsetStats | None, Table]:
    """Offset Monte Carlo; with calibrate=true, paired before/after histograms."""
    config = build_comparator_config(cfg)
    cal = build_calibration_config(cfg)
    op = build_operating_point(cfg, vid=0.0)
    before = monte_carlo(cfg.trials, cfg.seed, config, cal, calibrate=False,
                         op=op, avt=cfg.avt, abeta=cfg.abeta)
    after = None
    if cfg.calibrate:
        after = monte_carlo(cfg.trials, cfg.seed, config, cal, calibrate=True,
                            op=op, avt=cfg.avt, abeta=cfg.abeta)

    columns = ("phase", "bin_lo_V", "bin_hi_V", "count")
    rows = []
    for phase, stats in (("before", before), ("after", after)):
        if stats is None:
            continue
        for i, count in enumerate(stats.counts):
            rows.append((phase, round9(stats.bin_edges[i]), round9(stats.bin_edges[i + 1]),
                         int(count)))
    meta = base_metadata(cfg, "mc")
    for phase, stats in (("before", before), ("after", after)):
        if stats is None:
            continue
        meta[f"result.{phase}_n"] = str(stats.n)
        meta[f"result.{phase}_mean_V"] = fmt_cell(round9(stats.mean))
        meta[f"result.{phase}_sigma_V"] = fmt_cell(round9(stats.sigma))
        meta[f"result.{phase}_span_errors"] = str(stats.span_errors)
    return before, after, Table(name="mc_offset", columns=columns, rows=rows, metadata=meta)


def run_calibrate_once(cfg: RunConfig, trial: int = 0) -> tuple:
    """One calibration on the mismatch sample (seed, trial); history table."""
    config = build_comparator_config(cfg)
    cal = build_calibration_config(cfg)
    op = build_operating_point(cfg, vid=0.0)
    mm = sample_mismatch(cfg.seed, trial, config.geoms.values(), avt=cfg.avt, abeta=cfg.abeta)
    result = run_calibration(config, mm, cal, op)
    columns = ("cycle", "daco_V", "step_V", "s")
    rows = [(c, round9(d), round9(s), sgn) for c, d, s, sgn in result.state.history]
    meta = base_metadata(cfg, "calibrate")
    meta["result.trial"] = str(trial)
    meta["result.offset_before_V"] = fmt_cell(round9(result.offset_before))
    meta["result.offset_after_V"] = fmt_cell(round9(result.offset_after))
    meta["result.residual_bound_V"] = fmt_cell(round9(residual_bound(cal, config)))
    meta["result.converged"] = "true" if result.converged else "false"
    meta["result.saturated"] = "true" if result.saturated else "false"
    return result, Table(name="calibrate", columns=columns, rows=rows, metadata=meta)


def run_sizing(cfg: RunConfig) -> Table:
    """Normalized width solve plus the general residual of the geometry."""
    solution = sizing_mod.solve_sizing(cfg.alpha)
    config = build_comparator_config(cfg)
    geom_residual = sizing_mod.balance_residual_for(config, build_operating_point(cfg))
    columns = ("alpha", "x", "y", "residual", "geom_residual_s")
    rows = [(round9(cfg.alpha), round9(solution.x), round9(solution.y),
             round9(sizing_mod.normalized_balance_residual(solution)),
             round9(geom_residual))]
    return Table(name="size", columns=columns, rows=rows, metadata=base_metadata(cfg, "size"))


# -- serialization ---------------------------------------------------------------


def render_csv(table: Table) -> str:
    lines = [f"# {k}={v}" for k, v in table.metadata.items()]
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(fmt_cell(x) for x in row))
    return "\n".join(lines) + "\n"


def emit_csv(table: Table, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_csv(table))


def render_json(table: Table) -> str:
    payload = {
        "metadata": table.metadata,
        "columns": list(table.columns),
        "rows": [[round9(x) if isinstance(x, float) else x for x in row]
                 for row in table.rows],
    }
    return json.dumps(payload, indent=2, allow_nan=True) + "\n"


def emit_json(table: Table, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_json(table))


def load_csv(path) -> Table:
    """Parse a table emitted by emit_csv back into an equal Table."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    metadata: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        key, _, value = body.partition("=")
        metadata[key] = value
        i += 1
    if i >= len(lines):
        raise ConfigError(f"{path}: missing header row")
    columns = tuple(lines[i].split(","))
    rows = []
    for line in lines[i + 1:]:
        if not line:
            continue
        cells = []
        for col, cell in zip(columns, line.split(",")):
            if col in ("corner", "phase"):
                cells.append(cell)
            elif col in ("decision", "late", "count", "cycle", "s", "shutdown"):
                cells.append(int(cell))
            else:
                cells.append(float(cell))
        rows.append(tuple(cells))
    name = metadata.get("subcommand", "table")
    return Table(name=name, columns=columns, rows=rows, metadata=metadata)


# -- report -----------------------------------------------------------------------

REPORT_SWEEP_VARIABLES = ("vid", "vcm", "vdd", "temp", "corner")


@dataclass
class ReportInputs:
    """Tables the summary report is a pure function of."""

    typical: Table                  # single point at typical conditions
    fast: Table                     # vid=1 mV at the 500 MHz reporting clock
    sweeps: dict[str, Table]        # compare-mode sweeps per variable
    mc: Table | None
    sizing: Table


def collect_report_inputs(cfg: RunConfig) -> ReportInputs:
    typical = run_single(cfg, subcommand="report-typical")
    fast_cfg = replace_runconfig(cfg, vid=1e-3, freq=500e6)
    fast = run_single(fast_cfg, subcommand="report-fast")
    sweeps = {}
    for variable in REPORT_SWEEP_VARIABLES:
        sweep_cfg = replace_runconfig(cfg, sweep_variable=variable)
        sweeps[variable] = run_sweep(sweep_cfg, compare=cfg.shutdown)
    mc_cfg = replace_runconfig(cfg, calibrate=True)
    _, _, mc_table = run_montecarlo(mc_cfg)
    return ReportInputs(typical=typical, fast=fast, sweeps=sweeps, mc=mc_table,
                        sizing=run_sizing(cfg))


def replace_runconfig(cfg: RunConfig, **changes) -> RunConfig:
    out = copy.deepcopy(cfg)
    for key, value in changes.items():
        setattr(out, key, value)
    return out


def _column(table: Table, name: str) -> list:
    idx = table.columns.index(name)
    return [row[idx] for row in table.rows]


def report_text(inputs: ReportInputs) -> str:
    """One-page summary; a pure function of the input tables."""
    typ = inputs.typical.rows[0]
    typ_cols = inputs.typical.columns
    fast = inputs.fast.rows[0]

    def cell(row, cols, name):
        return row[cols.index(name)]

    lines = [f"{TOOL_NAME} report (version {__version__})", ""]
    meta = inputs.typical.metadata
    lines.append("typical conditions: vdd=%s V, vid=%s V, f=%s Hz, T=%s C, corner %s"
                 % (meta.get("vdd"), meta.get("vid"), meta.get("freq"),
                    meta.get("temp_c"), meta.get("corner")))
    lines.append("")
    lines.append(f"delay_typical_ps: {cell(typ, typ_cols, 't_dm_s') * 1e12:.4g}")
    lines.append(f"delay_vid_1mV_ps: {cell(fast, typ_cols, 't_dm_s') * 1e12:.4g}")
    fmax = 0.5 / cell(fast, typ_cols, "t_dm_s")
    lines.append(f"fmax_vid_1mV_GHz: {fmax / 1e9:.4g}")
    lines.append(f"power_typical_uW: {cell(typ, typ_cols, 'power_W') * 1e6:.4g}")
    lines.append(f"power_500MHz_vid_1mV_uW: {cell(fast, typ_cols, 'power_W') * 1e6:.4g}"
                 "  (design target: 47)")

    savings = []
    for table in inputs.sweeps.values():
        if "savings_pct" in table.columns:
            savings.extend(s for s in _column(table, "savings_pct") if not math.isnan(s))
    if savings:
        lines.append(f"power_savings_worst_case_pct: {min(savings):.4g}  (design target: 21.7)")
    else:
        lines.append("power_savings_worst_case_pct: 0  (shutdown disabled)")

    if inputs.mc is not None:
        mc_meta = inputs.mc.metadata
        sigma_before = float(mc_meta["result.before_sigma_V"])
        lines.append(f"offset_sigma_uncal_mV: {sigma_before * 1e3:.4g}")
        if "result.after_sigma_V" in mc_meta:
            sigma_after = float(mc_meta["result.after_sigma_V"])
            lines.append(f"offset_sigma_cal_mV: {sigma_after * 1e3:.4g}  (design target: 0.62)")
            if sigma_after > 0:
                lines.append(f"offset_reduction_factor: {sigma_before / sigma_after:.4g}")

    size_row = inputs.sizing.rows[0]
    size_cols = inputs.sizing.columns
    lines.append(f"sizing_x: {cell(size_row, size_cols, 'x'):.4g}")
    lines.append(f"sizing_y: {cell(size_row, size_cols, 'y'):.4g}")
    lines.append(f"sizing_residual: {cell(size_row, size_cols, 'residual'):.4g}")
    return "\n".join(lines) + "\n"


_BUNDLE_FILES = {
    "typical": "typical.csv",
    "fast": "fast.csv",
    "mc": "mc_offset.csv",
    "sizing": "size.csv",
}


def write_report_bundle(inputs: ReportInputs, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(inputs.typical, out / _BUNDLE_FILES["typical"])
    emit_csv(inputs.fast, out / _BUNDLE_FILES["fast"])
    for variable, table in inputs.sweeps.items():
        emit_csv(table, out / f"sweep_{variable}.csv")
    if inputs.mc is not None:
        emit_csv(inputs.mc, out / _BUNDLE_FILES["mc"])
    emit_csv(inputs.sizing, out / _BUNDLE_FILES["sizing"])
    (out / "report.txt").write_text(report_text(inputs), encoding="utf-8")


def load_report_bundle(in_dir) -> ReportInputs:
    src = Path(in_dir)
    sweeps = {}
    for variable in REPORT_SWEEP_VARIABLES:
        path = src / f"sweep_{variable}.csv"
        if path.exists():
            sweeps[variable] = load_csv(path)
    mc_path = src / _BUNDLE_FILES["mc"]
    return ReportInputs(
        typical=load_csv(src / _BUNDLE_FILES["typical"]),
        fast=load_csv(src / _BUNDLE_FILES["fast"]),
        sweeps=sweeps,
        mc=load_csv(mc_path) if mc_path.exists() else None,
        sizing=load_csv(src / _BUNDLE_FILES["sizing"]),
    )
