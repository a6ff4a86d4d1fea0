"""Run configuration: sectioned key=value parsing and object builders.

The config namespace is flat with dotted keys (section headers in files are
organizational only). ``auto`` resolves context-dependent defaults: the
common-mode voltage tracks vdd/2 and the calibration period tracks the clock.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

from . import devices as dev
from .calibration import CalibrationConfig
from .devices import CORNERS, DeviceParams, default_geometry
from .engine import ComparatorConfig, OperatingPoint
from .errors import ConfigError

SWEEP_VARIABLES = ("vid", "vcm", "vdd", "temp", "corner",
                   "width_preamp", "width_inv_n", "width_inv_both")

_GEOM_NAMES = frozenset(default_geometry())

# Keep the cal_* defaults in sync with CalibrationConfig (asserted in tests).
@dataclass
class RunConfig:
    vdd: float = 1.8
    vcm: float | None = None            # auto -> vdd/2
    vid: float = 50e-3
    freq: float = 333e6
    corner: str = "TT"
    temp_c: float = 27.0
    alpha: float = 1.5
    shutdown: bool = True
    tie_break: int = 1
    tail_derating: float = 0.02
    gamma: float = 0.4
    phi2f: float = 0.7
    cox_area: float = 8.5e-3
    nmos_mu_cox: float = 300e-6
    nmos_vth0: float = 0.45
    pmos_mu_cox: float = 150e-6
    pmos_vth0: float = 0.45
    avt: float = dev.AVT_DEFAULT
    abeta: float = dev.ABETA_DEFAULT
    extra: dict[str, float] = field(default_factory=dict)
    widths: dict[str, float] = field(default_factory=dict)
    lengths: dict[str, float] = field(default_factory=dict)
    sweep_variable: str | None = None
    sweep_start: float | None = None
    sweep_stop: float | None = None
    sweep_points: int | None = None
    sweep_scale: str = "linear"
    seed: int = 1
    trials: int = 500
    calibrate: bool = False
    cal_cycles: int = 6
    cal_phases: int = 1
    cal_cb: float = 1e-12
    cal_c0: float = 100e-15
    cal_caps: tuple[float, ...] = (25e-15, 25e-15, 50e-15, 100e-15, 200e-15, 400e-15)
    cal_cp_beta: float = 17e-6
    cal_cp_vthn: float = -0.45
    cal_period: float | None = None     # auto -> 1/freq
    cal_vref: float | None = None       # auto -> vdd/2
    cal_tol: float = 10e-6
    cal_span: float = 100e-3
    warnings: list[str] = field(default_factory=list)


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _parse_bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _positive(key: str, x: float) -> float:
    if x <= 0:
        raise ConfigError(f"{key}: must be > 0, got {x}")
    return x


def _nonnegative(key: str, x: float) -> float:
    if x < 0:
        raise ConfigError(f"{key}: must be >= 0, got {x}")
    return x


def _optional_float(key: str, value: str) -> float | None:
    if value.strip().lower() in ("auto", "none"):
        return None
    return _parse_float(key, value)


def set_key(cfg: RunConfig, key: str, value: str) -> None:
    """Apply one key=value pair, validating range invariants by name."""
    k = key.strip()
    v = value.strip()
    if k.startswith("w.") or k.startswith("l."):
        name = k[2:]
        if name not in _GEOM_NAMES:
            raise ConfigError(f"{k}: unknown transistor name {name!r}")
        target = cfg.widths if k.startswith("w.") else cfg.lengths
        target[name] = _positive(k, _parse_float(k, v))
        return
    if k.startswith("extra."):
        node = k[len("extra."):]
        if node not in ("out", "pi", "p3", "latch"):
            raise ConfigError(f"{k}: unknown load node {node!r}")
        cfg.extra[node] = _nonnegative(k, _parse_float(k, v))
        return

    match k:
        case "vdd":
            cfg.vdd = _positive(k, _parse_float(k, v))
        case "vcm":
            cfg.vcm = _optional_float(k, v)
            if cfg.vcm is not None:
                _nonnegative(k, cfg.vcm)
        case "vid":
            cfg.vid = _parse_float(k, v)
        case "freq":
            cfg.freq = _positive(k, _parse_float(k, v))
        case "corner":
            name = v.upper()
            if name not in CORNERS:
                raise ConfigError(f"corner: unknown name {v!r}; expected one of {tuple(CORNERS)}")
            cfg.corner = name
        case "temp_c":
            x = _parse_float(k, v)
            if x <= -273.15:
                raise ConfigError(f"temp_c: must be above absolute zero, got {x}")
            cfg.temp_c = x
        case "alpha":
            x = _parse_float(k, v)
            if x < 1.0:
                raise ConfigError(f"alpha: must be >= 1, got {x}")
            cfg.alpha = x
        case "shutdown":
            cfg.shutdown = _parse_bool(k, v)
        case "tie_break":
            x = _parse_int(k, v)
            if x not in (1, -1):
                raise ConfigError(f"tie_break: must be +1 or -1, got {x}")
            cfg.tie_break = x
        case "tail_derating":
            x = _parse_float(k, v)
            if not 0.0 <= x < 1.0:
                raise ConfigError(f"tail_derating: must be in [0, 1), got {x}")
            cfg.tail_derating = x
        case "gamma":
            cfg.gamma = _nonnegative(k, _parse_float(k, v))
        case "phi2f":
            cfg.phi2f = _positive(k, _parse_float(k, v))
        case "cox_area":
            cfg.cox_area = _positive(k, _parse_float(k, v))
        case "nmos.mu_cox":
            cfg.nmos_mu_cox = _positive(k, _parse_float(k, v))
        case "nmos.vth0":
            cfg.nmos_vth0 = _positive(k, _parse_float(k, v))
        case "pmos.mu_cox":
            cfg.pmos_mu_cox = _positive(k, _parse_float(k, v))
        case "pmos.vth0":
            cfg.pmos_vth0 = _positive(k, _parse_float(k, v))
        case "avt":
            cfg.avt = _nonnegative(k, _parse_float(k, v))
        case "abeta":
            cfg.abeta = _nonnegative(k, _parse_float(k, v))
        case "sweep.variable":
            if v.lower() in ("none", ""):
                cfg.sweep_variable = None
            elif v in SWEEP_VARIABLES:
                cfg.sweep_variable = v
            else:
                raise ConfigError(f"sweep.variable: unknown {v!r}; expected one of {SWEEP_VARIABLES}")
        case "sweep.start":
            cfg.sweep_start = _optional_float(k, v)
        case "sweep.stop":
            cfg.sweep_stop = _optional_float(k, v)
        case "sweep.points":
            if v.strip().lower() in ("auto", "none"):
                cfg.sweep_points = None
            else:
                x = _parse_int(k, v)
                if x < 2:
                    raise ConfigError(f"sweep.points: must be >= 2, got {x}")
                cfg.sweep_points = x
        case "sweep.scale":
            if v not in ("linear", "log"):
                raise ConfigError(f"sweep.scale: expected linear|log, got {v!r}")
            cfg.sweep_scale = v
        case "seed":
            cfg.seed = _parse_int(k, v)
        case "trials":
            x = _parse_int(k, v)
            if x < 1:
                raise ConfigError(f"trials: must be >= 1, got {x}")
            cfg.trials = x
        case "calibrate":
            cfg.calibrate = _parse_bool(k, v)
        case "cal.cycles":
            x = _parse_int(k, v)
            if x < 1:
                raise ConfigError(f"cal.cycles: must be >= 1, got {x}")
            cfg.cal_cycles = x
        case "cal.phases":
            x = _parse_int(k, v)
            if x < 1:
                raise ConfigError(f"cal.phases: must be >= 1, got {x}")
            cfg.cal_phases = x
        case "cal.cb":
            cfg.cal_cb = _positive(k, _parse_float(k, v))
        case "cal.c0":
            cfg.cal_c0 = _positive(k, _parse_float(k, v))
        case "cal.caps":
            parts = [p for p in v.split(",") if p.strip()]
            if not parts:
                raise ConfigError("cal.caps: expected a comma-separated list of capacitances")
            cfg.cal_caps = tuple(_positive(k, _parse_float(k, p)) for p in parts)
        case "cal.cp_beta":
            cfg.cal_cp_beta = _positive(k, _parse_float(k, v))
        case "cal.cp_vthn":
            cfg.cal_cp_vthn = _parse_float(k, v)
        case "cal.period":
            cfg.cal_period = _optional_float(k, v)
            if cfg.cal_period is not None:
                _positive(k, cfg.cal_period)
        case "cal.vref":
            cfg.cal_vref = _optional_float(k, v)
        case "cal.tol":
            cfg.cal_tol = _positive(k, _parse_float(k, v))
        case "cal.span":
            cfg.cal_span = _positive(k, _parse_float(k, v))
        case _:
            raise ConfigError(f"unknown config key {key!r}")


def parse_config(text: str) -> RunConfig:
    """Parse sectioned key=value text into a RunConfig.

    Unknown keys are rejected by name, parse errors carry the line number,
    and duplicate keys follow last-wins with a recorded warning.
    """
    cfg = RunConfig()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue  # section headers are organizational only
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        try:
            set_key(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        if key in seen:
            cfg.warnings.append(f"duplicate key {key!r}: last value wins")
        seen.add(key)
    return cfg


def apply_overrides(cfg: RunConfig, pairs: Iterable[str]) -> RunConfig:
    """Apply repeated --set key=value flags on top of the parsed config."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        set_key(cfg, key.strip(), value)
    return cfg


# -- builders ------------------------------------------------------------------


def build_device_params(cfg: RunConfig) -> tuple[DeviceParams, DeviceParams]:
    nmos = DeviceParams(dev.NMOS, cfg.nmos_mu_cox, cfg.nmos_vth0,
                        cfg.gamma, cfg.phi2f, cfg.cox_area)
    pmos = DeviceParams(dev.PMOS, cfg.pmos_mu_cox, cfg.pmos_vth0,
                        cfg.gamma, cfg.phi2f, cfg.cox_area)
    return nmos, pmos


def build_comparator_config(cfg: RunConfig, shutdown: bool | None = None) -> ComparatorConfig:
    geoms = default_geometry()
    for name, w in cfg.widths.items():
        geoms[name] = replace(geoms[name], w=w)
    for name, l in cfg.lengths.items():
        geoms[name] = replace(geoms[name], l=l)
    nmos, pmos = build_device_params(cfg)
    return ComparatorConfig(
        geoms=geoms, nmos=nmos, pmos=pmos, vdd=cfg.vdd, freq=cfg.freq,
        alpha=cfg.alpha, extra_load=dict(cfg.extra),
        early_shutdown_enabled=cfg.shutdown if shutdown is None else shutdown,
        tail_derating=cfg.tail_derating, tie_break=cfg.tie_break)


def resolve_vcm(cfg: RunConfig, vdd: float | None = None) -> float:
    return cfg.vcm if cfg.vcm is not None else (vdd if vdd is not None else cfg.vdd) / 2.0


def build_operating_point(cfg: RunConfig, **overrides) -> OperatingPoint:
    fields = dict(
        vid=cfg.vid,
        vcm=resolve_vcm(cfg),
        corner=CORNERS[cfg.corner],
        t_kelvin=cfg.temp_c + 273.15,
        vdd_override=None,
    )
    fields.update(overrides)
    return OperatingPoint(**fields)


def build_calibration_config(cfg: RunConfig) -> CalibrationConfig:
    return CalibrationConfig(
        n_cycles=cfg.cal_cycles, n_phases=cfg.cal_phases, cb=cfg.cal_cb,
        c0=cfg.cal_c0, dac_caps=cfg.cal_caps, cp_beta=cfg.cal_cp_beta,
        cp_vthn=cfg.cal_cp_vthn, t_period=cfg.cal_period,
        v_ref_input=cfg.cal_vref, tol_os=cfg.cal_tol, span=cfg.cal_span)


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(x)) for x in value)
    return str(value)


def resolved_metadata(cfg: RunConfig) -> dict[str, str]:
    """Full resolved configuration as ordered key -> string pairs.

    Feeding these pairs back through set_key reproduces the run exactly;
    geometry and load overrides appear only when set (defaults are pinned
    by the tool version).
    """
    meta: dict[str, str] = {}
    scalar_keys = (
        ("vdd", cfg.vdd), ("vcm", cfg.vcm), ("vid", cfg.vid), ("freq", cfg.freq),
        ("corner", cfg.corner), ("temp_c", cfg.temp_c), ("alpha", cfg.alpha),
        ("shutdown", cfg.shutdown), ("tie_break", cfg.tie_break),
        ("tail_derating", cfg.tail_derating), ("gamma", cfg.gamma),
        ("phi2f", cfg.phi2f), ("cox_area", cfg.cox_area),
        ("nmos.mu_cox", cfg.nmos_mu_cox), ("nmos.vth0", cfg.nmos_vth0),
        ("pmos.mu_cox", cfg.pmos_mu_cox), ("pmos.vth0", cfg.pmos_vth0),
        ("avt", cfg.avt), ("abeta", cfg.abeta),
        ("sweep.variable", cfg.sweep_variable), ("sweep.start", cfg.sweep_start),
        ("sweep.stop", cfg.sweep_stop), ("sweep.points", cfg.sweep_points),
        ("sweep.scale", cfg.sweep_scale),
        ("seed", cfg.seed), ("trials", cfg.trials), ("calibrate", cfg.calibrate),
        ("cal.cycles", cfg.cal_cycles), ("cal.phases", cfg.cal_phases),
        ("cal.cb", cfg.cal_cb), ("cal.c0", cfg.cal_c0), ("cal.caps", cfg.cal_caps),
        ("cal.cp_beta", cfg.cal_cp_beta), ("cal.cp_vthn", cfg.cal_cp_vthn),
        ("cal.period", cfg.cal_period), ("cal.vref", cfg.cal_vref),
        ("cal.tol", cfg.cal_tol), ("cal.span", cfg.cal_span),
    )
    for key, value in scalar_keys:
        if key == "sweep.variable" and value is None:
            meta[key] = "none"
        elif key in ("sweep.points",) and value is None:
            meta[key] = "auto"
        else:
            meta[key] = _fmt(value)
    for name in sorted(cfg.widths):
        meta[f"w.{name}"] = _fmt(cfg.widths[name])
    for name in sorted(cfg.lengths):
        meta[f"l.{name}"] = _fmt(cfg.lengths[name])
    for node in sorted(cfg.extra):
        meta[f"extra.{node}"] = _fmt(cfg.extra[node])
    for i, warning in enumerate(cfg.warnings):
        meta[f"warning.{i}"] = warning
    return meta


def config_from_metadata(meta: dict[str, str]) -> RunConfig:
    """Rebuild a RunConfig from emitted metadata pairs (round-trip)."""
    cfg = RunConfig()
    for key, value in meta.items():
        if (key.startswith("warning.") or key.startswith("result.")
                or key in ("tool", "version", "subcommand", "plot_scale", "compare")):
            continue
        set_key(cfg, key, value)
    return cfg
