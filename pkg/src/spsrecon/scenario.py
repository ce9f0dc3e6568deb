"""Scenario document parsing and plant construction.

A plant is described by one TOML document; `load_system_spec` turns it into
a validated `SystemSpec`. The document lists the per-zone load complement,
the generator sets behind their converters, and the shared DC-grid
parameters; bus numbering and the dual-chain line topology are derived here
so a scenario cannot describe an inconsistent backbone.

Schema (all quantities base SI units):

    name = "six-zone"                 # optional, defaults to file stem

    [dc_grid]
    nominal_voltage = 1000.0          # V
    voltage_min = 900.0               # V, bus feasibility window
    voltage_max = 1100.0
    segment_resistance = 0.01         # ohm per inter-zone PB/SB segment
    segment_current_max = 6000.0      # A
    tie_resistance = 0.005            # ohm per converter tie
    tie_current_max = 10000.0         # A

    [weights]                         # restoration priority weights
    vital = 12.0
    semi_vital = 4.0
    non_vital = 1.0

    [[generators]]                    # one table per generator set
    id = "MG"
    p_min = 0.0                       # W
    p_max = 8.0e6
    q_min = -4.0e6                    # var
    q_max = 4.0e6
    voltage_min = 2970.0              # V
    voltage_max = 3490.0
    angle_min = -1.0                  # rad
    angle_max = 1.0
    current_max = 1800.0              # A

    [[converters]]                    # one table per converter
    id = "MG"
    generator = "MG"
    ties = [1, 7]                     # PB/SB buses tied to the output bus
    ac_voltage = 3300.0               # V
    ac_angle = 0.0                    # rad
    p_out_min = 0.0                   # W, DC-side output window
    p_out_max = 7.8e6
    const_loss = 15.0e3               # W
    linear_loss = 3.0                 # W/A
    quad_loss = 2.0e-3                # W/A^2
    current_max = 1700.0              # A, AC side
    line_resistance = 0.01            # ohm, generator-converter line
    line_reactance = 0.1
    q_demand = 0.0                    # var, optional

    [[zones]]                         # zones 1..K in order
    zone = 1
    vital = [0.2e6, 0.2e6]            # W, two consumers per grade
    semi_vital = [0.4e6, 0.4e6]
    non_vital = [0.2e6, 0.2e6]        # first port-side, second starboard-side

    [initial]                         # optional
    sb_select = [1, 0, 1, 1, 1, 0]    # starboard-select switch per zone

Converter output buses are numbered 2K+1 onward in file order. Vital and
semi-vital loads attach to both of their zone's buses; the first/second
non-vital consumer is hard-wired port/starboard side.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib  # type: ignore[no-redef]

from .model import (
    BusSpec,
    ConverterSpec,
    GeneratorSpec,
    Grade,
    LineSpec,
    LoadSpec,
    ScenarioError,
    SystemSpec,
    segment_id,
)

_GRADE_KEYS = (("vital", Grade.VITAL), ("semi_vital", Grade.SEMI_VITAL), ("non_vital", Grade.NON_VITAL))


def load_system_spec(path: str | Path) -> SystemSpec:
    """Load and validate a plant description from a TOML document."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ScenarioError(f"{path}: not valid TOML: {exc}") from exc
    return build_system_spec(doc, default_name=path.stem)


def fixture_path(name: str) -> Path:
    """Filesystem path of a packaged scenario fixture, e.g. ``"six_zone"``."""
    candidate = resources.files("spsrecon.fixtures").joinpath(f"{name}.toml")
    with resources.as_file(candidate) as concrete:
        if not concrete.exists():
            raise ScenarioError(f"no packaged fixture named {name!r}")
        return concrete


def load_fixture(name: str) -> SystemSpec:
    return load_system_spec(fixture_path(name))


# ====================== DOCUMENT -> SPEC ======================


def build_system_spec(doc: dict[str, Any], default_name: str = "plant") -> SystemSpec:
    """Build a validated SystemSpec from a parsed scenario mapping."""
    name = _opt(doc, "name", str, default_name, "name")
    grid = _table(doc, "dc_grid")
    nominal = _num(grid, "nominal_voltage", "dc_grid")
    v_min = _num(grid, "voltage_min", "dc_grid")
    v_max = _num(grid, "voltage_max", "dc_grid")
    seg_r = _num(grid, "segment_resistance", "dc_grid")
    seg_imax = _num(grid, "segment_current_max", "dc_grid")
    tie_r = _num(grid, "tie_resistance", "dc_grid")
    tie_imax = _num(grid, "tie_current_max", "dc_grid")

    weights_tbl = _table(doc, "weights")
    weights = (
        _num(weights_tbl, "vital", "weights"),
        _num(weights_tbl, "semi_vital", "weights"),
        _num(weights_tbl, "non_vital", "weights"),
    )

    zones = _array(doc, "zones")
    k = len(zones)
    loads: list[LoadSpec] = []
    for index, ztbl in enumerate(zones):
        path = f"zones[{index}]"
        if not isinstance(ztbl, dict):
            raise ScenarioError(f"{path}: expected a table")
        zone = int(_num(ztbl, "zone", path))
        if zone != index + 1:
            raise ScenarioError(f"{path}.zone: zones must be listed 1..K in order")
        for key, grade in _GRADE_KEYS:
            powers = ztbl.get(key)
            if not isinstance(powers, list) or len(powers) != 2:
                raise ScenarioError(f"{path}.{key}: expected a list of exactly 2 powers")
            for slot, power in enumerate(powers, start=1):
                if not isinstance(power, (int, float)) or isinstance(power, bool):
                    raise ScenarioError(f"{path}.{key}[{slot - 1}]: expected a number")
                if grade is Grade.NON_VITAL:
                    pb_bus = zone if slot == 1 else None
                    sb_bus = k + zone if slot == 2 else None
                else:
                    pb_bus, sb_bus = zone, k + zone
                loads.append(
                    LoadSpec(
                        id=len(loads),
                        zone=zone,
                        grade=grade,
                        slot=slot,
                        power=float(power),
                        weight=weights[int(grade) - 1],
                        pb_bus=pb_bus,
                        sb_bus=sb_bus,
                    )
                )

    generators = tuple(
        _generator(gtbl, f"generators[{i}]") for i, gtbl in enumerate(_array(doc, "generators"))
    )

    conv_tables = _array(doc, "converters")
    m = len(conv_tables)
    n = 2 * k + m
    converters = []
    tie_lines: list[LineSpec] = []
    for i, ctbl in enumerate(conv_tables):
        path = f"converters[{i}]"
        if not isinstance(ctbl, dict):
            raise ScenarioError(f"{path}: expected a table")
        bus = 2 * k + 1 + i
        ties_raw = ctbl.get("ties")
        if not isinstance(ties_raw, list) or not ties_raw:
            raise ScenarioError(f"{path}.ties: expected a non-empty list of bus numbers")
        ties = []
        for t in ties_raw:
            if not isinstance(t, int) or not 1 <= t <= 2 * k:
                raise ScenarioError(f"{path}.ties: {t!r} is not a PB/SB bus of this plant")
            ties.append(t)
        conv = ConverterSpec(
            id=_str(ctbl, "id", path),
            bus=bus,
            generator=_str(ctbl, "generator", path),
            ties=tuple(ties),
            ac_voltage=_num(ctbl, "ac_voltage", path),
            ac_angle=_num(ctbl, "ac_angle", path),
            p_out_min=_num(ctbl, "p_out_min", path),
            p_out_max=_num(ctbl, "p_out_max", path),
            const_loss=_num(ctbl, "const_loss", path),
            linear_loss=_num(ctbl, "linear_loss", path),
            quad_loss=_num(ctbl, "quad_loss", path),
            current_max=_num(ctbl, "current_max", path),
            line_resistance=_num(ctbl, "line_resistance", path),
            line_reactance=_num(ctbl, "line_reactance", path),
            q_demand=_opt(ctbl, "q_demand", (int, float), 0.0, path),
        )
        converters.append(conv)
        for t in ties:
            tie_lines.append(
                LineSpec(
                    id=f"tie:{conv.id}-{t}",
                    bus_i=bus,
                    bus_j=t,
                    resistance=tie_r,
                    current_max=tie_imax,
                    kind="tie",
                )
            )

    buses = tuple(
        [BusSpec(id=z, kind="pb", zone=z) for z in range(1, k + 1)]
        + [BusSpec(id=k + z, kind="sb", zone=z) for z in range(1, k + 1)]
        + [BusSpec(id=2 * k + 1 + i, kind="converter", zone=None) for i in range(m)]
    )

    segments: list[LineSpec] = []
    for z in range(1, k):
        segments.append(
            LineSpec(
                id=segment_id("pb", z),
                bus_i=z,
                bus_j=z + 1,
                resistance=seg_r,
                current_max=seg_imax,
                kind="segment",
            )
        )
    for z in range(1, k):
        segments.append(
            LineSpec(
                id=segment_id("sb", z),
                bus_i=k + z,
                bus_j=k + z + 1,
                resistance=seg_r,
                current_max=seg_imax,
                kind="segment",
            )
        )

    initial_tbl = doc.get("initial", {})
    if not isinstance(initial_tbl, dict):
        raise ScenarioError("initial: expected a table")
    sb_select_raw = initial_tbl.get("sb_select", [0] * k)
    if not isinstance(sb_select_raw, list) or len(sb_select_raw) != k:
        raise ScenarioError("initial.sb_select: expected one 0/1 entry per zone")

    try:
        return SystemSpec(
            name=name,
            zone_count=k,
            nominal_dc_voltage=nominal,
            dc_voltage_min=v_min,
            dc_voltage_max=v_max,
            buses=buses,
            lines=tuple(segments + tie_lines),
            generators=generators,
            converters=tuple(converters),
            loads=tuple(loads),
            weights=weights,
            initial_sb_select=tuple(int(v) for v in sb_select_raw),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"inconsistent scenario document: {exc}") from exc


def _generator(gtbl: Any, path: str) -> GeneratorSpec:
    if not isinstance(gtbl, dict):
        raise ScenarioError(f"{path}: expected a table")
    return GeneratorSpec(
        id=_str(gtbl, "id", path),
        p_min=_num(gtbl, "p_min", path),
        p_max=_num(gtbl, "p_max", path),
        q_min=_num(gtbl, "q_min", path),
        q_max=_num(gtbl, "q_max", path),
        voltage_min=_num(gtbl, "voltage_min", path),
        voltage_max=_num(gtbl, "voltage_max", path),
        angle_min=_num(gtbl, "angle_min", path),
        angle_max=_num(gtbl, "angle_max", path),
        current_max=_num(gtbl, "current_max", path),
    )


# ====================== FIELD HELPERS ======================


def _table(doc: dict[str, Any], key: str) -> dict[str, Any]:
    value = doc.get(key)
    if not isinstance(value, dict):
        raise ScenarioError(f"{key}: required table is missing")
    return value


def _array(doc: dict[str, Any], key: str) -> list[Any]:
    value = doc.get(key)
    if not isinstance(value, list) or not value:
        raise ScenarioError(f"{key}: required non-empty array of tables is missing")
    return value


def _num(tbl: dict[str, Any], key: str, path: str) -> float:
    value = tbl.get(key)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioError(f"{path}.{key}: expected a number, got {value!r}")
    return float(value)


def _str(tbl: dict[str, Any], key: str, path: str) -> str:
    value = tbl.get(key)
    if not isinstance(value, str) or not value:
        raise ScenarioError(f"{path}.{key}: expected a non-empty string")
    return value


def _opt(tbl: dict[str, Any], key: str, types: Any, default: Any, path: str) -> Any:
    value = tbl.get(key)
    if value is None:
        return default
    if not isinstance(value, types) or isinstance(value, bool):
        raise ScenarioError(f"{path}.{key}: unexpected type {type(value).__name__}")
    return float(value) if types == (int, float) else value
