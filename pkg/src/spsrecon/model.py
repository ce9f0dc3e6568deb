"""Domain model for a dual-bus multi-zone MVDC shipboard power plant.

The plant is organized in K longitudinal zones. Each zone owns one port-bus
(PB) node and one starboard-bus (SB) node; the PB nodes are chained fore to
aft, the SB nodes likewise, and M converter output buses tie the two chains
to the generator sets. Loads come in three grades (vital, semi-vital,
non-vital). Vital and semi-vital loads attach to both of their zone's buses
through a mutually exclusive redundancy switch pair; non-vital loads are
hard-wired to one side.

Bus numbering convention (validated here and relied on elsewhere):

    PB buses        1 .. K
    SB buses        K+1 .. 2K
    converter buses 2K+1 .. N,   N = 2K + M

This module defines the immutable specification types, the switch/fault
value types, DC admittance construction, and the weighted restoration
objective. All quantities are base SI units: W, V, A, ohm, rad.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class ScenarioError(ValueError):
    """A scenario document or derived plant description is invalid."""


class Grade(IntEnum):
    """Load priority grade; lower value means higher priority."""

    VITAL = 1
    SEMI_VITAL = 2
    NON_VITAL = 3


GRADES = (Grade.VITAL, Grade.SEMI_VITAL, Grade.NON_VITAL)

_GRADE_LETTER = {Grade.VITAL: "V", Grade.SEMI_VITAL: "S", Grade.NON_VITAL: "N"}


# ====================== SPECIFICATION TYPES ======================


@dataclass(frozen=True)
class BusSpec:
    id: int
    kind: str  # "pb" | "sb" | "converter"
    zone: int | None  # owning zone for pb/sb buses, None for converter buses


@dataclass(frozen=True)
class LineSpec:
    id: str  # canonical id, e.g. "pb:1-2", "sb:3-4", "tie:MG-1"
    bus_i: int
    bus_j: int
    resistance: float  # [ohm], > 0
    current_max: float  # ampacity [A]
    kind: str  # "segment" | "tie"

    @property
    def faultable(self) -> bool:
        # Only inter-zone bus segments are treated as faultable elements;
        # converter ties are switchgear-protected in this model.
        return self.kind == "segment"

    @property
    def conductance(self) -> float:
        return 1.0 / self.resistance


@dataclass(frozen=True)
class LoadSpec:
    id: int  # dense index 0..L-1, position in SystemSpec.loads
    zone: int
    grade: Grade
    slot: int  # 1 or 2; each zone carries two consumers per grade
    power: float  # rated draw [W]
    weight: float  # restoration priority weight [-]
    pb_bus: int | None  # port-side attachment bus
    sb_bus: int | None  # starboard-side attachment bus

    @property
    def name(self) -> str:
        """Human-oriented tag, e.g. ``z3:V1`` for zone 3's first vital load."""
        return f"z{self.zone}:{_GRADE_LETTER[self.grade]}{self.slot}"

    @property
    def switched(self) -> bool:
        """True when the attachment follows the zone redundancy switches."""
        return self.pb_bus is not None and self.sb_bus is not None

    def current(self, nominal_voltage: float) -> float:
        """Constant-current equivalent draw [A] at the DC nominal voltage."""
        return self.power / nominal_voltage


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    p_min: float  # active power window [W]
    p_max: float
    q_min: float  # reactive power window [var]
    q_max: float
    voltage_min: float  # stator terminal voltage window [V]
    voltage_max: float
    angle_min: float  # rotor angle window [rad]
    angle_max: float
    current_max: float  # stator line current limit [A]


@dataclass(frozen=True)
class ConverterSpec:
    id: str
    bus: int  # DC-side output bus
    generator: str  # feeding generator id
    ties: tuple[int, ...]  # PB/SB buses the output bus connects to
    ac_voltage: float  # AC terminal voltage magnitude [V]
    ac_angle: float  # AC terminal voltage angle [rad]
    p_out_min: float  # DC-side output power window [W]
    p_out_max: float
    const_loss: float  # conversion loss: constant term [W]
    linear_loss: float  # ... per-ampere term [W/A]
    quad_loss: float  # ... per-ampere-squared term [W/A^2]
    current_max: float  # AC-side current limit [A]
    line_resistance: float  # generator-to-converter line [ohm]
    line_reactance: float  # [ohm]
    q_demand: float = 0.0  # AC-side reactive demand [var]


@dataclass(frozen=True)
class SystemSpec:
    """Validated plant description. Immutable after construction."""

    name: str
    zone_count: int
    nominal_dc_voltage: float  # [V]
    dc_voltage_min: float  # bus voltage window [V]
    dc_voltage_max: float
    buses: tuple[BusSpec, ...]
    lines: tuple[LineSpec, ...]
    generators: tuple[GeneratorSpec, ...]
    converters: tuple[ConverterSpec, ...]
    loads: tuple[LoadSpec, ...]
    weights: tuple[float, float, float]  # (vital, semi-vital, non-vital)
    initial_sb_select: tuple[int, ...]  # initial S_S per zone; S_P = 1 - S_S

    def __post_init__(self) -> None:
        _validate_system(self)

    # ---- derived sizes ----

    @property
    def bus_count(self) -> int:
        return len(self.buses)

    @property
    def converter_count(self) -> int:
        return len(self.converters)

    @property
    def load_count(self) -> int:
        return len(self.loads)

    # ---- lookups ----

    def pb_bus(self, zone: int) -> int:
        return zone

    def sb_bus(self, zone: int) -> int:
        return self.zone_count + zone

    @property
    def converter_buses(self) -> tuple[int, ...]:
        return tuple(c.bus for c in self.converters)

    def converter_at(self, bus: int) -> ConverterSpec:
        for conv in self.converters:
            if conv.bus == bus:
                return conv
        raise KeyError(f"no converter on bus {bus}")

    def generator_of(self, conv: ConverterSpec) -> GeneratorSpec:
        for gen in self.generators:
            if gen.id == conv.generator:
                return gen
        raise KeyError(f"unknown generator {conv.generator!r}")

    def line_by_id(self, line_id: str) -> LineSpec:
        for line in self.lines:
            if line.id == line_id:
                return line
        raise KeyError(f"unknown line {line_id!r}")

    @property
    def faultable_lines(self) -> tuple[LineSpec, ...]:
        return tuple(line for line in self.lines if line.faultable)

    def loads_by_grade(self, grade: Grade) -> tuple[LoadSpec, ...]:
        return tuple(load for load in self.loads if load.grade == grade)

    def grade_weight(self, grade: Grade) -> float:
        return self.weights[int(grade) - 1]

    @property
    def total_load(self) -> float:
        """Sum of rated load powers [W]."""
        return sum(load.power for load in self.loads)


def _validate_system(spec: SystemSpec) -> None:
    k, m, n = spec.zone_count, len(spec.converters), len(spec.buses)
    if k < 1:
        raise ScenarioError("zone_count must be >= 1")
    if m < 1:
        raise ScenarioError("at least one converter is required")
    if n != 2 * k + m:
        raise ScenarioError(f"bus count {n} != 2*zones + converters = {2 * k + m}")
    if spec.nominal_dc_voltage <= 0:
        raise ScenarioError("nominal_dc_voltage must be positive")
    if not (0 < spec.dc_voltage_min < spec.dc_voltage_max):
        raise ScenarioError("dc voltage window must satisfy 0 < min < max")

    ids = [b.id for b in spec.buses]
    if ids != list(range(1, n + 1)):
        raise ScenarioError("bus ids must be contiguous 1..N in order")
    for bus in spec.buses:
        expected = "pb" if bus.id <= k else "sb" if bus.id <= 2 * k else "converter"
        if bus.kind != expected:
            raise ScenarioError(f"bus {bus.id}: kind {bus.kind!r}, expected {expected!r}")
        if bus.kind != "converter" and bus.zone != (bus.id - 1) % k + 1:
            raise ScenarioError(f"bus {bus.id}: zone {bus.zone} out of place")

    seen_lines: set[str] = set()
    for line in spec.lines:
        if line.id in seen_lines:
            raise ScenarioError(f"duplicate line id {line.id!r}")
        seen_lines.add(line.id)
        for end in (line.bus_i, line.bus_j):
            if not 1 <= end <= n:
                raise ScenarioError(f"line {line.id}: bus {end} does not exist")
        if line.bus_i == line.bus_j:
            raise ScenarioError(f"line {line.id}: degenerate endpoints")
        if line.resistance <= 0:
            raise ScenarioError(f"line {line.id}: resistance must be positive")
        if line.current_max <= 0:
            raise ScenarioError(f"line {line.id}: ampacity must be positive")
        if line.kind not in ("segment", "tie"):
            raise ScenarioError(f"line {line.id}: unknown kind {line.kind!r}")

    gen_ids = {g.id for g in spec.generators}
    if len(gen_ids) != len(spec.generators):
        raise ScenarioError("duplicate generator ids")
    for gen in spec.generators:
        if not (gen.p_min <= gen.p_max and gen.q_min <= gen.q_max):
            raise ScenarioError(f"generator {gen.id}: inverted power window")
        if not (0 < gen.voltage_min < gen.voltage_max):
            raise ScenarioError(f"generator {gen.id}: invalid voltage window")

    conv_buses = set()
    for conv in spec.converters:
        if conv.generator not in gen_ids:
            raise ScenarioError(f"converter {conv.id}: unknown generator {conv.generator!r}")
        bus = next((b for b in spec.buses if b.id == conv.bus), None)
        if bus is None or bus.kind != "converter":
            raise ScenarioError(f"converter {conv.id}: bus {conv.bus} is not a converter bus")
        if conv.bus in conv_buses:
            raise ScenarioError(f"converter {conv.id}: bus {conv.bus} already taken")
        conv_buses.add(conv.bus)
        if not (0 <= conv.p_out_min <= conv.p_out_max):
            raise ScenarioError(f"converter {conv.id}: invalid output window")
        if min(conv.const_loss, conv.linear_loss, conv.quad_loss) < 0:
            raise ScenarioError(f"converter {conv.id}: negative loss coefficient")
        if conv.ac_voltage <= 0:
            raise ScenarioError(f"converter {conv.id}: ac_voltage must be positive")

    w1, w2, w3 = spec.weights
    if not (w1 > w2 > w3 > 0):
        raise ScenarioError("weights must be strictly decreasing and positive")

    for position, load in enumerate(spec.loads):
        if load.id != position:
            raise ScenarioError(f"load {load.name}: id out of order")
        if not 1 <= load.zone <= k:
            raise ScenarioError(f"load {load.name}: zone out of range")
        if load.power <= 0:
            raise ScenarioError(f"load {load.name}: power must be positive")
        if load.weight != spec.grade_weight(load.grade):
            raise ScenarioError(f"load {load.name}: weight does not match grade weight")
        pb, sb = load.pb_bus, load.sb_bus
        if load.grade in (Grade.VITAL, Grade.SEMI_VITAL):
            if pb != load.zone or sb != k + load.zone:
                raise ScenarioError(f"load {load.name}: needs both zone-bus attachments")
        else:
            one_sided = (pb == load.zone and sb is None) or (pb is None and sb == k + load.zone)
            if not one_sided:
                raise ScenarioError(f"load {load.name}: non-vital loads attach to exactly one side")

    if len(spec.initial_sb_select) != k:
        raise ScenarioError("initial_sb_select must have one entry per zone")
    if any(v not in (0, 1) for v in spec.initial_sb_select):
        raise ScenarioError("initial_sb_select entries must be 0 or 1")


# ====================== SWITCH AND FAULT STATE ======================


@dataclass(frozen=True)
class SwitchConfig:
    """Full switch state: per-load service bits plus per-zone redundancy.

    ``sb_select[z]`` is the starboard-select switch of zone z+1; the port
    switch is its complement, so the mutual-exclusion constraint holds by
    construction.
    """

    loads_on: tuple[int, ...]  # s_l per load, 0/1
    sb_select: tuple[int, ...]  # S_S per zone, 0/1

    def __post_init__(self) -> None:
        if any(v not in (0, 1) for v in self.loads_on):
            raise ScenarioError("loads_on entries must be 0 or 1")
        if any(v not in (0, 1) for v in self.sb_select):
            raise ScenarioError("sb_select entries must be 0 or 1")

    def check_shape(self, spec: SystemSpec) -> None:
        if len(self.loads_on) != spec.load_count:
            raise ScenarioError(
                f"loads_on has {len(self.loads_on)} entries, plant has {spec.load_count} loads"
            )
        if len(self.sb_select) != spec.zone_count:
            raise ScenarioError(
                f"sb_select has {len(self.sb_select)} entries, plant has {spec.zone_count} zones"
            )

    def pb_select(self, zone: int) -> int:
        return 1 - self.sb_select[zone - 1]

    def with_loads(self, loads_on: Iterable[int]) -> "SwitchConfig":
        return SwitchConfig(tuple(int(v) for v in loads_on), self.sb_select)

    def with_sb_select(self, sb_select: Iterable[int]) -> "SwitchConfig":
        return SwitchConfig(self.loads_on, tuple(int(v) for v in sb_select))


def all_on_config(spec: SystemSpec) -> SwitchConfig:
    """Every load serviced, redundancy at the plant's initial assignment."""
    return SwitchConfig((1,) * spec.load_count, spec.initial_sb_select)


def load_bus(spec: SystemSpec, config: SwitchConfig, load: LoadSpec) -> int:
    """Attachment bus of ``load`` under ``config``'s redundancy switches."""
    if not load.switched:
        bus = load.pb_bus if load.pb_bus is not None else load.sb_bus
        assert bus is not None
        return bus
    if config.sb_select[load.zone - 1]:
        assert load.sb_bus is not None
        return load.sb_bus
    assert load.pb_bus is not None
    return load.pb_bus


def bus_load_currents(spec: SystemSpec, config: SwitchConfig) -> np.ndarray:
    """Per-bus constant-current demand I_b [A], shape (N,), 0-indexed by bus-1."""
    config.check_shape(spec)
    currents = np.zeros(spec.bus_count)
    for load, on in zip(spec.loads, config.loads_on):
        if on:
            currents[load_bus(spec, config, load) - 1] += load.current(spec.nominal_dc_voltage)
    return currents


_FAULT_TOKEN = re.compile(r"^(pb|sb):(\d+)-(\d+)$")


@dataclass(frozen=True)
class FaultSet:
    """Set of faulted (out of service) line ids, canonically normalized."""

    lines: frozenset[str]

    @classmethod
    def none(cls) -> "FaultSet":
        return cls(frozenset())

    @classmethod
    def of(cls, *line_ids: str) -> "FaultSet":
        return cls(frozenset(_normalize_fault_token(t) for t in line_ids))

    @classmethod
    def parse(cls, text: str) -> "FaultSet":
        """Parse a comma-separated fault list, e.g. ``"pb:2-3,sb:4-5"``."""
        tokens = [t.strip() for t in text.split(",") if t.strip()]
        return cls(frozenset(_normalize_fault_token(t) for t in tokens))

    def validate(self, spec: SystemSpec) -> None:
        known = {line.id: line for line in spec.lines}
        for line_id in self.lines:
            line = known.get(line_id)
            if line is None:
                raise ScenarioError(f"fault references unknown line {line_id!r}")
            if not line.faultable:
                raise ScenarioError(f"line {line_id!r} is not a faultable element")

    def sorted_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.lines))

    def __len__(self) -> int:
        return len(self.lines)

    def __iter__(self) -> Iterator[str]:
        return iter(self.lines)

    def __contains__(self, line_id: str) -> bool:
        return line_id in self.lines


def _normalize_fault_token(token: str) -> str:
    match = _FAULT_TOKEN.match(token.strip())
    if not match:
        raise ScenarioError(
            f"bad fault token {token!r}: expected pb:i-j or sb:i-j with zone numbers i, j"
        )
    side, a, b = match.group(1), int(match.group(2)), int(match.group(3))
    lo, hi = min(a, b), max(a, b)
    if hi != lo + 1:
        raise ScenarioError(f"bad fault token {token!r}: segments join adjacent zones")
    return f"{side}:{lo}-{hi}"


def segment_id(side: str, zone_lo: int) -> str:
    """Canonical id of the inter-zone segment between zone_lo and zone_lo+1."""
    return f"{side}:{zone_lo}-{zone_lo + 1}"


# ====================== DC ADMITTANCE ======================


@dataclass(frozen=True)
class DcAdmittance:
    """Laplacian bus admittance of the DC network with faulted lines removed.

    ``matrix[i, j]`` is indexed by bus-1. Diagonal entries hold the sum of
    incident line conductances; off-diagonals the negated line conductance.
    The matrix is frozen read-only. ``components`` lists the connected bus
    sets of the survived topology (singleton buses included).
    """

    matrix: np.ndarray
    faults: FaultSet
    intact_lines: tuple[LineSpec, ...]
    components: tuple[frozenset[int], ...]

    @property
    def bus_count(self) -> int:
        return self.matrix.shape[0]

    def component_of(self, bus: int) -> frozenset[int]:
        for comp in self.components:
            if bus in comp:
                return comp
        raise KeyError(f"bus {bus} not in any component")


def build_admittance(spec: SystemSpec, faults: FaultSet) -> DcAdmittance:
    """Assemble the DC Laplacian with ``faults`` removed.

    Faulted line ids must exist and be faultable. Rows and columns of a
    Laplacian sum to zero by construction; a fault zeroes exactly the four
    entries of its line.
    """
    faults.validate(spec)
    n = spec.bus_count
    matrix = np.zeros((n, n))
    intact = []
    for line in spec.lines:
        if line.id in faults:
            continue
        intact.append(line)
        i, j = line.bus_i - 1, line.bus_j - 1
        y = line.conductance
        matrix[i, i] += y
        matrix[j, j] += y
        matrix[i, j] -= y
        matrix[j, i] -= y
    matrix.setflags(write=False)

    adjacency = csr_matrix((np.abs(matrix) > 0).astype(np.int8))
    count, labels = connected_components(adjacency, directed=False)
    comps = tuple(
        frozenset(int(b) + 1 for b in np.flatnonzero(labels == c)) for c in range(count)
    )
    return DcAdmittance(matrix=matrix, faults=faults, intact_lines=tuple(intact), components=comps)


# ====================== LIMIT REPORTS ======================


@dataclass(frozen=True)
class LimitViolation:
    kind: str  # e.g. "dc_voltage", "dc_current", "gen_active_power"
    element: str  # bus number, line id, generator id, ...
    value: float
    low: float
    high: float

    def __str__(self) -> str:
        return f"{self.kind}[{self.element}] = {self.value:.6g} outside [{self.low:.6g}, {self.high:.6g}]"


@dataclass(frozen=True)
class LimitReport:
    """Outcome of a feasibility check: per-quantity window verdicts."""

    ok: bool
    violations: tuple[LimitViolation, ...]
    checked: int  # number of individual window checks performed

    @staticmethod
    def from_violations(violations: Iterable[LimitViolation], checked: int) -> "LimitReport":
        vtuple = tuple(violations)
        return LimitReport(ok=not vtuple, violations=vtuple, checked=checked)


# ====================== RESTORATION OBJECTIVE ======================


@dataclass(frozen=True)
class ObjectiveValue:
    weighted: float  # priority-weighted restored power [W-weighted]
    raw: float  # plain restored power [W]


def weighted_objective(spec: SystemSpec, config: SwitchConfig) -> ObjectiveValue:
    """Weighted and raw restored power of a switch configuration.

    Both figures use rated load powers; bus voltage deviations do not feed
    back into the restoration metric.
    """
    config.check_shape(spec)
    weighted = 0.0
    raw = 0.0
    for load, on in zip(spec.loads, config.loads_on):
        if on:
            weighted += load.weight * load.power
            raw += load.power
    return ObjectiveValue(weighted=weighted, raw=raw)
