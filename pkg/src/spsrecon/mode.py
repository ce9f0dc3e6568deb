"""Fault-mode distinction and redundancy pre-assignment.

Faults on the port and starboard longitudinal buses interact: a fault on
one side only reroutes power, while coordinated faults on both sides can
split the plant into electrically separate parts. Before any load-switch
search runs, the engine classifies the faulted topology into one of three
modes and pins down every redundancy selector the topology has already
decided, so the search only explores choices that still matter.

Modes
-----
NON_ISLAND   At most one side of the plant carries faults. Every zone can
             still reach every source; redundancy switching is an
             optimization, not a necessity.
SEMI_ISLAND  Both sides carry faults but at least one zone bridges the
             resulting parts (its port and starboard buses sit in
             different energized parts). Those coupled zones decide, via
             their redundancy selector, which part each of their loads
             joins.
ISLAND       Both sides carry faults and no zone bridges the parts; the
             plant operates as independent islands and the selectors
             that still have both buses alive keep their pre-fault value.

A zone with exactly one energized side has no choice in any mode: its
selector is pinned to the live side so loads that can run are not cut off
by a stale selector pointing into a dead bus.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

from .model import DcAdmittance, FaultSet, SystemSpec, build_admittance


class Mode(Enum):
    """How the faulted plant hangs together."""

    NON_ISLAND = "non-island"
    SEMI_ISLAND = "semi-island"
    ISLAND = "island"


@dataclass(frozen=True)
class ModeContext:
    """Everything the search needs to know about one faulted topology.

    ``islands`` are the energized bus sets (each contains at least one
    converter); ``dead_buses`` are unreachable from every converter.
    ``pinned`` maps zone -> selector value (0 = port bus, 1 = starboard)
    for zones the topology has already decided; ``free_zones`` are the
    zones whose selector the search may still flip. Zones in neither are
    held at the scenario's initial selector value.
    """

    mode: Mode
    faults: FaultSet
    islands: tuple[frozenset[int], ...]
    dead_buses: frozenset[int]
    coupled_zones: frozenset[int]
    undamaged_zones: frozenset[int]
    pinned: dict[int, int]
    free_zones: frozenset[int]

    def part_of(self, bus: int) -> frozenset[int] | None:
        for island in self.islands:
            if bus in island:
                return island
        return None


def classify(spec: SystemSpec, faults: FaultSet, adm: DcAdmittance | None = None) -> ModeContext:
    """Classify a fault set and pre-assign the decided redundancy selectors."""
    faults.validate(spec)
    if adm is None:
        adm = build_admittance(spec, faults)

    pb_faulted = any(f.startswith("pb:") for f in faults)
    sb_faulted = any(f.startswith("sb:") for f in faults)

    conv_buses = set(spec.converter_buses)
    islands = tuple(c for c in adm.components if c & conv_buses)
    dead = frozenset(b.id for b in spec.buses if not any(b.id in isl for isl in islands))

    def part_index(bus: int) -> int | None:
        for i, island in enumerate(islands):
            if bus in island:
                return i
        return None

    coupled: set[int] = set()
    undamaged: set[int] = set()
    pinned: dict[int, int] = {}
    for zone in range(1, spec.zone_count + 1):
        pb = part_index(spec.pb_bus(zone))
        sb = part_index(spec.sb_bus(zone))
        if pb is not None and sb is not None:
            undamaged.add(zone)
            if pb != sb:
                coupled.add(zone)
        elif pb is not None:
            pinned[zone] = 0
        elif sb is not None:
            pinned[zone] = 1
        # both sides dead: nothing to pin, nothing can be served there

    if pb_faulted and sb_faulted:
        mode = Mode.SEMI_ISLAND if coupled else Mode.ISLAND
    else:
        mode = Mode.NON_ISLAND

    if mode is Mode.NON_ISLAND:
        free = frozenset(undamaged)
    elif mode is Mode.SEMI_ISLAND:
        free = frozenset(coupled)
    else:
        free = frozenset()

    return ModeContext(
        mode=mode,
        faults=faults,
        islands=islands,
        dead_buses=dead,
        coupled_zones=frozenset(coupled),
        undamaged_zones=frozenset(undamaged),
        pinned=pinned,
        free_zones=free,
    )


def redundancy_assignments(
    ctx: ModeContext, spec: SystemSpec, initial: tuple[int, ...] | None = None
) -> tuple[tuple[int, ...], ...]:
    """All selector vectors the search must consider, deterministic order.

    The base vector is the scenario's initial assignment with the pinned
    zones overwritten. Free zones are enumerated with their initial value
    first, so the first entry is always the least-disruptive assignment.
    """
    base = list(spec.initial_sb_select if initial is None else initial)
    for zone, side in ctx.pinned.items():
        base[zone - 1] = side
    free = sorted(ctx.free_zones)
    if not free:
        return (tuple(base),)
    choices = [(base[z - 1], 1 - base[z - 1]) for z in free]
    result = []
    for combo in itertools.product(*choices):
        vec = list(base)
        for zone, side in zip(free, combo):
            vec[zone - 1] = side
        result.append(tuple(vec))
    return tuple(result)
