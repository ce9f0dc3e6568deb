"""DC power flow over the faulted plant topology.

The network equation in current form is ``Y U = i`` with the Laplacian bus
admittance Y: load buses draw their constant-current equivalent (row value
-I_b), converter buses inject power (row value P_oc / U). Per energized
island (a connected component holding at least one converter bus) one
converter bus acts as the voltage reference at nominal voltage; its output
power is recovered from its own row after the other rows are solved.

Because the load rows do not depend on voltage, the reduced system factors
once per topology and the only non-linearity is the handful of converter
rows. Each solve is therefore one back-substitution for the load pattern
plus a scalar fixed point on the converter currents, which keeps candidate
evaluation inside the search loops cheap.

De-energized buses (components without a converter) are reported with zero
voltage; a serviced load attached to one is a hard error, the caller decides
whether that means "infeasible candidate" or "bad input".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .model import (
    DcAdmittance,
    LimitReport,
    LimitViolation,
    SwitchConfig,
    SystemSpec,
    bus_load_currents,
    load_bus,
)

VOLTAGE_TOL_REL = 1e-10  # fixed-point convergence, relative to nominal
MAX_ITERATIONS = 100
RESIDUAL_BASE_POWER = 1.0e6  # W; p.u. current base is this over nominal voltage


class PowerFlowError(RuntimeError):
    """The fixed point diverged or exceeded the iteration cap."""


class DisconnectedLoadError(PowerFlowError):
    """A serviced load sits on a bus no converter can reach."""


@dataclass(frozen=True)
class DcSolution:
    """Network state after a converged DC solve.

    ``voltages`` holds 0.0 for de-energized buses. ``converter_power`` maps
    converter bus -> DC-side output P_oc [W], slack entries recovered from
    the slack row. ``branch_currents`` maps intact line id -> signed current
    [A], positive from the line's bus_i to bus_j. ``residual`` is the worst
    KCL mismatch over energized buses in per-unit (1 MW / nominal volt base).
    """

    voltages: np.ndarray
    energized: np.ndarray
    load_currents: np.ndarray
    converter_power: dict[int, float]
    slacks: tuple[int, ...]
    islands: tuple[frozenset[int], ...]
    branch_currents: dict[str, float]
    iterations: int
    residual: float

    def voltage(self, bus: int) -> float:
        return float(self.voltages[bus - 1])

    def is_energized(self, bus: int) -> bool:
        return bool(self.energized[bus - 1])


class _IslandOperator:
    """Factored solver for one energized island."""

    def __init__(self, spec: SystemSpec, matrix: np.ndarray, island: frozenset[int], slack: int):
        self.spec = spec
        self.slack = slack
        self.buses = tuple(sorted(island))
        self.reduced = tuple(b for b in self.buses if b != slack)
        self.converters = tuple(
            c for c in spec.converters if c.bus in island and c.bus != slack
        )
        self._row_of = {bus: row for row, bus in enumerate(self.reduced)}
        red_ix = [b - 1 for b in self.reduced]
        self._lu = lu_factor(matrix[np.ix_(red_ix, red_ix)])
        self._y_red_slack = matrix[red_ix, slack - 1]
        self._slack_row = matrix[slack - 1]
        self._conv_cols = {
            c.bus: lu_solve(self._lu, _unit(len(self.reduced), self._row_of[c.bus]))
            for c in self.converters
        }

    def solve(
        self, load_currents: np.ndarray, injections: Mapping[int, float]
    ) -> tuple[np.ndarray, float, int]:
        """Solve this island for the given bus current draws and converter
        output powers; returns (full-size voltage vector patch, slack P_oc,
        iterations). Only this island's entries of the returned vector are
        meaningful."""
        nominal = self.spec.nominal_dc_voltage
        rhs = -self._y_red_slack * nominal
        for bus in self.reduced:
            draw = load_currents[bus - 1]
            if draw:
                rhs[self._row_of[bus]] -= draw
        base = lu_solve(self._lu, rhs)

        u_red = base
        iterations = 0
        if self.converters:
            power = np.array([injections.get(c.bus, 0.0) for c in self.converters])
            cols = np.column_stack([self._conv_cols[c.bus] for c in self.converters])
            rows = [self._row_of[c.bus] for c in self.converters]
            x = power / nominal
            u_prev = None
            for iterations in range(1, MAX_ITERATIONS + 1):
                u_red = base + cols @ x
                u_conv = u_red[rows]
                if not np.all(np.isfinite(u_red)) or np.any(u_conv <= 0.1 * nominal):
                    raise PowerFlowError("converter bus voltage collapsed during fixed point")
                if u_prev is not None and np.max(np.abs(u_red - u_prev)) <= VOLTAGE_TOL_REL * nominal:
                    break
                u_prev = u_red
                x = power / u_conv
            else:
                raise PowerFlowError(f"no convergence within {MAX_ITERATIONS} iterations")

        voltages = np.zeros(self.spec.bus_count)
        for bus, value in zip(self.reduced, u_red):
            voltages[bus - 1] = value
        voltages[self.slack - 1] = nominal
        slack_power = nominal * float(self._slack_row @ voltages)
        return voltages, slack_power, iterations


def _unit(n: int, index: int) -> np.ndarray:
    e = np.zeros(n)
    e[index] = 1.0
    return e


class NetworkOperator:
    """Reusable multi-island solver for one faulted topology.

    Splits the plant into energized islands and dead buses once, factors
    each island, and then serves any number of switch configurations. The
    slack of an island is its highest-rated converter (ties to the lowest
    bus number), chosen from rated output windows so the pick is stable
    while effective capacities move.
    """

    def __init__(self, spec: SystemSpec, adm: DcAdmittance):
        self.spec = spec
        self.adm = adm
        conv_buses = set(spec.converter_buses)
        self.islands = tuple(c for c in adm.components if c & conv_buses)
        self.dead_buses = frozenset(
            b.id for b in spec.buses if not any(b.id in isl for isl in self.islands)
        )
        self.slacks = tuple(
            max(
                (c for c in spec.converters if c.bus in island),
                key=lambda c: (c.p_out_max, -c.bus),
            ).bus
            for island in self.islands
        )
        self._operators = tuple(
            _IslandOperator(spec, adm.matrix, island, slack)
            for island, slack in zip(self.islands, self.slacks)
        )

    def island_of(self, bus: int) -> frozenset[int] | None:
        for island in self.islands:
            if bus in island:
                return island
        return None

    def island_demand(self, config: SwitchConfig) -> dict[frozenset[int], float]:
        """Nominal rated demand [W] of serviced loads per energized island."""
        demand = {island: 0.0 for island in self.islands}
        for load, on in zip(self.spec.loads, config.loads_on):
            if not on:
                continue
            island = self.island_of(load_bus(self.spec, config, load))
            if island is not None:
                demand[island] += load.power
        return demand

    def dispatch(
        self, config: SwitchConfig, caps: Mapping[str, float] | None = None
    ) -> dict[int, float]:
        """Output power setpoints for the non-slack converters.

        Every non-slack converter takes min(effective cap, share of the
        island demand still unassigned); the slack absorbs the remainder.
        The assignable demand is scaled by voltage_min/nominal so the slack
        can never be pushed below zero by constant-current loads running
        under nominal voltage.
        """
        phi = self.spec.dc_voltage_min / self.spec.nominal_dc_voltage
        demand = self.island_demand(config)
        injections: dict[int, float] = {}
        for island, slack in zip(self.islands, self.slacks):
            remaining = phi * demand[island]
            others = sorted(
                (c for c in self.spec.converters if c.bus in island and c.bus != slack),
                key=lambda c: (-c.p_out_max, c.bus),
            )
            for conv in others:
                cap = conv.p_out_max if caps is None else caps.get(conv.id, conv.p_out_max)
                alloc = max(conv.p_out_min, min(cap, remaining))
                injections[conv.bus] = alloc
                remaining = max(0.0, remaining - alloc)
        return injections

    def solve(
        self,
        config: SwitchConfig,
        injections: Mapping[int, float] | None = None,
        caps: Mapping[str, float] | None = None,
    ) -> DcSolution:
        """Solve all islands for one switch configuration.

        ``injections`` overrides the dispatch rule for non-slack converters
        (missing entries default to zero output).
        """
        spec = self.spec
        load_currents = bus_load_currents(spec, config)
        dead_draw = [
            load.name
            for load, on in zip(spec.loads, config.loads_on)
            if on and load_bus(spec, config, load) in self.dead_buses
        ]
        if dead_draw:
            raise DisconnectedLoadError(
                "serviced loads on de-energized buses: " + ", ".join(dead_draw)
            )

        if injections is None:
            injections = self.dispatch(config, caps)

        voltages = np.zeros(spec.bus_count)
        energized = np.zeros(spec.bus_count, dtype=bool)
        converter_power: dict[int, float] = {
            bus: float(p) for bus, p in injections.items()
        }
        iterations = 0
        for operator, island, slack in zip(self._operators, self.islands, self.slacks):
            patch, slack_power, iters = operator.solve(load_currents, injections)
            for bus in island:
                voltages[bus - 1] = patch[bus - 1]
                energized[bus - 1] = True
            converter_power[slack] = slack_power
            iterations = max(iterations, iters)

        branch_currents: dict[str, float] = {}
        for line in self.adm.intact_lines:
            if energized[line.bus_i - 1] and energized[line.bus_j - 1]:
                drop = voltages[line.bus_i - 1] - voltages[line.bus_j - 1]
                branch_currents[line.id] = drop / line.resistance

        voltages.setflags(write=False)
        energized.setflags(write=False)
        load_currents.setflags(write=False)
        solution = DcSolution(
            voltages=voltages,
            energized=energized,
            load_currents=load_currents,
            converter_power=converter_power,
            slacks=self.slacks,
            islands=self.islands,
            branch_currents=branch_currents,
            iterations=iterations,
            residual=0.0,
        )
        return _with_residual(spec, self.adm, solution)


def _with_residual(spec: SystemSpec, adm: DcAdmittance, sol: DcSolution) -> DcSolution:
    base_current = RESIDUAL_BASE_POWER / spec.nominal_dc_voltage
    flow = adm.matrix @ sol.voltages
    worst = 0.0
    for bus in range(1, spec.bus_count + 1):
        if not sol.energized[bus - 1]:
            continue
        expected = -sol.load_currents[bus - 1]
        if bus in sol.converter_power:
            expected += sol.converter_power[bus] / sol.voltages[bus - 1]
        worst = max(worst, abs(flow[bus - 1] - expected))
    return DcSolution(
        voltages=sol.voltages,
        energized=sol.energized,
        load_currents=sol.load_currents,
        converter_power=sol.converter_power,
        slacks=sol.slacks,
        islands=sol.islands,
        branch_currents=sol.branch_currents,
        iterations=sol.iterations,
        residual=worst / base_current,
    )


# ====================== PUBLIC ENTRY POINTS ======================


def solve_network(
    spec: SystemSpec,
    adm: DcAdmittance,
    config: SwitchConfig,
    injections: Mapping[int, float] | None = None,
    caps: Mapping[str, float] | None = None,
) -> DcSolution:
    """One-shot multi-island solve (builds and discards the factorization)."""
    return NetworkOperator(spec, adm).solve(config, injections=injections, caps=caps)


def solve_dc(
    adm: DcAdmittance,
    spec: SystemSpec,
    config: SwitchConfig,
    injections: Mapping[int, float],
    slack: int,
) -> DcSolution:
    """Single-island solve with an explicit slack bus.

    Every serviced load must live in the slack's island; other converter
    buses in that island inject the given powers. Use `solve_network` for
    faulted topologies that split the plant.
    """
    if slack not in spec.converter_buses:
        raise ValueError(f"slack bus {slack} carries no converter")
    operator = NetworkOperator(spec, adm)
    island = operator.island_of(slack)
    if island is None:
        raise PowerFlowError(f"slack bus {slack} is de-energized")
    outside = [
        load.name
        for load, on in zip(spec.loads, config.loads_on)
        if on and load_bus(spec, config, load) not in island
    ]
    if outside:
        raise DisconnectedLoadError(
            "serviced loads outside the slack island: " + ", ".join(outside)
        )
    # Re-slack the single island as requested, keep other islands unloaded.
    solo = _IslandOperator(spec, adm.matrix, island, slack)
    load_currents = bus_load_currents(spec, config)
    patch, slack_power, iterations = solo.solve(load_currents, injections)
    voltages = np.zeros(spec.bus_count)
    energized = np.zeros(spec.bus_count, dtype=bool)
    for bus in island:
        voltages[bus - 1] = patch[bus - 1]
        energized[bus - 1] = True
    converter_power = {bus: float(p) for bus, p in injections.items() if bus in island}
    converter_power[slack] = slack_power
    branch_currents = {}
    for line in adm.intact_lines:
        if energized[line.bus_i - 1] and energized[line.bus_j - 1]:
            drop = voltages[line.bus_i - 1] - voltages[line.bus_j - 1]
            branch_currents[line.id] = drop / line.resistance
    voltages.setflags(write=False)
    energized.setflags(write=False)
    load_currents.setflags(write=False)
    solution = DcSolution(
        voltages=voltages,
        energized=energized,
        load_currents=load_currents,
        converter_power=converter_power,
        slacks=(slack,),
        islands=(island,),
        branch_currents=branch_currents,
        iterations=iterations,
        residual=0.0,
    )
    return _with_residual(spec, adm, solution)


def check_dc_limits(spec: SystemSpec, sol: DcSolution) -> LimitReport:
    """Bus-voltage and line-current windows over the energized network."""
    violations: list[LimitViolation] = []
    checked = 0
    for bus in range(1, spec.bus_count + 1):
        if not sol.energized[bus - 1]:
            continue
        checked += 1
        u = sol.voltages[bus - 1]
        if not spec.dc_voltage_min <= u <= spec.dc_voltage_max:
            violations.append(
                LimitViolation(
                    kind="dc_voltage",
                    element=str(bus),
                    value=u,
                    low=spec.dc_voltage_min,
                    high=spec.dc_voltage_max,
                )
            )
    for line in spec.lines:
        current = sol.branch_currents.get(line.id)
        if current is None:
            continue
        checked += 1
        if abs(current) > line.current_max:
            violations.append(
                LimitViolation(
                    kind="dc_current",
                    element=line.id,
                    value=abs(current),
                    low=0.0,
                    high=line.current_max,
                )
            )
    return LimitReport.from_violations(violations, checked)
