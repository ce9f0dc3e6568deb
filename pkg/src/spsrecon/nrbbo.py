"""Reconfiguration engine: converter physics wrapped around the search.

The inner search works against a DC model in which each converter is an
ideal source limited by an effective output cap. The outer loop closes
the loop with the AC side: after the search settles, every converter's
operating point is solved exactly (conversion loss, generator line
drop, generator limits), the effective caps are re-derived from the
resulting losses and machine limits, and the search reruns against the
tightened caps. The loop ends when the AC checks pass and the loss
estimates have stopped moving.

The engine first classifies the faulted topology (see ``mode``): dead
zones force their redundancy selectors, and only the selectors the
topology leaves genuinely open are enumerated. A fractional-knapsack
upper bound prunes selector combinations that cannot beat the best one
already searched, and each energized island is searched independently.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .bbo import (
    BboParams,
    CandidateEvaluator,
    EvalOutcome,
    LayerOutcome,
    SearchOutcome,
    island_load_ids,
    layered_search,
)
from .converter import (
    ConverterSolve,
    ConverterSolveError,
    GeneratorState,
    check_ac_limits,
    generator_state,
    solve_converter_nr,
)
from .dcflow import DcSolution, NetworkOperator, check_dc_limits
from .mode import Mode, ModeContext, classify, redundancy_assignments
from .model import (
    FaultSet,
    Grade,
    LimitReport,
    ObjectiveValue,
    SwitchConfig,
    SystemSpec,
    build_admittance,
    load_bus,
    weighted_objective,
)

__all__ = [
    "AuditReport",
    "IslandSearchStats",
    "OuterIteration",
    "ReconfigError",
    "ReconfigResult",
    "audit",
    "reconfigure",
    "run_outer",
    "start_layer",
]

OUTER_MAX_ITERATIONS = 10
# outer loop convergence threshold on the loss estimates [W]
LOSS_TOLERANCE = 1.0e3


class ReconfigError(RuntimeError):
    """The engine could not produce any feasible operating point."""


@dataclass(frozen=True)
class IslandSearchStats:
    """Telemetry of the layered search on one island (best combo only)."""

    sb_select: tuple[int, ...]
    island_slack: int
    start_layer: int
    layers: tuple[LayerOutcome, ...]


@dataclass(frozen=True)
class InnerStep:
    """One full pass of an inner search across selector combinations."""

    config: SwitchConfig
    outcome: EvalOutcome
    stats: tuple[IslandSearchStats, ...]
    combos_evaluated: int
    combos_pruned: int
    warm: object | None


@dataclass(frozen=True)
class OuterIteration:
    """Caps, search result and AC verdict of one outer pass."""

    index: int
    caps: tuple[tuple[str, float], ...]
    best_weighted: float
    best_raw: float
    ac_ok: bool
    delta_loss: float
    combos_evaluated: int
    combos_pruned: int
    evaluations: int


@dataclass(frozen=True)
class ReconfigResult:
    """Complete reconfiguration answer with its physics audit trail."""

    algorithm: str
    feasible: bool
    converged: bool
    mode: Mode
    faults: FaultSet
    config: SwitchConfig
    objective: ObjectiveValue
    dc: DcSolution
    converter_solves: dict[str, ConverterSolve]
    generator_states: dict[str, GeneratorState]
    dc_limits: LimitReport
    ac_limits: LimitReport
    vital_fully_serviced: bool
    unreachable_loads: tuple[str, ...]
    outer_iterations: int
    iterations: tuple[OuterIteration, ...]
    combos_considered: int
    layer_stats: tuple[IslandSearchStats, ...]
    evaluations: int
    seed: int
    wall_clock_s: float

    @property
    def restored_power(self) -> float:
        """Rated power of the serviced loads [W]."""
        return self.objective.raw

    @property
    def partially_restorable(self) -> bool:
        """True when the scenario left some vital load unserviced."""
        return not self.vital_fully_serviced


# ---------------------------------------------------------------------------
# helpers shared by the engine and the baseline solvers


def start_layer(
    spec: SystemSpec,
    evaluator: CandidateEvaluator,
    sb_select: Sequence[int],
    island: frozenset[int],
) -> int:
    """Deepest layer whose shallower layers are safely assumed all-on.

    Works down from the deepest layer: a layer can be the starting point
    only if the loads above it fit the island's effective capacity
    (a necessary condition, since delivered power is at least
    v_min/v_nominal of rated) and actually pass the full DC screen when
    they are all on. Layer 1 always qualifies because "nothing assumed
    on" is feasible by construction.
    """
    sb_select = tuple(sb_select)
    ids = island_load_ids(spec, evaluator.operator, sb_select, island)
    phi = spec.dc_voltage_min / spec.nominal_dc_voltage
    budget = sum(
        evaluator.slack_cap(c.bus) for c in spec.converters if c.bus in island
    ) / phi
    for g in (int(Grade.NON_VITAL), int(Grade.SEMI_VITAL)):
        below = [i for i in ids if int(spec.loads[i].grade) < g]
        if sum(spec.loads[i].power for i in below) > budget:
            continue
        bits = [0] * spec.load_count
        for i in below:
            bits[i] = 1
        probe = SwitchConfig(loads_on=tuple(bits), sb_select=sb_select)
        if evaluator.evaluate(probe).feasible:
            return g
    return int(Grade.VITAL)


def combo_upper_bound(
    spec: SystemSpec,
    evaluator: CandidateEvaluator,
    sb_select: Sequence[int],
) -> float:
    """Optimistic weighted objective for one selector assignment.

    Fractional knapsack per island: loads sorted by weight (the value
    density of a load is exactly its grade weight), capacity equal to
    the island's summed caps divided by v_min/v_nominal. No feasible
    configuration under this assignment can beat it, so combinations
    whose bound falls below an already-achieved objective are skipped.
    """
    operator = evaluator.operator
    phi = spec.dc_voltage_min / spec.nominal_dc_voltage
    total = 0.0
    for island in operator.islands:
        ids = island_load_ids(spec, operator, sb_select, island)
        budget = sum(
            evaluator.slack_cap(c.bus) for c in spec.converters if c.bus in island
        ) / phi
        for i in sorted(ids, key=lambda i: int(spec.loads[i].grade)):
            load = spec.loads[i]
            take = min(load.power, budget)
            if take <= 0.0:
                break
            total += spec.grade_weight(load.grade) * take
            budget -= take
    return total


def _unreachable_loads(spec: SystemSpec, operator: NetworkOperator) -> tuple[str, ...]:
    """Loads that no selector assignment can attach to a live bus."""
    out = []
    for load in spec.loads:
        candidates = [b for b in (load.pb_bus, load.sb_bus) if b is not None]
        if all(b in operator.dead_buses for b in candidates):
            out.append(load.name)
    return tuple(out)


# ---------------------------------------------------------------------------
# outer loop


def run_outer(
    spec: SystemSpec,
    faults: FaultSet,
    inner: Callable[[CandidateEvaluator, int, object | None, int], InnerStep],
    algorithm: str,
    seed: int | None = None,
    max_iterations: int = OUTER_MAX_ITERATIONS,
) -> ReconfigResult:
    """Drive any inner search through the physics loop.

    ``inner`` is called once per outer iteration with the evaluator
    bound to the current effective caps, the iteration number, the
    previous iteration's warm-start payload, and the root seed; it must
    return a feasible configuration for the faulted topology.
    """
    t_start = time.perf_counter()
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    faults.validate(spec)
    ctx = classify(spec, faults)
    adm = build_admittance(spec, faults)
    operator = NetworkOperator(spec, adm)

    conv_loss = {c.id: 0.0 for c in spec.converters}
    line_loss = {c.id: 0.0 for c in spec.converters}
    gen_q = {c.id: c.q_demand for c in spec.converters}

    iterations: list[OuterIteration] = []
    warm: object | None = None
    best_step: InnerStep | None = None
    solves: dict[str, ConverterSolve] = {}
    states: dict[str, GeneratorState] = {}
    ac_report = LimitReport(ok=True, violations=(), checked=0)
    converged = False
    total_evals = 0

    for t in range(1, max_iterations + 1):
        caps = {}
        for conv in spec.converters:
            gen = spec.generator_of(conv)
            cap = min(
                conv.p_out_max,
                gen.p_max - line_loss[conv.id] - conv_loss[conv.id],
            )
            # converter valve current limit, mapped back to output power
            s_conv = 3.0 * (conv.ac_voltage * conv.current_max) ** 2
            p_ac_max = np.sqrt(max(0.0, s_conv - conv.q_demand**2))
            cap = min(cap, p_ac_max - conv_loss[conv.id])
            # generator stator current limit at rated terminal voltage
            s_gen = 3.0 * (conv.ac_voltage * gen.current_max) ** 2
            p_g_max = np.sqrt(max(0.0, s_gen - gen_q[conv.id] ** 2))
            cap = min(cap, p_g_max - line_loss[conv.id] - conv_loss[conv.id])
            caps[conv.id] = max(0.0, cap)

        evaluator = CandidateEvaluator(spec, operator, caps)
        step = inner(evaluator, t, warm, seed)
        warm = step.warm
        best_step = step
        total_evals += evaluator.evaluations

        sol = step.outcome.solution
        assert sol is not None
        solves = {}
        states = {}
        ac_fail_extra: list[str] = []
        for conv in spec.converters:
            if conv.bus not in sol.converter_power:
                continue
            p_out = sol.converter_power[conv.bus]
            try:
                cs = solve_converter_nr(conv, p_out)
            except ConverterSolveError as exc:
                ac_fail_extra.append(f"{conv.id}: {exc}")
                continue
            solves[conv.id] = cs
            states[conv.id] = generator_state(conv, cs, spec)
        ac_report, states = check_ac_limits(spec, solves, states)
        if ac_fail_extra:
            ac_report = LimitReport(ok=False, violations=ac_report.violations,
                                    checked=ac_report.checked)

        delta = 0.0
        for conv_id, cs in solves.items():
            delta = max(delta, abs(cs.p_loss - conv_loss[conv_id]))
            conv_loss[conv_id] = cs.p_loss
            st = states[conv_id]
            delta = max(delta, abs(st.line_loss_p - line_loss[conv_id]))
            line_loss[conv_id] = st.line_loss_p
            gen_q[conv_id] = abs(st.q)

        iterations.append(
            OuterIteration(
                index=t,
                caps=tuple(sorted(caps.items())),
                best_weighted=step.outcome.weighted,
                best_raw=step.outcome.raw,
                ac_ok=ac_report.ok and not ac_fail_extra,
                delta_loss=delta,
                combos_evaluated=step.combos_evaluated,
                combos_pruned=step.combos_pruned,
                evaluations=evaluator.evaluations,
            )
        )
        if ac_report.ok and not ac_fail_extra and delta < LOSS_TOLERANCE:
            converged = True
            break

    assert best_step is not None
    sol = best_step.outcome.solution
    assert sol is not None
    dc_report = check_dc_limits(spec, sol)
    vital_ok = all(
        on for load, on in zip(spec.loads, best_step.config.loads_on)
        if load.grade == Grade.VITAL
    )
    return ReconfigResult(
        algorithm=algorithm,
        feasible=best_step.outcome.feasible and ac_report.ok,
        converged=converged,
        mode=ctx.mode,
        faults=faults,
        config=best_step.config,
        objective=ObjectiveValue(
            weighted=best_step.outcome.weighted, raw=best_step.outcome.raw
        ),
        dc=sol,
        converter_solves=solves,
        generator_states=states,
        dc_limits=dc_report,
        ac_limits=ac_report,
        vital_fully_serviced=vital_ok,
        unreachable_loads=_unreachable_loads(spec, operator),
        outer_iterations=len(iterations),
        iterations=tuple(iterations),
        combos_considered=len(redundancy_assignments(ctx, spec)),
        layer_stats=best_step.stats,
        evaluations=total_evals,
        seed=seed,
        wall_clock_s=time.perf_counter() - t_start,
    )


# ---------------------------------------------------------------------------
# the hybrid engine


def reconfigure(
    spec: SystemSpec,
    faults: FaultSet | None = None,
    params: BboParams | None = None,
    seed: int | None = None,
) -> ReconfigResult:
    """Find the best switch configuration for a faulted plant.

    Runs the mode-aware, priority-layered search inside the physics
    loop and returns the full operating point. The result is
    deterministic for a given seed.
    """
    faults = FaultSet.none() if faults is None else faults
    params = BboParams() if params is None else params
    faults.validate(spec)
    ctx = classify(spec, faults)
    combos = redundancy_assignments(ctx, spec)

    def inner(
        evaluator: CandidateEvaluator, t: int, warm: object | None, root: int
    ) -> InnerStep:
        operator = evaluator.operator
        bounds = [combo_upper_bound(spec, evaluator, combo) for combo in combos]
        order = sorted(
            range(len(combos)),
            key=lambda i: (
                -bounds[i],
                sum(a != b for a, b in zip(combos[i], spec.initial_sb_select)),
                combos[i],
            ),
        )
        warm_map: dict = warm if isinstance(warm, dict) else {}
        next_warm: dict = {}
        best: tuple[SwitchConfig, EvalOutcome, tuple[IslandSearchStats, ...]] | None = None
        evaluated = 0
        pruned = 0
        for rank, ci in enumerate(order):
            if best is not None and bounds[ci] <= best[1].weighted + 1e-6:
                pruned += len(order) - rank
                break
            combo = combos[ci]
            merged = np.zeros(spec.load_count, dtype=np.uint8)
            stats: list[IslandSearchStats] = []
            for ii, island in enumerate(operator.islands):
                g0 = start_layer(spec, evaluator, combo, island)
                rng = np.random.default_rng([root, t, ci, ii])
                so = layered_search(
                    spec, evaluator, combo, island, params, rng,
                    start_layer=g0, warm=warm_map.get((combo, ii)),
                )
                merged |= np.array(so.config.loads_on, dtype=np.uint8)
                stats.append(
                    IslandSearchStats(
                        sb_select=combo,
                        island_slack=operator.slacks[ii],
                        start_layer=g0,
                        layers=so.layers,
                    )
                )
                next_warm[(combo, ii)] = so.patterns
            config = SwitchConfig(
                loads_on=tuple(int(b) for b in merged), sb_select=combo
            )
            out = evaluator.evaluate(config)
            if not out.feasible:
                raise ReconfigError(
                    "merged island solutions failed the feasibility screen: "
                    + "; ".join(out.reasons)
                )
            evaluated += 1
            if best is None or out.weighted > best[1].weighted:
                best = (config, out, tuple(stats))
        assert best is not None
        return InnerStep(
            config=best[0],
            outcome=best[1],
            stats=best[2],
            combos_evaluated=evaluated,
            combos_pruned=pruned,
            warm=next_warm,
        )

    return run_outer(spec, faults, inner, "nrbbo", seed)


# ---------------------------------------------------------------------------
# independent audit


@dataclass(frozen=True)
class AuditReport:
    """Re-derivation of a result from scratch, check by check."""

    ok: bool
    checks: tuple[tuple[str, bool, str], ...]

    def failed(self) -> tuple[str, ...]:
        return tuple(name for name, ok, _ in self.checks if not ok)


def audit(spec: SystemSpec, result: ReconfigResult) -> AuditReport:
    """Verify a reconfiguration result against a fresh model build.

    Rebuilds the faulted topology, replays the converter setpoints
    through an independent solve, and re-checks every limit and the
    objective. Catches any drift between what the engine reports and
    what the model actually does.
    """
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        checks.append((name, bool(ok), detail))

    result.config.check_shape(spec)
    ctx = classify(spec, result.faults)
    adm = build_admittance(spec, result.faults)
    operator = NetworkOperator(spec, adm)

    pin_ok = all(
        result.config.sb_select[zone - 1] == side for zone, side in ctx.pinned.items()
    )
    check("pinned selectors respected", pin_ok, str(ctx.pinned))

    dead_ok = True
    for load, on in zip(spec.loads, result.config.loads_on):
        if on and load_bus(spec, result.config, load) in operator.dead_buses:
            dead_ok = False
    check("no serviced load on a dead bus", dead_ok)

    injections = {
        bus: p
        for bus, p in result.dc.converter_power.items()
        if bus not in operator.slacks
    }
    sol = operator.solve(result.config, injections=injections)
    dv = max(
        (abs(sol.voltages[b - 1] - result.dc.voltages[b - 1]) for b in sol.energized),
        default=0.0,
    )
    check("replayed voltages match", dv < 1e-6, f"max dv={dv:.3e} V")
    dp = max(
        (
            abs(sol.converter_power[b] - result.dc.converter_power[b])
            for b in sol.converter_power
        ),
        default=0.0,
    )
    check("replayed converter powers match", dp < 1e-3, f"max dp={dp:.3e} W")
    check("power flow residual small", sol.residual < 1e-8, f"{sol.residual:.3e} pu")

    dc_report = check_dc_limits(spec, sol)
    check(
        "dc limits agree",
        dc_report.ok == result.dc_limits.ok,
        f"replayed ok={dc_report.ok}",
    )

    solves = {}
    states = {}
    conv_ok = True
    detail = ""
    for conv in spec.converters:
        if conv.bus not in sol.converter_power:
            continue
        cs = solve_converter_nr(conv, sol.converter_power[conv.bus])
        solves[conv.id] = cs
        states[conv.id] = generator_state(conv, cs, spec)
        ref = result.converter_solves.get(conv.id)
        if ref is None or abs(cs.p_ac - ref.p_ac) > 1e-3:
            conv_ok = False
            detail = f"{conv.id}: p_ac {cs.p_ac!r} vs {ref.p_ac if ref else None!r}"
    check("converter operating points match", conv_ok, detail)

    ac_report, _ = check_ac_limits(spec, solves, states)
    check(
        "ac limits agree",
        ac_report.ok == result.ac_limits.ok,
        f"replayed ok={ac_report.ok}",
    )

    obj = weighted_objective(spec, result.config)
    check(
        "objective matches",
        obj.weighted == result.objective.weighted and obj.raw == result.objective.raw,
        f"{obj} vs {result.objective}",
    )

    phi = spec.dc_voltage_min / spec.nominal_dc_voltage
    cap_ok = True
    for island in operator.islands:
        vital = sum(
            load.power
            for load, on in zip(spec.loads, result.config.loads_on)
            if on and load.grade == Grade.VITAL
            and load_bus(spec, result.config, load) in island
        )
        caps = sum(c.p_out_max for c in spec.converters if c.bus in island)
        if vital > caps / phi:
            cap_ok = False
    check("serviced vital load within island capacity", cap_ok)

    return AuditReport(ok=all(ok for _, ok, _ in checks), checks=tuple(checks))
