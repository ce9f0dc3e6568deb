"""Layered biogeography-based search over the load switch states.

The search treats each candidate switch pattern as a habitat whose
suitability is the weighted restored power, provided the pattern passes
the full DC feasibility screen (power flow converges, voltages and
branch currents inside limits, slack converters inside their effective
output windows). Habitats exchange bits through fitness-ranked
migration and the population is kept entirely feasible by a repair step,
so the ranking never has to compare infeasible candidates.

Instead of searching all load switches at once, the loads are swept in
priority layers: vital first, then semi-vital, then non-vital. A layer
only opens once the previous one has settled, and every deeper layer
keeps the shallower patterns frozen. Layer weights are chosen so that
restoring one load of a higher layer always outweighs everything a
lower layer could offer; ``weight_bounds`` gives the exact thresholds
and ``validate_weights`` checks a scenario against them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dcflow import (
    DcSolution,
    DisconnectedLoadError,
    NetworkOperator,
    PowerFlowError,
    check_dc_limits,
)
from .model import Grade, SwitchConfig, SystemSpec, load_bus, weighted_objective

__all__ = [
    "BboParams",
    "CandidateEvaluator",
    "EvalOutcome",
    "LayerOutcome",
    "SearchError",
    "SearchOutcome",
    "WeightBounds",
    "layer_cutoff",
    "layered_search",
    "migration_rates",
    "servable_mask",
    "validate_weights",
    "weight_bounds",
]


class SearchError(RuntimeError):
    """The search cannot produce a feasible candidate at all."""


@dataclass(frozen=True)
class BboParams:
    """Knobs of the biogeography search.

    habitat_count    population size
    max_generations  hard generation cap per layer
    emigration_max   E: emigration probability of the top-ranked habitat
    immigration_max  A: immigration probability of the bottom-ranked one
    elite_count      habitats reinjected unchanged every generation
    mutation_rate    per-bit flip probability (elites are reinjected, so
                     they are effectively exempt)
    patience         consecutive generations with best-candidate gain
                     below the layer cutoff before the layer stops
    repair_attempts  single-bit random walk budget before the repair
                     falls back to greedy shedding
    """

    habitat_count: int = 30
    max_generations: int = 50
    emigration_max: float = 1.0
    immigration_max: float = 1.0
    elite_count: int = 2
    mutation_rate: float = 0.05
    patience: int = 6
    repair_attempts: int = 100

    def __post_init__(self) -> None:
        if self.habitat_count < 1:
            raise ValueError("habitat_count must be at least 1")
        if not 0 <= self.elite_count <= self.habitat_count:
            raise ValueError("elite_count must lie in [0, habitat_count]")
        if not 0.0 < self.emigration_max <= 1.0:
            raise ValueError("emigration_max must lie in (0, 1]")
        if not 0.0 < self.immigration_max <= 1.0:
            raise ValueError("immigration_max must lie in (0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.max_generations < 1:
            raise ValueError("max_generations must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.repair_attempts < 0:
            raise ValueError("repair_attempts must be non-negative")


def migration_rates(params: BboParams, count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-rank emigration and immigration probabilities.

    Index 0 is the worst habitat. Rank h (1-based) emigrates with
    probability E*h/H and immigrates with A*(1 - h/H): good habitats
    mostly donate bits, bad ones mostly receive them. When A equals E
    the two rates sum to E for every rank.
    """
    n = params.habitat_count if count is None else count
    ranks = np.arange(1, n + 1, dtype=float)
    mu = params.emigration_max * ranks / n
    lam = params.immigration_max * (1.0 - ranks / n)
    return mu, lam


# ---------------------------------------------------------------------------
# priority weights


@dataclass(frozen=True)
class WeightBounds:
    """Strict lower bounds that make the layer priorities dominant."""

    vital: float
    semi: float


def _grade_powers(spec: SystemSpec, grade: Grade) -> tuple[float, float]:
    powers = [load.power for load in spec.loads if load.grade == grade]
    if not powers:
        return 0.0, 0.0
    return min(powers), max(powers)


def weight_bounds(spec: SystemSpec) -> WeightBounds:
    """Lower bounds on the vital and semi-vital weights.

    Restoring the smallest load of a layer must outweigh restoring the
    largest single load of the layer below, so that no one-for-one swap
    between adjacent layers can ever look profitable. That requires
    w_g * P_g_min > w_lower * P_lower_max for both layer boundaries;
    these are the right-hand sides of those two inequalities.
    """
    vital_min, _ = _grade_powers(spec, Grade.VITAL)
    semi_min, semi_max = _grade_powers(spec, Grade.SEMI_VITAL)
    _, nv_max = _grade_powers(spec, Grade.NON_VITAL)
    w2 = spec.grade_weight(Grade.SEMI_VITAL)
    w3 = spec.grade_weight(Grade.NON_VITAL)
    semi = w3 * nv_max / semi_min if semi_min > 0 else 0.0
    vital = w2 * semi_max / vital_min if vital_min > 0 else 0.0
    return WeightBounds(vital=vital, semi=semi)


def validate_weights(spec: SystemSpec) -> list[str]:
    """Messages for every violated priority-dominance bound (empty = ok)."""
    bounds = weight_bounds(spec)
    w1 = spec.grade_weight(Grade.VITAL)
    w2 = spec.grade_weight(Grade.SEMI_VITAL)
    problems = []
    if w2 <= bounds.semi:
        problems.append(
            f"semi-vital weight {w2:g} must exceed {bounds.semi:g} to dominate non-vital load"
        )
    if w1 <= bounds.vital:
        problems.append(
            f"vital weight {w1:g} must exceed {bounds.vital:g} to dominate lower layers"
        )
    return problems


def layer_cutoff(spec: SystemSpec, grade: Grade) -> float:
    """Smallest weighted gain one extra load of this layer can bring.

    Once a generation improves the best candidate by less than this, the
    search is only shuffling loads it already serves, so the layer stop
    counter starts running.
    """
    lo, _ = _grade_powers(spec, grade)
    return spec.grade_weight(grade) * lo


# ---------------------------------------------------------------------------
# feasibility oracle


@dataclass(frozen=True)
class EvalOutcome:
    """Feasibility verdict and objective for one switch configuration."""

    feasible: bool
    weighted: float
    raw: float
    reasons: tuple[str, ...]
    solution: DcSolution | None


class CandidateEvaluator:
    """Shared DC feasibility and objective oracle.

    Bound to one faulted topology (via the operator) and one set of
    effective converter output caps. Every candidate, whatever search
    algorithm produced it, passes through the same checks:

    * every serviced load can reach an energized bus,
    * the power flow converges,
    * bus voltages and branch currents stay inside limits,
    * each slack converter output stays inside [p_out_min, cap].

    Non-slack converters are dispatched against the same caps, so only
    the slack output can drift out of its window.
    """

    def __init__(
        self,
        spec: SystemSpec,
        operator: NetworkOperator,
        caps: Mapping[str, float] | None = None,
    ):
        self.spec = spec
        self.operator = operator
        self.caps = dict(caps) if caps else {}
        self.evaluations = 0

    def slack_cap(self, bus: int) -> float:
        conv = self.spec.converter_at(bus)
        return self.caps.get(conv.id, conv.p_out_max)

    def evaluate(self, config: SwitchConfig) -> EvalOutcome:
        self.evaluations += 1
        obj = weighted_objective(self.spec, config)
        try:
            sol = self.operator.solve(config, caps=self.caps or None)
        except DisconnectedLoadError as exc:
            return EvalOutcome(False, obj.weighted, obj.raw, (str(exc),), None)
        except PowerFlowError as exc:
            return EvalOutcome(False, obj.weighted, obj.raw, (f"power flow: {exc}",), None)
        report = check_dc_limits(self.spec, sol)
        reasons = [
            f"{v.kind}[{v.element}]={v.value:.6g} outside [{v.low:.6g}, {v.high:.6g}]"
            for v in report.violations
        ]
        for island, slack in zip(self.operator.islands, self.operator.slacks):
            conv = self.spec.converter_at(slack)
            cap = self.caps.get(conv.id, conv.p_out_max)
            out = sol.converter_power[slack]
            tol = 1e-6 * max(1.0, cap)
            if out > cap + tol:
                reasons.append(f"slack_output[{conv.id}]={out:.6g} above cap {cap:.6g}")
            if out < conv.p_out_min - tol:
                reasons.append(f"slack_output[{conv.id}]={out:.6g} below min {conv.p_out_min:.6g}")
        if reasons:
            return EvalOutcome(False, obj.weighted, obj.raw, tuple(reasons), sol)
        return EvalOutcome(True, obj.weighted, obj.raw, (), sol)


def servable_mask(
    spec: SystemSpec, operator: NetworkOperator, sb_select: Sequence[int]
) -> np.ndarray:
    """Boolean mask over loads whose attachment bus is energized."""
    probe = SwitchConfig(loads_on=(1,) * spec.load_count, sb_select=tuple(sb_select))
    mask = np.zeros(spec.load_count, dtype=bool)
    for i, load in enumerate(spec.loads):
        mask[i] = load_bus(spec, probe, load) not in operator.dead_buses
    return mask


def island_load_ids(
    spec: SystemSpec,
    operator: NetworkOperator,
    sb_select: Sequence[int],
    island: frozenset[int],
) -> list[int]:
    """Servable load ids attached inside one energized island, ascending."""
    probe = SwitchConfig(loads_on=(1,) * spec.load_count, sb_select=tuple(sb_select))
    return [
        load.id for load in spec.loads if load_bus(spec, probe, load) in island
    ]


# ---------------------------------------------------------------------------
# layered search


@dataclass(frozen=True)
class LayerOutcome:
    """Search telemetry and result for one priority layer."""

    grade: Grade
    load_ids: tuple[int, ...]
    pattern: tuple[int, ...]
    best_weighted: float
    generations: int
    evaluations: int
    distinct: int
    history: tuple[float, ...]


@dataclass(frozen=True)
class SearchOutcome:
    """Final configuration of one layered search plus per-layer telemetry."""

    config: SwitchConfig
    outcome: EvalOutcome
    layers: tuple[LayerOutcome, ...]

    @property
    def patterns(self) -> dict[Grade, tuple[int, ...]]:
        return {layer.grade: layer.pattern for layer in self.layers}


def layered_search(
    spec: SystemSpec,
    evaluator: CandidateEvaluator,
    sb_select: Sequence[int],
    island: frozenset[int],
    params: BboParams,
    rng: np.random.Generator,
    start_layer: int = 1,
    warm: Mapping[Grade, Sequence[int]] | None = None,
) -> SearchOutcome:
    """Run the priority-layered search over one island's loads.

    Loads attached outside ``island`` are held off, so independent
    islands can be searched one at a time and their patterns merged.
    Layers above ``start_layer`` are assumed fully serviceable and kept
    on without searching; the caller is responsible for screening that
    assumption (see the engine's start-layer check). ``warm`` optionally
    seeds each layer's population with a known-good pattern from an
    earlier pass.
    """
    sb_select = tuple(sb_select)
    ids = island_load_ids(spec, evaluator.operator, sb_select, island)
    base = np.zeros(spec.load_count, dtype=np.uint8)
    for i in ids:
        if int(spec.loads[i].grade) < start_layer:
            base[i] = 1

    layers: list[LayerOutcome] = []
    for grade in (Grade.VITAL, Grade.SEMI_VITAL, Grade.NON_VITAL):
        if int(grade) < start_layer:
            continue
        idx = np.array([i for i in ids if spec.loads[i].grade == grade], dtype=int)
        if idx.size == 0:
            layers.append(
                LayerOutcome(grade, (), (), 0.0, 0, 0, 0, ())
            )
            continue
        best_bits, stats = _search_layer(
            spec, evaluator, sb_select, base, idx, grade, params, rng,
            warm.get(grade) if warm else None,
        )
        base[idx] = best_bits
        layers.append(stats)

    final = SwitchConfig(loads_on=tuple(int(b) for b in base), sb_select=sb_select)
    outcome = evaluator.evaluate(final)
    if not outcome.feasible:
        raise SearchError(
            "layered search produced an infeasible final configuration: "
            + "; ".join(outcome.reasons)
        )
    return SearchOutcome(config=final, outcome=outcome, layers=tuple(layers))


def _search_layer(
    spec: SystemSpec,
    evaluator: CandidateEvaluator,
    sb_select: tuple[int, ...],
    base: np.ndarray,
    idx: np.ndarray,
    grade: Grade,
    params: BboParams,
    rng: np.random.Generator,
    warm: Sequence[int] | None,
) -> tuple[np.ndarray, LayerOutcome]:
    n = idx.size
    cache: dict[bytes, EvalOutcome] = {}
    calls = 0

    def eval_bits(bits: np.ndarray) -> EvalOutcome:
        nonlocal calls
        calls += 1
        key = bits.tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        full = base.copy()
        full[idx] = bits
        cfg = SwitchConfig(loads_on=tuple(int(b) for b in full), sb_select=sb_select)
        out = evaluator.evaluate(cfg)
        cache[key] = out
        return out

    powers = np.array([spec.loads[i].power for i in idx])
    shed_order = np.lexsort((idx, powers))  # cheapest load first, id tie-break

    def repair(bits: np.ndarray) -> tuple[np.ndarray, EvalOutcome]:
        out = eval_bits(bits)
        if out.feasible:
            return bits, out
        cur = bits.copy()
        for _ in range(params.repair_attempts):
            cur[int(rng.integers(n))] ^= 1
            out = eval_bits(cur)
            if out.feasible:
                return cur, out
        for j in shed_order:
            if cur[j]:
                cur[j] = 0
                out = eval_bits(cur)
                if out.feasible:
                    return cur, out
        raise SearchError(
            f"cannot repair any candidate in the {grade.name.lower()} layer; "
            "even the all-off pattern fails the feasibility screen"
        )

    # Seed with the two extreme patterns, a warm restart if available,
    # then random fill. Everything is repaired before it enters the pool.
    seeds = [np.ones(n, dtype=np.uint8), np.zeros(n, dtype=np.uint8)]
    if warm is not None and len(warm) == n:
        seeds.insert(1, np.array(warm, dtype=np.uint8))
    while len(seeds) < params.habitat_count:
        seeds.append((rng.random(n) < 0.5).astype(np.uint8))
    pop = np.zeros((params.habitat_count, n), dtype=np.uint8)
    outcomes: list[EvalOutcome] = []
    for i in range(params.habitat_count):
        bits, out = repair(seeds[i])
        pop[i] = bits
        outcomes.append(out)

    cutoff = layer_cutoff(spec, grade)
    best_i = max(range(len(outcomes)), key=lambda i: outcomes[i].weighted)
    best_bits = pop[best_i].copy()
    best_val = outcomes[best_i].weighted
    history = [best_val]
    mu, lam = migration_rates(params, params.habitat_count)
    mu_cum = np.cumsum(mu)

    generations = 0
    stall = 0
    for _ in range(params.max_generations):
        generations += 1
        order = np.argsort([o.weighted for o in outcomes], kind="stable")
        pop = pop[order]
        outcomes = [outcomes[i] for i in order]
        elite_bits = [pop[-(k + 1)].copy() for k in range(params.elite_count)]
        elite_outs = [outcomes[-(k + 1)] for k in range(params.elite_count)]

        new_pop = pop.copy()
        for i in range(params.habitat_count):
            take = np.flatnonzero(rng.random(n) < lam[i])
            if take.size:
                draws = rng.random(take.size) * mu_cum[-1]
                donors = np.searchsorted(mu_cum, draws, side="left")
                new_pop[i, take] = pop[donors, take]
        flips = rng.random((params.habitat_count, n)) < params.mutation_rate
        new_pop ^= flips.astype(np.uint8)

        new_outs: list[EvalOutcome] = []
        for i in range(params.habitat_count):
            bits, out = repair(new_pop[i])
            new_pop[i] = bits
            new_outs.append(out)
        # reinject the elites over the worst of the new generation
        if params.elite_count:
            worst = np.argsort([o.weighted for o in new_outs], kind="stable")
            for k in range(params.elite_count):
                slot = worst[k]
                new_pop[slot] = elite_bits[k]
                new_outs[slot] = elite_outs[k]
        pop = new_pop
        outcomes = new_outs

        gen_best = max(range(len(outcomes)), key=lambda i: outcomes[i].weighted)
        improvement = outcomes[gen_best].weighted - best_val
        if improvement > 0:
            best_val = outcomes[gen_best].weighted
            best_bits = pop[gen_best].copy()
        history.append(best_val)
        if improvement < cutoff:
            stall += 1
            if stall >= params.patience:
                break
        else:
            stall = 0

    stats = LayerOutcome(
        grade=grade,
        load_ids=tuple(int(i) for i in idx),
        pattern=tuple(int(b) for b in best_bits),
        best_weighted=best_val,
        generations=generations,
        evaluations=calls,
        distinct=len(cache),
        history=tuple(history),
    )
    return best_bits, stats
