"""Reference solvers for comparison against the layered engine.

All of them optimize the same flat chromosome: one bit per load switch
followed by one bit per zone redundancy selector. None of them uses the
fault-mode analysis or the priority layering; they see the plant purely
through the shared feasibility oracle, inside the same converter-loss
outer loop the main engine runs. That makes the comparison honest: the
only difference between the engines is the search strategy itself.

A candidate's genotype may point loads at dead buses; decoding masks
those loads off (the switchboard cannot close onto a dead bus), and any
remaining electrical violation goes through the same two-stage repair
as the main engine: a random single-bit walk, then greedy shedding of
the cheapest serviced loads.

``oracle_exhaustive`` enumerates the whole decision space and is the
ground truth for small plants; it refuses to run past ``max_bits``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .bbo import BboParams, CandidateEvaluator, EvalOutcome, migration_rates
from .dcflow import NetworkOperator
from .model import FaultSet, Grade, SwitchConfig, SystemSpec, load_bus
from .nrbbo import InnerStep, ReconfigResult, run_outer

__all__ = [
    "BaselineParams",
    "OracleSizeError",
    "oracle_exhaustive",
    "solve_baseline",
]

BASELINE_ALGORITHMS = ("bbo", "ga", "pso")


class OracleSizeError(ValueError):
    """The plant's decision space is too large to enumerate."""


@dataclass(frozen=True)
class BaselineParams:
    """Shared and per-algorithm knobs for the reference solvers.

    population/generations match the main engine's habitat count and
    per-layer generation cap so comparisons run on equal budgets. The
    search stops early after ``patience`` generations without any
    improvement of the best candidate.
    """

    population: int = 30
    generations: int = 50
    patience: int = 6
    repair_attempts: int = 100
    # plain BBO
    emigration_max: float = 1.0
    immigration_max: float = 1.0
    elite_count: int = 2
    mutation_rate: float = 0.05
    # GA
    crossover_rate: float = 0.8
    ga_mutation_rate: float = 0.02
    tournament_size: int = 2
    # binary PSO
    inertia: float = 0.8
    cognitive: float = 2.0
    social: float = 2.0
    velocity_max: float = 4.0

    def __post_init__(self) -> None:
        if self.population < 1:
            raise ValueError("population must be at least 1")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if not 0 <= self.elite_count <= self.population:
            raise ValueError("elite_count must lie in [0, population]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        if self.velocity_max <= 0:
            raise ValueError("velocity_max must be positive")


class _FlatProblem:
    """Decode/evaluate/repair plumbing shared by the flat searches."""

    def __init__(self, spec: SystemSpec, evaluator: CandidateEvaluator):
        self.spec = spec
        self.evaluator = evaluator
        self.n_loads = spec.load_count
        self.n = spec.load_count + spec.zone_count
        dead = evaluator.operator.dead_buses
        # attachment bus of every load for selector value 0 and 1
        self._bus0 = np.zeros(self.n_loads, dtype=int)
        self._bus1 = np.zeros(self.n_loads, dtype=int)
        for i, load in enumerate(spec.loads):
            pb = load.pb_bus if load.pb_bus is not None else load.sb_bus
            sb = load.sb_bus if load.sb_bus is not None else load.pb_bus
            self._bus0[i] = pb
            self._bus1[i] = sb
        self._dead0 = np.array([b in dead for b in self._bus0])
        self._dead1 = np.array([b in dead for b in self._bus1])
        self._zone_index = np.array([load.zone - 1 for load in spec.loads])
        # greedy shed order: cheapest weighted power first
        cost = np.array(
            [spec.grade_weight(l.grade) * l.power for l in spec.loads]
        )
        self.shed_order = np.lexsort((np.arange(self.n_loads), cost))
        self.cache: dict[bytes, EvalOutcome] = {}
        self.calls = 0

    def decode(self, bits: np.ndarray) -> SwitchConfig:
        loads = bits[: self.n_loads].astype(np.uint8)
        select = bits[self.n_loads :]
        chosen_dead = np.where(
            select[self._zone_index] == 1, self._dead1, self._dead0
        )
        loads = np.where(chosen_dead, 0, loads)
        return SwitchConfig(
            loads_on=tuple(int(b) for b in loads),
            sb_select=tuple(int(b) for b in select),
        )

    def evaluate(self, bits: np.ndarray) -> EvalOutcome:
        self.calls += 1
        key = bits.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        out = self.evaluator.evaluate(self.decode(bits))
        self.cache[key] = out
        return out

    def repair(
        self, bits: np.ndarray, rng: np.random.Generator, attempts: int
    ) -> tuple[np.ndarray, EvalOutcome]:
        out = self.evaluate(bits)
        if out.feasible:
            return bits, out
        cur = bits.copy()
        for _ in range(attempts):
            cur[int(rng.integers(self.n))] ^= 1
            out = self.evaluate(cur)
            if out.feasible:
                return cur, out
        for j in self.shed_order:
            if cur[j]:
                cur[j] = 0
                out = self.evaluate(cur)
                if out.feasible:
                    return cur, out
        raise RuntimeError("flat repair failed even with every load shed")


def _seed_pool(
    problem: _FlatProblem,
    spec: SystemSpec,
    params: BaselineParams,
    rng: np.random.Generator,
    warm: np.ndarray | None,
) -> list[np.ndarray]:
    init_sel = np.array(spec.initial_sb_select, dtype=np.uint8)
    all_on = np.concatenate([np.ones(spec.load_count, dtype=np.uint8), init_sel])
    all_off = np.concatenate([np.zeros(spec.load_count, dtype=np.uint8), init_sel])
    seeds = [all_on, all_off]
    if warm is not None and warm.size == problem.n:
        seeds.insert(1, warm.astype(np.uint8))
    while len(seeds) < params.population:
        seeds.append((rng.random(problem.n) < 0.5).astype(np.uint8))
    return seeds[: params.population]


def _track_stall(best: float, new_best: float, stall: int) -> tuple[float, int]:
    if new_best > best + 1e-9:
        return new_best, 0
    return best, stall + 1


def _flat_bbo(
    problem: _FlatProblem,
    spec: SystemSpec,
    params: BaselineParams,
    rng: np.random.Generator,
    warm: np.ndarray | None,
) -> tuple[np.ndarray, EvalOutcome]:
    bb = BboParams(
        habitat_count=params.population,
        max_generations=params.generations,
        emigration_max=params.emigration_max,
        immigration_max=params.immigration_max,
        elite_count=params.elite_count,
        mutation_rate=params.mutation_rate,
        patience=params.patience,
        repair_attempts=params.repair_attempts,
    )
    n = problem.n
    pop = np.zeros((params.population, n), dtype=np.uint8)
    outs: list[EvalOutcome] = []
    for i, seed in enumerate(_seed_pool(problem, spec, params, rng, warm)):
        bits, out = problem.repair(seed, rng, params.repair_attempts)
        pop[i] = bits
        outs.append(out)
    best_i = max(range(len(outs)), key=lambda i: outs[i].weighted)
    best_bits, best_out = pop[best_i].copy(), outs[best_i]
    mu, lam = migration_rates(bb, params.population)
    mu_cum = np.cumsum(mu)
    stall = 0
    for _ in range(params.generations):
        order = np.argsort([o.weighted for o in outs], kind="stable")
        pop = pop[order]
        outs = [outs[i] for i in order]
        elites = [(pop[-(k + 1)].copy(), outs[-(k + 1)]) for k in range(params.elite_count)]
        new_pop = pop.copy()
        for i in range(params.population):
            take = np.flatnonzero(rng.random(n) < lam[i])
            if take.size:
                draws = rng.random(take.size) * mu_cum[-1]
                donors = np.searchsorted(mu_cum, draws, side="left")
                new_pop[i, take] = pop[donors, take]
        new_pop ^= (rng.random((params.population, n)) < params.mutation_rate).astype(np.uint8)
        new_outs: list[EvalOutcome] = []
        for i in range(params.population):
            bits, out = problem.repair(new_pop[i], rng, params.repair_attempts)
            new_pop[i] = bits
            new_outs.append(out)
        if params.elite_count:
            worst = np.argsort([o.weighted for o in new_outs], kind="stable")
            for k, (ebits, eout) in enumerate(elites):
                new_pop[worst[k]] = ebits
                new_outs[worst[k]] = eout
        pop, outs = new_pop, new_outs
        gen_i = max(range(len(outs)), key=lambda i: outs[i].weighted)
        prev = best_out.weighted
        if outs[gen_i].weighted > prev:
            best_bits, best_out = pop[gen_i].copy(), outs[gen_i]
        _, stall = _track_stall(prev, outs[gen_i].weighted, stall)
        if stall >= params.patience:
            break
    return best_bits, best_out


def _flat_ga(
    problem: _FlatProblem,
    spec: SystemSpec,
    params: BaselineParams,
    rng: np.random.Generator,
    warm: np.ndarray | None,
) -> tuple[np.ndarray, EvalOutcome]:
    n = problem.n
    pop: list[np.ndarray] = []
    outs: list[EvalOutcome] = []
    for seed in _seed_pool(problem, spec, params, rng, warm):
        bits, out = problem.repair(seed, rng, params.repair_attempts)
        pop.append(bits)
        outs.append(out)
    best_i = max(range(len(outs)), key=lambda i: outs[i].weighted)
    best_bits, best_out = pop[best_i].copy(), outs[best_i]

    def tournament() -> int:
        picks = rng.integers(len(pop), size=params.tournament_size)
        return max(picks, key=lambda i: outs[i].weighted)

    stall = 0
    for _ in range(params.generations):
        ranked = sorted(range(len(pop)), key=lambda i: outs[i].weighted, reverse=True)
        new_pop = [pop[i].copy() for i in ranked[: params.elite_count]]
        new_outs = [outs[i] for i in ranked[: params.elite_count]]
        while len(new_pop) < params.population:
            a, b = tournament(), tournament()
            pa, pb = pop[a], pop[b]
            if rng.random() < params.crossover_rate:
                mask = rng.random(n) < 0.5
                child = np.where(mask, pa, pb).astype(np.uint8)
            else:
                child = (pa if outs[a].weighted >= outs[b].weighted else pb).copy()
            child ^= (rng.random(n) < params.ga_mutation_rate).astype(np.uint8)
            bits, out = problem.repair(child, rng, params.repair_attempts)
            new_pop.append(bits)
            new_outs.append(out)
        pop, outs = new_pop, new_outs
        gen_i = max(range(len(outs)), key=lambda i: outs[i].weighted)
        prev = best_out.weighted
        if outs[gen_i].weighted > prev:
            best_bits, best_out = pop[gen_i].copy(), outs[gen_i]
        _, stall = _track_stall(prev, outs[gen_i].weighted, stall)
        if stall >= params.patience:
            break
    return best_bits, best_out


def _flat_pso(
    problem: _FlatProblem,
    spec: SystemSpec,
    params: BaselineParams,
    rng: np.random.Generator,
    warm: np.ndarray | None,
) -> tuple[np.ndarray, EvalOutcome]:
    n = problem.n
    h = params.population
    pos = np.zeros((h, n), dtype=np.uint8)
    outs: list[EvalOutcome] = []
    for i, seed in enumerate(_seed_pool(problem, spec, params, rng, warm)):
        bits, out = problem.repair(seed, rng, params.repair_attempts)
        pos[i] = bits
        outs.append(out)
    vel = rng.uniform(-1.0, 1.0, size=(h, n))
    pbest = pos.copy()
    pbest_out = list(outs)
    g_i = max(range(h), key=lambda i: outs[i].weighted)
    gbest, gbest_out = pos[g_i].copy(), outs[g_i]

    stall = 0
    for _ in range(params.generations):
        r1 = rng.random((h, n))
        r2 = rng.random((h, n))
        vel = (
            params.inertia * vel
            + params.cognitive * r1 * (pbest - pos)
            + params.social * r2 * (gbest[None, :] - pos)
        )
        np.clip(vel, -params.velocity_max, params.velocity_max, out=vel)
        prob = 1.0 / (1.0 + np.exp(-vel))
        new_pos = (rng.random((h, n)) < prob).astype(np.uint8)
        prev = gbest_out.weighted
        for i in range(h):
            bits, out = problem.repair(new_pos[i], rng, params.repair_attempts)
            pos[i] = bits
            outs[i] = out
            if out.weighted > pbest_out[i].weighted:
                pbest[i] = bits.copy()
                pbest_out[i] = out
            if out.weighted > gbest_out.weighted:
                gbest, gbest_out = bits.copy(), out
        _, stall = _track_stall(prev, gbest_out.weighted, stall)
        if stall >= params.patience:
            break
    return gbest, gbest_out


_FLAT_SOLVERS: dict[str, Callable] = {
    "bbo": _flat_bbo,
    "ga": _flat_ga,
    "pso": _flat_pso,
}


def solve_baseline(
    spec: SystemSpec,
    faults: FaultSet | None = None,
    algorithm: str = "bbo",
    params: BaselineParams | None = None,
    seed: int | None = None,
) -> ReconfigResult:
    """Run one reference solver inside the standard physics loop."""
    if algorithm not in _FLAT_SOLVERS:
        raise ValueError(
            f"unknown baseline {algorithm!r}; expected one of {BASELINE_ALGORITHMS}"
        )
    faults = FaultSet.none() if faults is None else faults
    params = BaselineParams() if params is None else params
    solver = _FLAT_SOLVERS[algorithm]

    def inner(
        evaluator: CandidateEvaluator, t: int, warm: object | None, root: int
    ) -> InnerStep:
        problem = _FlatProblem(spec, evaluator)
        rng = np.random.default_rng([root, t])
        warm_bits = warm if isinstance(warm, np.ndarray) else None
        bits, out = solver(problem, spec, params, rng, warm_bits)
        return InnerStep(
            config=problem.decode(bits),
            outcome=out,
            stats=(),
            combos_evaluated=1,
            combos_pruned=0,
            warm=bits.copy(),
        )

    return run_outer(spec, faults, inner, algorithm, seed)


def oracle_exhaustive(
    spec: SystemSpec,
    faults: FaultSet | None = None,
    seed: int | None = None,
    max_bits: int = 24,
) -> ReconfigResult:
    """Enumerate every configuration; ground truth for small plants.

    The decision space is every selector assignment times every subset
    of the loads servable under it; candidates that cannot satisfy the
    island capacity balance (rated demand above summed caps divided by
    v_min/v_nominal) are skipped without a solve since they can never
    be feasible. Deterministic regardless of seed.
    """
    faults = FaultSet.none() if faults is None else faults
    total_bits = spec.load_count + spec.zone_count
    if total_bits > max_bits:
        raise OracleSizeError(
            f"{total_bits} decision bits exceed the {max_bits}-bit exhaustive limit"
        )

    def inner(
        evaluator: CandidateEvaluator, t: int, warm: object | None, root: int
    ) -> InnerStep:
        operator = evaluator.operator
        phi = spec.dc_voltage_min / spec.nominal_dc_voltage
        best: tuple[SwitchConfig, EvalOutcome] | None = None
        for select in product((0, 1), repeat=spec.zone_count):
            probe = SwitchConfig((1,) * spec.load_count, select)
            servable = [
                i
                for i, load in enumerate(spec.loads)
                if load_bus(spec, probe, load) not in operator.dead_buses
            ]
            m = len(servable)
            # per-island rated power vectors for the capacity pre-filter
            island_powers = []
            budgets = []
            for island in operator.islands:
                vec = np.array(
                    [
                        spec.loads[i].power
                        if load_bus(spec, probe, spec.loads[i]) in island
                        else 0.0
                        for i in servable
                    ]
                )
                island_powers.append(vec)
                budgets.append(
                    sum(
                        evaluator.slack_cap(c.bus)
                        for c in spec.converters
                        if c.bus in island
                    )
                    / phi
                )
            for code in range(1 << m):
                bits = np.array([(code >> j) & 1 for j in range(m)], dtype=float)
                if any(
                    float(bits @ vec) > budget + 1e-9
                    for vec, budget in zip(island_powers, budgets)
                ):
                    continue
                loads = [0] * spec.load_count
                for j, i in enumerate(servable):
                    loads[i] = int(bits[j])
                cfg = SwitchConfig(tuple(loads), select)
                out = evaluator.evaluate(cfg)
                if out.feasible and (best is None or out.weighted > best[1].weighted):
                    best = (cfg, out)
        if best is None:
            raise RuntimeError("oracle found no feasible configuration at all")
        return InnerStep(
            config=best[0],
            outcome=best[1],
            stats=(),
            combos_evaluated=2**spec.zone_count,
            combos_pruned=0,
            warm=None,
        )

    return run_outer(spec, faults, inner, "oracle", seed)
