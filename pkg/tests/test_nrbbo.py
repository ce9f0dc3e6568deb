"""Full solver behavior: restoration quality, convergence, and the audit."""
import numpy as np
import pytest

from spsrecon.bbo import CandidateEvaluator
from spsrecon.dcflow import NetworkOperator
from spsrecon.mode import Mode
from spsrecon.model import FaultSet, Grade, build_admittance
from spsrecon.nrbbo import (
    LOSS_TOLERANCE,
    OUTER_MAX_ITERATIONS,
    audit,
    reconfigure,
    start_layer,
)


def shed_by_grade(spec, result):
    counts = {g: 0 for g in Grade}
    for load, on in zip(spec.loads, result.config.loads_on):
        if not on:
            counts[load.grade] += 1
    return counts


def test_intact_plants_restore_everything(spec2, spec6):
    for spec in (spec2, spec6):
        result = reconfigure(spec, FaultSet.none(), seed=1)
        assert result.feasible and result.converged
        assert result.mode is Mode.NON_ISLAND
        assert result.vital_fully_serviced
        assert sum(result.config.loads_on) == spec.load_count
        assert result.restored_power == pytest.approx(spec.total_load)
        assert result.unreachable_loads == ()


def test_restored_power_is_sum_of_serviced(spec6, benchmark_faults):
    result = reconfigure(spec6, benchmark_faults, seed=1)
    expected = sum(
        load.power for load, on in zip(spec6.loads, result.config.loads_on) if on
    )
    assert result.restored_power == pytest.approx(expected)
    assert result.objective.weighted == pytest.approx(
        sum(
            load.weight * load.power
            for load, on in zip(spec6.loads, result.config.loads_on)
            if on
        )
    )


def test_unreachable_loads_forced_off(spec6, benchmark_faults):
    result = reconfigure(spec6, benchmark_faults, seed=2)
    assert set(result.unreachable_loads) == {"z2:N1", "z3:N1", "z4:N1", "z5:N1"}
    names = {l.name: i for i, l in enumerate(spec6.loads)}
    for name in result.unreachable_loads:
        assert result.config.loads_on[names[name]] == 0


def test_benchmark_scenario_quality(spec6, benchmark_faults):
    result = reconfigure(spec6, benchmark_faults, seed=1)
    assert result.feasible and result.converged and result.vital_fully_serviced
    shed = shed_by_grade(spec6, result)
    assert shed[Grade.VITAL] == 0
    assert shed[Grade.SEMI_VITAL] == 0
    assert result.restored_power == pytest.approx(9.6e6)
    assert result.dc_limits.ok and result.ac_limits.ok


def test_determinism_per_seed(spec6, benchmark_faults):
    a = reconfigure(spec6, benchmark_faults, seed=7)
    b = reconfigure(spec6, benchmark_faults, seed=7)
    assert a.config == b.config
    assert a.objective.weighted == b.objective.weighted
    assert a.evaluations == b.evaluations
    assert [it.caps for it in a.iterations] == [it.caps for it in b.iterations]


def test_outer_loop_converges_with_small_loss_delta(spec6, benchmark_faults):
    result = reconfigure(spec6, benchmark_faults, seed=3)
    assert result.converged
    assert 1 <= result.outer_iterations <= OUTER_MAX_ITERATIONS
    last = result.iterations[-1]
    assert last.ac_ok
    assert abs(last.delta_loss) < LOSS_TOLERANCE


def test_combo_accounting_intact(spec6):
    result = reconfigure(spec6, FaultSet.none(), seed=1)
    assert result.combos_considered == 2 ** 6
    for it in result.iterations:
        assert it.combos_evaluated + it.combos_pruned == 2 ** 6
        # the bound is tight enough to skip almost the whole selector space
        assert it.combos_evaluated <= 4


def test_boundary_island_graceful_shortfall(spec6):
    result = reconfigure(spec6, FaultSet.of("pb:1-2", "sb:1-2"), seed=1)
    assert result.mode is Mode.ISLAND
    assert result.feasible and result.converged
    assert not result.vital_fully_serviced
    assert result.partially_restorable
    shed = shed_by_grade(spec6, result)
    assert shed[Grade.VITAL] > 0  # stranded zones exceed the aft converter
    # what was restored still honors the physics
    assert result.dc_limits.ok and result.ac_limits.ok


def test_audit_confirms_results(spec2, spec6, benchmark_faults):
    cases = [
        (spec2, FaultSet.none()),
        (spec6, FaultSet.none()),
        (spec6, benchmark_faults),
        (spec6, FaultSet.of("pb:2-3", "sb:2-3")),
        (spec6, FaultSet.of("pb:1-2", "sb:1-2")),
    ]
    for spec, faults in cases:
        result = reconfigure(spec, faults, seed=5)
        report = audit(spec, result)
        assert report.ok, f"{faults.sorted_ids()}: {report.failed()}"


def test_start_layer_screen(spec6):
    # intact: everything above non-vital fits, so the search starts there
    adm = build_admittance(spec6, FaultSet.none())
    operator = NetworkOperator(spec6, adm)
    evaluator = CandidateEvaluator(spec6, operator)
    island = operator.islands[0]
    assert start_layer(spec6, evaluator, spec6.initial_sb_select, island) == int(
        Grade.NON_VITAL
    )
    # stranded zones 2-6 against the aft converter: not even vital fits
    cut = FaultSet.of("pb:1-2", "sb:1-2")
    operator2 = NetworkOperator(spec6, build_admittance(spec6, cut))
    evaluator2 = CandidateEvaluator(spec6, operator2)
    big = max(operator2.islands, key=len)
    assert start_layer(spec6, evaluator2, (1, 1, 1, 1, 1, 1), big) == int(Grade.VITAL)


def test_default_faults_and_seed(spec2):
    # no fault argument means intact; no seed still returns reproducible fields
    result = reconfigure(spec2)
    assert result.faults.sorted_ids() == ()
    assert result.feasible
    assert isinstance(result.seed, int)


def test_layer_stats_cover_islands(spec6):
    result = reconfigure(spec6, FaultSet.of("pb:2-3", "sb:2-3"), seed=4)
    assert result.mode is Mode.ISLAND
    assert len(result.layer_stats) == 2
    for stats in result.layer_stats:
        assert stats.start_layer in (1, 2, 3)
        assert stats.layers
    assert result.feasible and result.vital_fully_serviced


def test_wall_clock_recorded(spec2):
    result = reconfigure(spec2, FaultSet.none(), seed=1)
    assert result.wall_clock_s > 0.0
