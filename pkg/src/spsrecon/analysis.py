"""Fault sweeps and algorithm benchmarks over a plant fixture.

Two experiment shapes cover the evaluation story:

* ``run_sweep``: enumerate every n-fault scenario on the plant's
  faultable segments, reconfigure each one, and report per-scenario
  service outcomes plus the vital-shortfall fraction (the share of
  scenarios where at least one vital load had to stay off).
* ``run_benchmark``: repeat one scenario across seeds for several
  algorithms and compare restored-power statistics.

Reports serialize to CSV and JSON-ready dictionaries. Machine outputs
deliberately carry no wall-clock fields so that a fixed seed produces
byte-identical files.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .baselines import BASELINE_ALGORITHMS, BaselineParams, oracle_exhaustive, solve_baseline
from .bbo import BboParams
from .model import FaultSet, SystemSpec
from .nrbbo import ReconfigResult, reconfigure

__all__ = [
    "AlgorithmSummary",
    "BenchmarkReport",
    "RunRow",
    "ScenarioRow",
    "SweepReport",
    "benchmark_to_csv",
    "benchmark_to_dict",
    "enumerate_faults",
    "restored_cdf",
    "run_benchmark",
    "run_sweep",
    "solve_with",
    "sweep_to_csv",
    "sweep_to_dict",
]

ALGORITHMS = ("nrbbo",) + BASELINE_ALGORITHMS + ("oracle",)


def enumerate_faults(spec: SystemSpec, n_faults: int) -> tuple[FaultSet, ...]:
    """All n-segment fault scenarios, in deterministic lexicographic order."""
    if n_faults < 0:
        raise ValueError("n_faults must be non-negative")
    ids = sorted(line.id for line in spec.faultable_lines)
    return tuple(FaultSet.of(*combo) for combo in combinations(ids, n_faults))


def solve_with(
    spec: SystemSpec,
    faults: FaultSet,
    algorithm: str = "nrbbo",
    seed: int | None = None,
    params: BboParams | None = None,
    baseline_params: BaselineParams | None = None,
) -> ReconfigResult:
    """Dispatch one scenario to the named algorithm."""
    if algorithm == "nrbbo":
        return reconfigure(spec, faults, params=params, seed=seed)
    if algorithm == "oracle":
        return oracle_exhaustive(spec, faults, seed=seed)
    if algorithm in BASELINE_ALGORITHMS:
        return solve_baseline(spec, faults, algorithm=algorithm,
                              params=baseline_params, seed=seed)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


# ---------------------------------------------------------------------------
# fault sweeps


@dataclass(frozen=True)
class ScenarioRow:
    """Outcome of one fault scenario inside a sweep."""

    faults: tuple[str, ...]
    mode: str
    feasible: bool
    converged: bool
    vital_serviced: bool
    restored: float
    weighted: float
    outer_iterations: int
    evaluations: int


@dataclass(frozen=True)
class SweepReport:
    """All scenarios of one n-fault sweep."""

    fixture: str
    algorithm: str
    n_faults: int
    seed: int | None
    rows: tuple[ScenarioRow, ...]

    @property
    def scenario_count(self) -> int:
        return len(self.rows)

    @property
    def vital_serviced_count(self) -> int:
        return sum(1 for r in self.rows if r.vital_serviced)

    @property
    def vital_shortfall_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return 1.0 - self.vital_serviced_count / len(self.rows)

    def shortfall_scenarios(self) -> tuple[tuple[str, ...], ...]:
        return tuple(r.faults for r in self.rows if not r.vital_serviced)


def run_sweep(
    spec: SystemSpec,
    n_faults: int,
    algorithm: str = "nrbbo",
    seed: int | None = 0,
    params: BboParams | None = None,
    baseline_params: BaselineParams | None = None,
) -> SweepReport:
    """Reconfigure every n-fault scenario with one root seed."""
    rows = []
    for faults in enumerate_faults(spec, n_faults):
        res = solve_with(spec, faults, algorithm, seed, params, baseline_params)
        rows.append(
            ScenarioRow(
                faults=faults.sorted_ids(),
                mode=res.mode.value,
                feasible=res.feasible,
                converged=res.converged,
                vital_serviced=res.vital_fully_serviced,
                restored=res.restored_power,
                weighted=res.objective.weighted,
                outer_iterations=res.outer_iterations,
                evaluations=res.evaluations,
            )
        )
    return SweepReport(
        fixture=spec.name,
        algorithm=algorithm,
        n_faults=n_faults,
        seed=seed,
        rows=tuple(rows),
    )


def restored_cdf(values) -> tuple[tuple[float, float], ...]:
    """Empirical CDF points (value, fraction <= value) over a sample."""
    xs = sorted(values)
    n = len(xs)
    if n == 0:
        return ()
    points = []
    for i, x in enumerate(xs, start=1):
        if i == n or xs[i] != x:
            points.append((float(x), i / n))
    return tuple(points)


# ---------------------------------------------------------------------------
# algorithm benchmark


@dataclass(frozen=True)
class RunRow:
    """One seeded run of one algorithm on the benchmark scenario."""

    algorithm: str
    seed: int
    restored: float
    weighted: float
    feasible: bool
    converged: bool
    vital_serviced: bool
    outer_iterations: int
    evaluations: int


@dataclass(frozen=True)
class AlgorithmSummary:
    """Restored-power statistics of one algorithm across the runs."""

    algorithm: str
    runs: int
    mean_restored: float
    std_restored: float
    min_restored: float
    max_restored: float
    mean_weighted: float
    std_weighted: float
    mean_evaluations: float
    vital_serviced_runs: int


@dataclass(frozen=True)
class BenchmarkReport:
    """Seed-matched comparison of several algorithms on one scenario."""

    fixture: str
    faults: tuple[str, ...]
    runs: int
    rows: tuple[RunRow, ...]
    summaries: tuple[AlgorithmSummary, ...]

    def summary(self, algorithm: str) -> AlgorithmSummary:
        for s in self.summaries:
            if s.algorithm == algorithm:
                return s
        raise KeyError(algorithm)


def _summarize(algorithm: str, rows: list[RunRow]) -> AlgorithmSummary:
    restored = np.array([r.restored for r in rows])
    weighted = np.array([r.weighted for r in rows])
    # population std: the runs are the whole population of interest
    return AlgorithmSummary(
        algorithm=algorithm,
        runs=len(rows),
        mean_restored=float(restored.mean()),
        std_restored=float(restored.std()),
        min_restored=float(restored.min()),
        max_restored=float(restored.max()),
        mean_weighted=float(weighted.mean()),
        std_weighted=float(weighted.std()),
        mean_evaluations=float(np.mean([r.evaluations for r in rows])),
        vital_serviced_runs=sum(1 for r in rows if r.vital_serviced),
    )


def run_benchmark(
    spec: SystemSpec,
    faults: FaultSet,
    algorithms: tuple[str, ...] = ("nrbbo",) + BASELINE_ALGORITHMS,
    runs: int = 50,
    seed: int = 0,
    params: BboParams | None = None,
    baseline_params: BaselineParams | None = None,
) -> BenchmarkReport:
    """Run each algorithm ``runs`` times with seeds seed, seed+1, ..."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    rows: list[RunRow] = []
    summaries: list[AlgorithmSummary] = []
    for algorithm in algorithms:
        alg_rows = []
        for k in range(runs):
            res = solve_with(spec, faults, algorithm, seed + k, params, baseline_params)
            alg_rows.append(
                RunRow(
                    algorithm=algorithm,
                    seed=seed + k,
                    restored=res.restored_power,
                    weighted=res.objective.weighted,
                    feasible=res.feasible,
                    converged=res.converged,
                    vital_serviced=res.vital_fully_serviced,
                    outer_iterations=res.outer_iterations,
                    evaluations=res.evaluations,
                )
            )
        rows.extend(alg_rows)
        summaries.append(_summarize(algorithm, alg_rows))
    return BenchmarkReport(
        fixture=spec.name,
        faults=faults.sorted_ids(),
        runs=runs,
        rows=tuple(rows),
        summaries=tuple(summaries),
    )


# ---------------------------------------------------------------------------
# serialization


def sweep_to_dict(report: SweepReport) -> dict:
    return {
        "fixture": report.fixture,
        "algorithm": report.algorithm,
        "n_faults": report.n_faults,
        "seed": report.seed,
        "scenario_count": report.scenario_count,
        "vital_serviced_count": report.vital_serviced_count,
        "vital_shortfall_fraction": report.vital_shortfall_fraction,
        "restored_cdf": [list(p) for p in restored_cdf(r.restored for r in report.rows)],
        "rows": [
            {
                "faults": list(r.faults),
                "mode": r.mode,
                "feasible": r.feasible,
                "converged": r.converged,
                "vital_serviced": r.vital_serviced,
                "restored_w": r.restored,
                "weighted": r.weighted,
                "outer_iterations": r.outer_iterations,
                "evaluations": r.evaluations,
            }
            for r in report.rows
        ],
    }


def sweep_to_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["faults", "mode", "feasible", "converged", "vital_serviced",
         "restored_w", "weighted", "outer_iterations", "evaluations"]
    )
    for r in report.rows:
        writer.writerow(
            [";".join(r.faults), r.mode, int(r.feasible), int(r.converged),
             int(r.vital_serviced), f"{r.restored:.6f}", f"{r.weighted:.6f}",
             r.outer_iterations, r.evaluations]
        )
    return buf.getvalue()


def benchmark_to_dict(report: BenchmarkReport) -> dict:
    return {
        "fixture": report.fixture,
        "faults": list(report.faults),
        "runs": report.runs,
        "summaries": [
            {
                "algorithm": s.algorithm,
                "runs": s.runs,
                "mean_restored_w": s.mean_restored,
                "std_restored_w": s.std_restored,
                "min_restored_w": s.min_restored,
                "max_restored_w": s.max_restored,
                "mean_weighted": s.mean_weighted,
                "std_weighted": s.std_weighted,
                "mean_evaluations": s.mean_evaluations,
                "vital_serviced_runs": s.vital_serviced_runs,
            }
            for s in report.summaries
        ],
        "rows": [
            {
                "algorithm": r.algorithm,
                "seed": r.seed,
                "restored_w": r.restored,
                "weighted": r.weighted,
                "feasible": r.feasible,
                "converged": r.converged,
                "vital_serviced": r.vital_serviced,
                "outer_iterations": r.outer_iterations,
                "evaluations": r.evaluations,
            }
            for r in report.rows
        ],
    }


def benchmark_to_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["algorithm", "runs", "mean_restored_w", "std_restored_w",
         "min_restored_w", "max_restored_w", "mean_weighted", "std_weighted",
         "mean_evaluations", "vital_serviced_runs"]
    )
    for s in report.summaries:
        writer.writerow(
            [s.algorithm, s.runs, f"{s.mean_restored:.6f}", f"{s.std_restored:.6f}",
             f"{s.min_restored:.6f}", f"{s.max_restored:.6f}",
             f"{s.mean_weighted:.6f}", f"{s.std_weighted:.6f}",
             f"{s.mean_evaluations:.2f}", s.vital_serviced_runs]
        )
    return buf.getvalue()
