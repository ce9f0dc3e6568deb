"""Reconfiguration engine for multi-zone MVDC shipboard power plants.

Public surface: plant model types, scenario loading, DC/AC solvers, the
mode-aware layered reconfiguration solver and its baselines, and the
fault-sweep analysis harness.
"""

from .analysis import (
    BenchmarkReport,
    SweepReport,
    enumerate_faults,
    restored_cdf,
    run_benchmark,
    run_sweep,
    solve_with,
)
from .baselines import BaselineParams, OracleSizeError, oracle_exhaustive, solve_baseline
from .bbo import BboParams, CandidateEvaluator, SearchError, layered_search, validate_weights
from .converter import (
    ConverterSolve,
    ConverterSolveError,
    GeneratorState,
    check_ac_limits,
    generator_state,
    solve_converter_nr,
)
from .dcflow import DcSolution, NetworkOperator, PowerFlowError, check_dc_limits, solve_dc
from .mode import Mode, ModeContext, classify, redundancy_assignments
from .model import (
    ConverterSpec,
    DcAdmittance,
    FaultSet,
    GeneratorSpec,
    Grade,
    LineSpec,
    LoadSpec,
    ObjectiveValue,
    ScenarioError,
    SwitchConfig,
    SystemSpec,
    all_on_config,
    build_admittance,
    bus_load_currents,
    load_bus,
    weighted_objective,
)
from .nrbbo import AuditReport, ReconfigError, ReconfigResult, audit, reconfigure
from .scenario import fixture_path, load_fixture, load_system_spec

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "BaselineParams",
    "BboParams",
    "BenchmarkReport",
    "CandidateEvaluator",
    "ConverterSolve",
    "ConverterSolveError",
    "ConverterSpec",
    "DcAdmittance",
    "DcSolution",
    "FaultSet",
    "GeneratorSpec",
    "GeneratorState",
    "Grade",
    "LineSpec",
    "LoadSpec",
    "Mode",
    "ModeContext",
    "NetworkOperator",
    "ObjectiveValue",
    "OracleSizeError",
    "PowerFlowError",
    "ReconfigError",
    "ReconfigResult",
    "ScenarioError",
    "SearchError",
    "SweepReport",
    "SwitchConfig",
    "SystemSpec",
    "all_on_config",
    "audit",
    "build_admittance",
    "bus_load_currents",
    "check_ac_limits",
    "check_dc_limits",
    "classify",
    "enumerate_faults",
    "fixture_path",
    "generator_state",
    "layered_search",
    "load_bus",
    "load_fixture",
    "load_system_spec",
    "oracle_exhaustive",
    "reconfigure",
    "redundancy_assignments",
    "restored_cdf",
    "run_benchmark",
    "run_sweep",
    "solve_baseline",
    "solve_converter_nr",
    "solve_dc",
    "solve_with",
    "weighted_objective",
    "__version__",
]
