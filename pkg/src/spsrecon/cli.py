"""Command-line front end: solve, sweep, compare, validate.

Output contract: identical invocation plus identical seed produces
byte-identical JSON. Machine formats therefore never include wall-clock
timing. Exit codes: 0 success (for ``solve``: feasible and every vital
load serviced), 2 solver finished but the scenario is infeasible or
leaves vital load unserved, 1 any error (bad flags, missing files,
validation failures).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analysis
from .baselines import BASELINE_ALGORITHMS, BaselineParams, OracleSizeError
from .bbo import BboParams, SearchError, validate_weights
from .converter import ConverterSolveError
from .dcflow import PowerFlowError
from .model import FaultSet, Grade, ScenarioError, SystemSpec, load_bus
from .nrbbo import ReconfigError, ReconfigResult
from .scenario import fixture_path, load_system_spec

__all__ = ["main", "result_to_dict", "result_to_text"]

_ALGORITHMS = ("nrbbo",) + BASELINE_ALGORITHMS + ("oracle",)
_MW = 1e6


def _resolve_spec(value: str) -> SystemSpec:
    """Accept a file path (with or without .toml) or a bundled fixture name."""
    path = Path(value)
    if path.exists() and path.is_file():
        return load_system_spec(path)
    with_ext = path.with_suffix(".toml")
    if with_ext.exists():
        return load_system_spec(with_ext)
    try:
        return load_system_spec(fixture_path(path.stem))
    except ScenarioError:
        raise ScenarioError(
            f"scenario {value!r} not found (no such file or bundled fixture)"
        ) from None


def _parse_faults(text: str | None) -> FaultSet:
    if not text:
        return FaultSet.of()
    ids = [tok for tok in text.replace(";", ",").split(",") if tok.strip()]
    return FaultSet.of(*ids)


def _default_seed() -> int:
    env = os.environ.get("SPSRECON_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise ScenarioError(f"SPSRECON_SEED must be an integer, got {env!r}") from exc


def _search_params(args: argparse.Namespace) -> tuple[BboParams | None, BaselineParams | None]:
    overrides = {
        k: v
        for k, v in (("habitats", args.habitats), ("generations", args.generations),
                     ("re", args.re))
        if v is not None
    }
    if not overrides:
        return None, None
    bbo_kw = {}
    base_kw = {}
    if "habitats" in overrides:
        bbo_kw["habitat_count"] = overrides["habitats"]
        base_kw["population"] = overrides["habitats"]
    if "generations" in overrides:
        bbo_kw["max_generations"] = overrides["generations"]
        base_kw["generations"] = overrides["generations"]
    if "re" in overrides:
        bbo_kw["patience"] = overrides["re"]
        base_kw["patience"] = overrides["re"]
    return BboParams(**bbo_kw), BaselineParams(**base_kw)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _json_dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# solve document


def result_to_dict(spec: SystemSpec, result: ReconfigResult) -> dict:
    """JSON-ready solve document: summary, switch table, power table.

    Deliberately excludes wall-clock time so repeated runs with one seed
    serialize byte-identically.
    """
    cfg = result.config
    switch_rows = []
    for load in spec.loads:
        bus = load_bus(spec, cfg, load)
        switch_rows.append(
            {
                "load": load.name,
                "zone": load.zone,
                "grade": load.grade.name.lower(),
                "rated_w": load.power,
                "weight": load.weight,
                "bus": bus,
                "side": "sb" if cfg.sb_select[load.zone - 1] else "pb",
                "serviced": bool(cfg.loads_on[load.id]),
            }
        )
    converters = []
    for conv in spec.converters:
        solve = result.converter_solves.get(conv.id)
        gen = result.generator_states.get(conv.generator)
        entry: dict = {
            "converter": conv.id,
            "bus": conv.bus,
            "energized": result.dc.is_energized(conv.bus),
            "p_dc_out_w": result.dc.converter_power.get(conv.bus, 0.0),
        }
        if solve is not None:
            entry.update(
                p_ac_w=solve.p_ac,
                q_ac_var=solve.q_ac,
                loss_w=solve.p_loss,
                ac_current_a=solve.current,
            )
        if gen is not None:
            entry["generator"] = {
                "id": gen.generator_id,
                "p_w": gen.p,
                "q_var": gen.q,
                "voltage_v": gen.voltage,
                "angle_rad": gen.angle,
                "line_loss_w": gen.line_loss_p,
            }
        converters.append(entry)
    energized = [int(b.id) for b in spec.buses if result.dc.is_energized(b.id)]
    return {
        "algorithm": result.algorithm,
        "scenario": spec.name,
        "faults": list(result.faults.sorted_ids()),
        "seed": result.seed,
        "mode": result.mode.value,
        "feasible": result.feasible,
        "converged": result.converged,
        "vital_fully_serviced": result.vital_fully_serviced,
        "restored_w": result.restored_power,
        "weighted": result.objective.weighted,
        "total_load_w": sum(l.power for l in spec.loads),
        "sb_select": list(cfg.sb_select),
        "zone_supply": {str(z): ("sb" if cfg.sb_select[z - 1] else "pb")
                        for z in range(1, spec.zone_count + 1)},
        "switch_table": switch_rows,
        "power_table": converters,
        "shed_loads": [l.name for l in spec.loads if not cfg.loads_on[l.id]],
        "unreachable_loads": list(result.unreachable_loads),
        "dc": {
            "energized_buses": energized,
            "min_voltage_v": min(
                (result.dc.voltage(b) for b in energized), default=0.0
            ),
            "voltages_v": {str(b.id): result.dc.voltage(b.id) for b in spec.buses},
            "branch_currents_a": {
                k: result.dc.branch_currents[k] for k in sorted(result.dc.branch_currents)
            },
            "kcl_residual_pu": result.dc.residual,
        },
        "limits": {
            "dc_ok": result.dc_limits.ok,
            "ac_ok": result.ac_limits.ok,
            "violations": [str(v) for v in result.dc_limits.violations]
            + [str(v) for v in result.ac_limits.violations],
        },
        "outer_iterations": result.outer_iterations,
        "combos_considered": result.combos_considered,
        "evaluations": result.evaluations,
    }


def result_to_text(spec: SystemSpec, result: ReconfigResult) -> str:
    cfg = result.config
    total = sum(l.power for l in spec.loads)
    shed = [l.name for l in spec.loads if not cfg.loads_on[l.id]]
    lines = [
        f"scenario {spec.name}  algorithm {result.algorithm}  seed {result.seed}",
        f"faults: {', '.join(result.faults.sorted_ids()) or '(none)'}",
        f"mode {result.mode.value}  feasible {'yes' if result.feasible else 'NO'}"
        f"  converged {'yes' if result.converged else 'NO'}"
        f"  vital serviced {'yes' if result.vital_fully_serviced else 'NO'}",
        f"restored {result.restored_power / _MW:.2f} MW of {total / _MW:.2f} MW"
        f"  (weighted {result.objective.weighted / _MW:.2f})",
        "zone supply: " + "  ".join(
            f"z{z}={'sb' if cfg.sb_select[z - 1] else 'pb'}"
            for z in range(1, spec.zone_count + 1)
        ),
        f"serviced {sum(cfg.loads_on)}/{spec.load_count} loads"
        + (f"; shed: {', '.join(shed)}" if shed else ""),
    ]
    for conv in spec.converters:
        solve = result.converter_solves.get(conv.id)
        p_dc = result.dc.converter_power.get(conv.bus, 0.0)
        if solve is None:
            lines.append(f"{conv.id}: p_out {p_dc / _MW:.2f} MW (no AC solve)")
            continue
        gen = result.generator_states.get(conv.generator)
        gen_txt = (
            f"; {gen.generator_id} P {gen.p / _MW:.2f} MW Q {gen.q / _MW:.2f} Mvar"
            f" V {gen.voltage:.0f} V"
            if gen is not None
            else ""
        )
        lines.append(
            f"{conv.id}: p_out {p_dc / _MW:.2f} MW loss {solve.p_loss / 1e3:.0f} kW"
            f" current {solve.current:.0f} A{gen_txt}"
        )
    energized = [b.id for b in spec.buses if result.dc.is_energized(b.id)]
    vmin = min((result.dc.voltage(b) for b in energized), default=0.0)
    lines.append(
        f"min bus voltage {vmin:.1f} V  KCL residual {result.dc.residual:.2e} pu"
        f"  dc limits {'ok' if result.dc_limits.ok else 'VIOLATED'}"
        f"  ac limits {'ok' if result.ac_limits.ok else 'VIOLATED'}"
    )
    if result.unreachable_loads:
        lines.append("unreachable (dead bus both sides): " + ", ".join(result.unreachable_loads))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def _cmd_solve(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args.scenario)
    faults = _parse_faults(args.faults)
    params, base_params = _search_params(args)
    result = analysis.solve_with(
        spec, faults, args.algorithm, args.seed, params, base_params
    )
    if args.format == "text":
        _emit(result_to_text(spec, result), args.out)
    else:
        doc = result_to_dict(spec, result)
        if args.format == "csv":
            rows = ["load,zone,grade,bus,side,serviced,rated_w"]
            for r in doc["switch_table"]:
                rows.append(
                    f"{r['load']},{r['zone']},{r['grade']},{r['bus']},{r['side']},"
                    f"{int(r['serviced'])},{r['rated_w']:.0f}"
                )
            _emit("\n".join(rows) + "\n", args.out)
        else:
            _emit(_json_dumps(doc), args.out)
    if args.out:
        print(
            f"{spec.name}: {result.mode.value}, restored "
            f"{result.restored_power / _MW:.2f} MW -> {args.out}"
        )
    if result.feasible and result.vital_fully_serviced:
        return 0
    return 2


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args.scenario)
    params, base_params = _search_params(args)
    report = analysis.run_sweep(
        spec, args.n_faults, args.algorithm, args.seed, params, base_params
    )
    if args.format == "csv":
        _emit(analysis.sweep_to_csv(report), args.out)
    elif args.format == "text":
        lines = [
            f"sweep {spec.name}: {report.scenario_count} scenarios with "
            f"{args.n_faults} simultaneous faults, algorithm {args.algorithm}",
            f"vital fully serviced in {report.vital_serviced_count}/{report.scenario_count}"
            f" ({100 * (1 - report.vital_shortfall_fraction):.1f}%)",
        ]
        for faults in report.shortfall_scenarios():
            lines.append("  vital shortfall: " + ", ".join(faults))
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(_json_dumps(analysis.sweep_to_dict(report)), args.out)
    if args.out:
        print(
            f"{spec.name}: {report.scenario_count} scenarios, shortfall "
            f"{report.vital_shortfall_fraction:.3f} -> {args.out}"
        )
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args.scenario)
    faults = _parse_faults(args.faults)
    params, base_params = _search_params(args)
    algorithms = tuple(a for a in args.algorithm.split(",") if a)
    for a in algorithms:
        if a not in _ALGORITHMS:
            raise ScenarioError(f"unknown algorithm {a!r}; expected one of {_ALGORITHMS}")
    report = analysis.run_benchmark(
        spec, faults, algorithms, args.runs, args.seed, params, base_params
    )
    if args.format == "csv":
        _emit(analysis.benchmark_to_csv(report), args.out)
    elif args.format == "text":
        lines = [
            f"compare {spec.name}  faults: {', '.join(report.faults) or '(none)'}"
            f"  runs {report.runs}  seeds {args.seed}..{args.seed + args.runs - 1}"
        ]
        for s in report.summaries:
            lines.append(
                f"  {s.algorithm:>6}: restored {s.mean_restored / _MW:.3f}"
                f" +- {s.std_restored / _MW:.3f} MW"
                f"  [{s.min_restored / _MW:.2f}, {s.max_restored / _MW:.2f}]"
                f"  weighted {s.mean_weighted / _MW:.2f}"
                f"  evals {s.mean_evaluations:.0f}"
            )
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(_json_dumps(analysis.benchmark_to_dict(report)), args.out)
    if args.out:
        print(f"{spec.name}: compared {', '.join(algorithms)} -> {args.out}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args.scenario)
    problems = validate_weights(spec)
    total = sum(l.power for l in spec.loads)
    per_grade = {
        g.name.lower(): sum(l.power for l in spec.loads if l.grade == g) for g in Grade
    }
    doc = {
        "scenario": spec.name,
        "zones": spec.zone_count,
        "buses": len(spec.buses),
        "loads": spec.load_count,
        "converters": len(spec.converters),
        "faultable_segments": len(spec.faultable_lines),
        "total_load_w": total,
        "load_by_grade_w": per_grade,
        "weights_ok": not problems,
        "weight_problems": problems,
    }
    if args.format == "json":
        _emit(_json_dumps(doc), args.out)
    else:
        lines = [
            f"plant {spec.name}: K={spec.zone_count} zones, N={len(spec.buses)} buses,"
            f" L={spec.load_count} loads, {len(spec.converters)} converters",
            f"total load {total / _MW:.2f} MW ("
            + ", ".join(f"{g}: {p / _MW:.2f}" for g, p in per_grade.items())
            + ")",
            f"faultable segments: {len(spec.faultable_lines)}",
        ]
        if problems:
            lines.append("weight ordering problems:")
            lines.extend(f"  {p}" for p in problems)
        else:
            lines.append("priority weights satisfy the layer-dominance bounds")
        _emit("\n".join(lines) + "\n", args.out)
    return 0 if not problems else 2


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spsrecon",
        description="Zonal MVDC power system reconfiguration: restore maximum "
        "priority-weighted load after segment faults.",
        epilog="Exit codes: 0 success; 2 solver finished but scenario infeasible "
        "or vital load unserved; 1 error.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, algorithm_default: str = "nrbbo") -> None:
        p.add_argument("--scenario", required=True,
                       help="plant file (TOML) or bundled fixture name "
                            "(six_zone, two_zone)")
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="root RNG seed (default: $SPSRECON_SEED or 0)")
        p.add_argument("--habitats", type=int, default=None,
                       help="population size per search")
        p.add_argument("--generations", type=int, default=None,
                       help="generation cap per search")
        p.add_argument("--re", type=int, default=None, metavar="GENS",
                       help="stall patience in generations")
        p.add_argument("--out", default=None, help="write output to this file")
        p.add_argument("--format", default="json", choices=("json", "csv", "text"))
        if algorithm_default is not None:
            p.add_argument("--algorithm", default=algorithm_default,
                           help=f"one of {', '.join(_ALGORITHMS)}")

    p_solve = sub.add_parser("solve", help="reconfigure one fault scenario")
    common(p_solve)
    p_solve.add_argument("--faults", default="",
                         help="comma-separated segment ids, e.g. pb:2-3,sb:4-5")
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="solve every n-fault scenario")
    common(p_sweep)
    p_sweep.add_argument("--n-faults", type=int, required=True, dest="n_faults",
                         help="number of simultaneous segment faults")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="benchmark algorithms across seeds")
    common(p_cmp, algorithm_default="nrbbo,bbo,ga,pso")
    p_cmp.add_argument("--faults", default="",
                       help="comma-separated segment ids of the benchmark scenario")
    p_cmp.add_argument("--runs", type=int, default=50,
                       help="seeded runs per algorithm (seeds seed..seed+runs-1)")
    p_cmp.set_defaults(func=_cmd_compare)

    p_val = sub.add_parser("validate", help="load a plant file and echo its shape")
    p_val.add_argument("--scenario", required=True)
    p_val.add_argument("--out", default=None)
    p_val.add_argument("--format", default="text", choices=("json", "text"))
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        parser = _build_parser()
    except ScenarioError as exc:
        # a malformed SPSRECON_SEED surfaces while defaults are collected
        print(f"error: {exc}", file=sys.stderr)
        return 1
    args = parser.parse_args(argv)
    if getattr(args, "algorithm", None) is not None and args.command in ("solve", "sweep"):
        if args.algorithm not in _ALGORITHMS:
            parser.error(f"unknown algorithm {args.algorithm!r}")
    try:
        return args.func(args)
    except (ScenarioError, SearchError, ReconfigError, OracleSizeError,
            ConverterSolveError, PowerFlowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
