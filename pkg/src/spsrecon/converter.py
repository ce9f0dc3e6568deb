"""Converter loss model and generator back-calculation.

Each converter couples one AC generator set to its DC output bus. Conversion
loss is a quadratic polynomial in the AC-side line current,

    loss(I) = c0 + c1 I + c2 I^2,      I = sqrt(P^2 + Q^2) / (sqrt(3) U),

so the AC-side active power P that yields a demanded DC-side output P_out
satisfies P - loss(I(P)) = P_out. That scalar equation is solved by damped
Newton iteration (`solve_converter_nr`), cross-checkable by bisection since
the residual is strictly increasing in P for sane coefficients.

From the converter's AC terminal state the generator terminal follows from
the line voltage-drop phasor: active/reactive line losses are
(P^2+Q^2)/U^2 * (R, X), the terminal voltage rises by (P R + Q X)/U in
phase and (P X - Q R)/U in quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

from .model import ConverterSpec, LimitReport, LimitViolation, SystemSpec

NR_MAX_ITERATIONS = 50


class ConverterSolveError(RuntimeError):
    """The Newton iteration failed or the demanded output is unreachable."""


@dataclass(frozen=True)
class ConverterSolve:
    """Converged AC-side operating point for one demanded DC output."""

    converter_id: str
    p_out: float  # demanded DC-side output [W]
    p_ac: float  # AC-side active power [W]
    q_ac: float  # AC-side reactive power [var]
    p_loss: float  # conversion loss [W]
    current: float  # AC-side line current [A]
    iterations: int
    residual: float  # |P - loss - P_out| at the solution [W]


@dataclass(frozen=True)
class GeneratorState:
    """Generator terminal quantities behind one converter."""

    generator_id: str
    p: float  # active power output [W]
    q: float  # reactive power output [var]
    voltage: float  # terminal voltage magnitude [V]
    angle: float  # terminal voltage angle [rad]
    line_loss_p: float  # generator-converter line losses [W]
    line_loss_q: float  # [var]
    feasible: bool | None = None  # set by check_ac_limits


def converter_current(p: float, q: float, voltage: float) -> float:
    """Three-phase line current [A] for apparent power at line voltage."""
    if voltage <= 0:
        raise ValueError("voltage must be positive")
    return math.hypot(p, q) / (math.sqrt(3.0) * voltage)


def converter_loss(conv: ConverterSpec, current: float) -> float:
    """Conversion loss [W] at an AC-side line current."""
    return conv.const_loss + conv.linear_loss * current + conv.quad_loss * current * current


def _loss_residual(conv: ConverterSpec, p_ac: float, p_out: float) -> tuple[float, float]:
    """Residual f(P) = P - loss(I(P)) - P_out and its derivative."""
    u = conv.ac_voltage
    current = converter_current(p_ac, conv.q_demand, u)
    f = p_ac - converter_loss(conv, current) - p_out
    if current > 0.0:
        di_dp = abs(p_ac) / (3.0 * u * u * current)
    else:
        di_dp = 1.0 / (math.sqrt(3.0) * u)
    df = 1.0 - (conv.linear_loss + 2.0 * conv.quad_loss * current) * di_dp
    return f, df


def solve_converter_nr(conv: ConverterSpec, p_out: float, tol_scale: float = 1e-6) -> ConverterSolve:
    """Find the AC-side power whose conversion loss balances ``p_out``.

    Newton iteration with |f| < tol_scale * max(1, |p_out|) as the stopping
    rule. The residual is strictly increasing in P wherever the loss slope
    stays below one watt per watt, which holds for physical coefficient
    choices; a non-positive derivative is reported as an unreachable demand.
    """
    tolerance = tol_scale * max(1.0, abs(p_out))
    # One fixed-point step from the demand itself gives a robust start.
    start = p_out + converter_loss(conv, converter_current(p_out, conv.q_demand, conv.ac_voltage))
    p_ac = start
    for iteration in range(1, NR_MAX_ITERATIONS + 1):
        f, df = _loss_residual(conv, p_ac, p_out)
        if abs(f) < tolerance:
            current = converter_current(p_ac, conv.q_demand, conv.ac_voltage)
            return ConverterSolve(
                converter_id=conv.id,
                p_out=p_out,
                p_ac=p_ac,
                q_ac=conv.q_demand,
                p_loss=converter_loss(conv, current),
                current=current,
                iterations=iteration,
                residual=abs(f),
            )
        if df <= 0.0 or not math.isfinite(f):
            raise ConverterSolveError(
                f"converter {conv.id}: demanded output {p_out:.3f} W unreachable for the loss curve"
            )
        p_ac = p_ac - f / df
    raise ConverterSolveError(
        f"converter {conv.id}: no convergence within {NR_MAX_ITERATIONS} Newton iterations"
    )


def generator_state(conv: ConverterSpec, solve: ConverterSolve, spec: SystemSpec) -> GeneratorState:
    """Back-calculate the generator terminal behind a converter solve."""
    p, q, u = solve.p_ac, solve.q_ac, conv.ac_voltage
    s2_over_u2 = (p * p + q * q) / (u * u)
    dp = s2_over_u2 * conv.line_resistance
    dq = s2_over_u2 * conv.line_reactance
    in_phase = u + (p * conv.line_resistance + q * conv.line_reactance) / u
    quadrature = (p * conv.line_reactance - q * conv.line_resistance) / u
    gen = spec.generator_of(conv)
    return GeneratorState(
        generator_id=gen.id,
        p=p + dp,
        q=q + dq,
        voltage=math.hypot(in_phase, quadrature),
        angle=conv.ac_angle + math.atan2(quadrature, in_phase),
        line_loss_p=dp,
        line_loss_q=dq,
    )


def check_ac_limits(
    spec: SystemSpec,
    solves: Mapping[str, ConverterSolve],
    states: Mapping[str, GeneratorState],
) -> tuple[LimitReport, dict[str, GeneratorState]]:
    """Window checks for every converter/generator pair.

    Covers generator active/reactive power, terminal voltage, rotor angle
    and stator current, converter AC current, and the converter DC output
    window. Returns the report plus the generator states with their
    ``feasible`` flag filled in.
    """
    violations: list[LimitViolation] = []
    checked = 0
    flagged: dict[str, GeneratorState] = {}
    for conv in spec.converters:
        solve = solves.get(conv.id)
        state = states.get(conv.id)
        if solve is None or state is None:
            continue
        gen = spec.generator_of(conv)
        local: list[LimitViolation] = []

        def window(kind: str, element: str, value: float, low: float, high: float) -> None:
            nonlocal checked
            checked += 1
            if not low <= value <= high:
                local.append(LimitViolation(kind, element, value, low, high))

        window("gen_active_power", gen.id, state.p, gen.p_min, gen.p_max)
        window("gen_reactive_power", gen.id, state.q, gen.q_min, gen.q_max)
        window("gen_voltage", gen.id, state.voltage, gen.voltage_min, gen.voltage_max)
        window("gen_angle", gen.id, state.angle, gen.angle_min, gen.angle_max)
        stator_current = math.hypot(state.p, state.q) / (math.sqrt(3.0) * state.voltage)
        window("gen_current", gen.id, stator_current, 0.0, gen.current_max)
        window("converter_current", conv.id, solve.current, 0.0, conv.current_max)
        window("converter_output", conv.id, solve.p_out, conv.p_out_min, conv.p_out_max)

        violations.extend(local)
        flagged[conv.id] = replace(state, feasible=not local)
    return LimitReport.from_violations(violations, checked), flagged
