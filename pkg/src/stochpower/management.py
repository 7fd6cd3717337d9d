"""Feed-forward power management with an external and an internal source.

Subsystem A meets a known load demand ``p_tar`` by combining surplus packets
from subsystem B (constant density ``p_ext``) with its own adjustable source
(density ``p_int``).  Multiplication reaches ``[0, p_ext]`` with
``p_int = p_tar / p_ext``; addition reaches ``[p_ext/2, (1+p_ext)/2]`` with
``p_int = 2*p_tar - p_ext``.

All planning arithmetic is written so that ``fractions.Fraction`` inputs stay
exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bitstream import SeededGenerator, bernoulli_stream
from .cases import normalization_base
from .errors import DomainError, InfeasiblePlanError
from .power import (ElectricalParams, PowerSeries, WaveformModel, moving_average, normalize,
                    synthesize_waveform)
from .router import Buffer, Operation, OperationMode, Router, SlotTrace

__all__ = [
    "Segment",
    "ManagementConfig",
    "PlanStep",
    "feasible_ops",
    "plan_internal",
    "min_internal_policy",
    "prefer_multiplication_policy",
    "ManagementRun",
    "run_management",
    "DEFAULT_SCHEDULE",
]

EXTERNAL, INTERNAL, MUX = 0, 1, 2


@dataclass(frozen=True)
class Segment:
    p_tar: float
    hold_s: float = 1.0

    def __post_init__(self):
        if not 0 <= self.p_tar <= 1:
            raise DomainError(f"p_tar must lie in [0, 1], got {self.p_tar}")
        if self.hold_s <= 0:
            raise DomainError("hold_s must be positive")


# Configuration default (not measured data): visits the multiplication-only,
# both-feasible and addition-only regions at p_ext = 0.7.
DEFAULT_SCHEDULE = (Segment(0.2), Segment(0.5), Segment(0.8), Segment(0.6), Segment(0.3))


@dataclass(frozen=True)
class ManagementConfig:
    p_ext: float = 0.7
    schedule: tuple[Segment, ...] = DEFAULT_SCHEDULE
    moving_avg_s: float = 0.1

    def __post_init__(self):
        if not 0 < self.p_ext <= 1:
            raise DomainError(f"p_ext must lie in (0, 1], got {self.p_ext}")
        object.__setattr__(self, "schedule", tuple(self.schedule))
        if self.moving_avg_s <= 0:
            raise DomainError("moving_avg_s must be positive")


@dataclass(frozen=True)
class PlanStep:
    p_tar: float
    feasible_mul: bool
    feasible_add: bool
    chosen_op: Operation | None
    p_int: float | None

    @property
    def feasible(self) -> bool:
        return self.chosen_op is not None


def _check(p_tar, p_ext):
    if not 0 <= p_tar <= 1:
        raise DomainError(f"p_tar must lie in [0, 1], got {p_tar}")
    if not 0 <= p_ext <= 1:
        raise DomainError(f"p_ext must lie in [0, 1], got {p_ext}")
    if p_ext == 0:
        raise DomainError("p_ext must be positive")


def feasible_ops(p_tar, p_ext) -> tuple[bool, bool]:
    _check(p_tar, p_ext)
    return 0 <= p_tar <= p_ext, p_ext / 2 <= p_tar <= (1 + p_ext) / 2


def internal_probability(op: Operation, p_tar, p_ext):
    if Operation(op) is Operation.MUL:
        return p_tar / p_ext
    return 2 * p_tar - p_ext


Policy = Callable[[object, object, object], Operation]


def min_internal_policy(p_tar, p_ext, p_int_mul) -> Operation:
    """Pick the operation needing the lower internal density; ties go to addition."""
    p_int_add = internal_probability(Operation.ADD, p_tar, p_ext)
    return Operation.MUL if p_int_mul < p_int_add else Operation.ADD


def prefer_multiplication_policy(p_tar, p_ext, p_int_mul) -> Operation:
    return Operation.MUL


def plan_internal(p_tar, p_ext, policy: Policy = min_internal_policy) -> PlanStep:
    """Choose an operation and the internal density realizing ``p_tar``.

    A target outside both regions yields a step with ``chosen_op=None``.
    """
    mul_ok, add_ok = feasible_ops(p_tar, p_ext)
    if mul_ok and add_ok:
        op = policy(p_tar, p_ext, internal_probability(Operation.MUL, p_tar, p_ext))
    elif mul_ok:
        op = Operation.MUL
    elif add_ok:
        op = Operation.ADD
    else:
        return PlanStep(p_tar, False, False, None, None)
    return PlanStep(p_tar, mul_ok, add_ok, op, internal_probability(op, p_tar, p_ext))


@dataclass
class ManagementRun:
    config: ManagementConfig
    plan: list[PlanStep]
    output: PowerSeries
    target: PowerSeries
    segment_bounds: list[tuple[float, float]]
    tracking_error: list[float]
    base_power: float
    traces: list[SlotTrace] = field(repr=False, default_factory=list)


def run_management(
    config: ManagementConfig,
    master_seed: int = 0,
    params: ElectricalParams = ElectricalParams(),
    waveform: WaveformModel = WaveformModel(),
    buffer: Buffer | None = None,
    policy: Policy = min_internal_policy,
    settle_s: float | None = None,
) -> ManagementRun:
    """Simulate the schedule and return the smoothed, normalized load power.

    The external source drives the router's ``f`` input and the internal
    source its ``b`` input.  Segment ``k`` draws its streams from seed path
    ``(k, role)``.  Router state carries across segments.  The tracking error
    of a segment is the largest deviation of the moving average from
    ``p_tar`` over outputs stamped at least ``settle_s`` (default: the moving
    average window) after the segment start.
    """
    if not config.schedule:
        raise DomainError("the schedule is empty")
    plan = [plan_internal(s.p_tar, config.p_ext, policy) for s in config.schedule]
    for step in plan:
        if not step.feasible:
            raise InfeasiblePlanError(step.p_tar, config.p_ext)

    router = Router(OperationMode(plan[0].chosen_op), buffer)
    traces: list[SlotTrace] = []
    bounds: list[tuple[float, float]] = []
    slot_counts = []
    t = 0.0
    for k, (seg, step) in enumerate(zip(config.schedule, plan)):
        n = params.slots_in(seg.hold_s)
        slot_counts.append(n)
        router.mode = OperationMode(step.chosen_op)
        router.mux_gen = SeededGenerator.derived(master_seed, k, MUX)
        ext = bernoulli_stream(config.p_ext, n, SeededGenerator.derived(master_seed, k, EXTERNAL))
        internal = bernoulli_stream(float(step.p_int), n, SeededGenerator.derived(master_seed, k, INTERNAL))
        seg_traces, _ = router.run_sequence(ext, internal)
        traces.extend(seg_traces)
        bounds.append((t, t + n * params.slot_s))
        t += n * params.slot_s

    total = sum(slot_counts)
    base = normalization_base(total, params, waveform)
    load = synthesize_waveform(traces, params, waveform).load
    output = moving_average(normalize(load, base), config.moving_avg_s)
    per_slot = np.repeat([float(s.p_tar) for s in config.schedule], slot_counts)
    target = PowerSeries(0.0, params.slot_s, per_slot)

    settle = config.moving_avg_s if settle_s is None else settle_s
    times = output.times
    errors = []
    for (start, end), seg in zip(bounds, config.schedule):
        sel = (times >= start + settle - 1e-12) & (times <= end + 1e-12)
        vals = output.samples[sel]
        errors.append(float(np.max(np.abs(vals - float(seg.p_tar)))) if vals.size else float("nan"))
    return ManagementRun(config, plan, output, target, bounds, errors, base, traces)

