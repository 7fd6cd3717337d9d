"""Two-interval slot state machine of a power packet router.

Each slot has an ``f`` interval followed by a ``b`` interval.  During ``f``
the router replays the previous slot's result from its buffer and stores an
incoming ``f`` packet.  The operation result is known once the ``b`` input
has been seen; a 1 is delivered at ``b`` either straight from the ``b``
source (RT3) or from the buffer (RT2).

Gate signals:

* RT1 -- connect the ``f`` input to the buffer (charging)
* RT2 -- discharge the buffer into the load
* RT3 -- connect the ``b`` input directly to the load
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import IO, Iterable, Sequence

import numpy as np

from .bitstream import BitStream, SeededGenerator
from .errors import DomainError, SimulationFault

__all__ = [
    "Operation",
    "OperationMode",
    "SlotInputs",
    "SwitchSignals",
    "SlotTrace",
    "BufferKind",
    "StarvationPolicy",
    "Buffer",
    "Router",
    "compute_result",
    "TRACE_COLUMNS",
    "write_trace_csv",
    "write_trace_jsonl",
    "read_trace_csv",
]


class Operation(str, Enum):
    MUL = "mul"
    ADD = "add"


@dataclass(frozen=True)
class OperationMode:
    op: Operation
    p_mux: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "op", Operation(self.op))
        if not 0.0 <= float(self.p_mux) <= 1.0:
            raise DomainError(f"p_mux must lie in [0, 1], got {self.p_mux}")

    @classmethod
    def multiplication(cls) -> "OperationMode":
        return cls(Operation.MUL)

    @classmethod
    def addition(cls, p_mux: float = 0.5) -> "OperationMode":
        return cls(Operation.ADD, p_mux)

    def expected_output(self, p_f: float, p_b: float) -> float:
        """Output packet density for independent inputs of densities ``p_f``, ``p_b``."""
        if self.op is Operation.MUL:
            return p_f * p_b
        return p_f * self.p_mux + p_b * (1 - self.p_mux)


@dataclass(frozen=True)
class SlotInputs:
    in_f: int
    in_b: int
    mux: int | None = None


@dataclass(frozen=True)
class SwitchSignals:
    rt1_f: int
    rt2_f: int
    rt2_b: int
    rt3_b: int


@dataclass(frozen=True, slots=True)
class SlotTrace:
    slot: int
    in_f: int
    in_b: int
    mux: int
    result: int
    rt1_f: int
    rt2_f: int
    rt2_b: int
    rt3_b: int
    out_f: int
    out_b: int
    buffer_before: int
    buffer_after: int
    starved_f: bool = False
    starved_b: bool = False

    @property
    def inputs(self) -> SlotInputs:
        return SlotInputs(self.in_f, self.in_b, self.mux)

    @property
    def signals(self) -> SwitchSignals:
        return SwitchSignals(self.rt1_f, self.rt2_f, self.rt2_b, self.rt3_b)


def compute_result(mode: OperationMode | Operation, in_f: int, in_b: int, mux: int = 0) -> int:
    op = mode.op if isinstance(mode, OperationMode) else Operation(mode)
    if op is Operation.MUL:
        return in_f & in_b
    return (in_f & mux) | (in_b & (1 - mux))


class BufferKind(str, Enum):
    IDEAL = "ideal"
    LEDGER = "ledger"


class StarvationPolicy(str, Enum):
    ERROR = "error"
    EMIT_ZERO = "emit_zero"


@dataclass
class Buffer:
    """Energy accounting of the router's storage element in half-slot units.

    ``ideal`` never starves and has no capacity; its ``charge`` is the net
    ledger balance and may become negative.  ``ledger`` is a quantized store
    bounded by ``[0, capacity]`` (``capacity=None`` means unbounded).
    """

    kind: BufferKind = BufferKind.IDEAL
    capacity: int | None = None
    initial_charge: int = 0
    starvation_policy: StarvationPolicy = StarvationPolicy.ERROR
    charge: int = field(init=False)
    charges: int = field(init=False, default=0)
    outputs: int = field(init=False, default=0)
    overflow_discards: int = field(init=False, default=0)
    starvations: int = field(init=False, default=0)

    def __post_init__(self):
        self.kind = BufferKind(self.kind)
        self.starvation_policy = StarvationPolicy(self.starvation_policy)
        if self.initial_charge < 0:
            raise DomainError("initial_charge must be >= 0")
        if self.capacity is not None:
            if self.capacity < 0:
                raise DomainError("capacity must be >= 0")
            if self.initial_charge > self.capacity:
                raise DomainError("initial_charge exceeds capacity")
        self.charge = self.initial_charge

    @classmethod
    def ideal(cls) -> "Buffer":
        return cls(BufferKind.IDEAL)

    @classmethod
    def ledger(cls, capacity=None, initial_charge=0, starvation_policy="error") -> "Buffer":
        return cls(BufferKind.LEDGER, capacity, initial_charge, StarvationPolicy(starvation_policy))

    def store(self) -> bool:
        if (self.kind is BufferKind.LEDGER and self.capacity is not None
                and self.charge >= self.capacity):
            self.overflow_discards += 1
            return False
        self.charge += 1
        self.charges += 1
        return True

    def draw(self, slot: int, interval: str) -> bool:
        if self.kind is BufferKind.LEDGER and self.charge <= 0:
            self.starvations += 1
            if self.starvation_policy is StarvationPolicy.ERROR:
                raise SimulationFault(slot, interval)
            return False
        self.charge -= 1
        self.outputs += 1
        return True

    def reset(self) -> None:
        self.charge = self.initial_charge
        self.charges = self.outputs = self.overflow_discards = self.starvations = 0


class Router:
    """Sequential router state: mode, previous result, buffer and mux source."""

    def __init__(
        self,
        mode: OperationMode,
        buffer: Buffer | None = None,
        mux_gen: SeededGenerator | None = None,
        prev_result: int = 0,
    ):
        self.mode = mode
        self.buffer = buffer if buffer is not None else Buffer.ideal()
        self.mux_gen = mux_gen
        if prev_result not in (0, 1):
            raise DomainError("prev_result must be 0 or 1")
        self.prev_result = prev_result
        self.slot = 0

    def _draw_mux(self) -> int:
        if self.mux_gen is None:
            raise DomainError("addition mode needs a mux generator or explicit mux bits")
        return int(self.mux_gen.bits(self.mode.p_mux, 1)[0])

    def step(self, inputs: SlotInputs) -> SlotTrace:
        in_f, in_b = int(inputs.in_f), int(inputs.in_b)
        if in_f not in (0, 1) or in_b not in (0, 1):
            raise DomainError(f"slot inputs must be bits, got {inputs}")
        add = self.mode.op is Operation.ADD
        mux = inputs.mux
        if mux is None:
            mux = self._draw_mux() if add else 0
        slot, buf = self.slot, self.buffer
        before = buf.charge

        # f interval: the stored packet is counted before the replayed output
        # is drawn, so a packet arriving at f can cover that same interval.
        rt1_f = in_f
        if in_f:
            buf.store()
        rt2_f = self.prev_result
        out_f, starved_f = 0, False
        if rt2_f:
            if buf.draw(slot, "f"):
                out_f = 1
            else:
                starved_f = True

        if add:
            result = (in_f & mux) | (in_b & (1 - mux))
        else:
            result = in_f & in_b

        # b interval; a rejected b packet bypasses the buffer and is lost
        rt2_b = rt3_b = out_b = 0
        starved_b = False
        if result:
            if in_b:
                rt3_b = out_b = 1
            else:
                rt2_b = 1
                if buf.draw(slot, "b"):
                    out_b = 1
                else:
                    starved_b = True

        self.prev_result = result
        self.slot += 1
        return SlotTrace(slot, in_f, in_b, int(mux), result, rt1_f, rt2_f, rt2_b, rt3_b,
                         out_f, out_b, before, buf.charge, starved_f, starved_b)

    def run_sequence(self, in_f: BitStream, in_b: BitStream,
                     mux: Sequence[int] | None = None) -> tuple[list[SlotTrace], BitStream]:
        """Run one slot per input pair; returns traces and the 2n interval outputs.

        In addition mode the selector bits are drawn from ``mux_gen`` in one
        batch unless ``mux`` is given.
        """
        n = len(in_f)
        if len(in_b) != n:
            raise DomainError(f"input stream lengths differ: {n} vs {len(in_b)}")
        if mux is None:
            if self.mode.op is Operation.ADD:
                if self.mux_gen is None:
                    raise DomainError("addition mode needs a mux generator or explicit mux bits")
                mux = self.mux_gen.bits(self.mode.p_mux, n)
            else:
                mux = np.zeros(n, dtype=np.uint8)
        elif len(mux) != n:
            raise DomainError("mux stream length does not match inputs")
        traces = [self.step(SlotInputs(f, b, m))
                  for f, b, m in zip(in_f.bits.tolist(), in_b.bits.tolist(), list(mux))]
        out = np.empty(2 * n, dtype=np.uint8)
        out[0::2] = [t.out_f for t in traces]
        out[1::2] = [t.out_b for t in traces]
        return traces, BitStream(out)


TRACE_COLUMNS = ("slot", "in_f", "in_b", "mux", "result", "rt1_f", "rt2_f", "rt2_b", "rt3_b",
                 "out_f", "out_b", "buffer_before", "buffer_after")


def _trace_row(t: SlotTrace) -> list[int]:
    return [getattr(t, c) for c in TRACE_COLUMNS]


def write_trace_csv(traces: Iterable[SlotTrace], dest: str | IO[str]) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(_trace_row(t) for t in traces)

    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        with open(dest, "w", newline="") as fh:
            _write(fh)
    else:
        _write(dest)


def write_trace_jsonl(traces: Iterable[SlotTrace], dest: str | IO[str]) -> None:
    def _write(fh):
        for t in traces:
            rec = asdict(t)
            rec["starved_f"] = bool(rec["starved_f"])
            rec["starved_b"] = bool(rec["starved_b"])
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")

    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        with open(dest, "w") as fh:
            _write(fh)
    else:
        _write(dest)


def read_trace_csv(src: str | IO[str]) -> list[dict[str, int]]:
    fh = open(src, newline="") if isinstance(src, str) or hasattr(src, "__fspath__") else src
    try:
        return [{k: int(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    finally:
        if fh is not src:
            fh.close()

