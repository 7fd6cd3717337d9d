"""Verification cases and single-router runs with two Bernoulli sources.

Seed layout for one run under ``master_seed``: the ``f`` source, the ``b``
source and the router's multiplexer draw from ``derive_seed(master, *path, k)``
with ``k = 0, 1, 2`` respectively.  ``path`` is empty for a stand-alone case
run and ``(case_index, trial)`` inside a multi-trial study.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bitstream import BitStream, SeededGenerator, bernoulli_stream
from .errors import DomainError
from .power import ElectricalParams, PowerSeries, WaveformModel, Waveforms, synthesize_waveform
from .router import Buffer, Operation, OperationMode, Router, SlotTrace

__all__ = ["Case", "VERIFICATION_CASES", "ALL_ONES", "get_case", "CaseRun", "run_case", "normalization_base"]

SOURCE_F, SOURCE_B, MUX = 0, 1, 2


@dataclass(frozen=True)
class Case:
    index: int | None
    op: Operation
    p_f: float
    p_b: float
    p_mux: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "op", Operation(self.op))
        for p in (self.p_f, self.p_b, self.p_mux):
            if not 0.0 <= p <= 1.0:
                raise DomainError(f"probability must lie in [0, 1], got {p}")

    @property
    def mode(self) -> OperationMode:
        return OperationMode(self.op, self.p_mux)

    @property
    def target(self) -> float:
        """Normalized output expected from the operation's closed form."""
        return self.mode.expected_output(self.p_f, self.p_b)

    @property
    def label(self) -> str:
        return str(self.index) if self.index is not None else f"{self.op.value}({self.p_f},{self.p_b})"


_PAIRS = [(0.9, 0.9), (0.8, 0.9), (0.7, 0.8), (0.5, 0.8), (0.4, 0.5), (0.2, 0.9), (0.9, 0.2), (0.8, 0.5)]

VERIFICATION_CASES: tuple[Case, ...] = tuple(
    [Case(i, Operation.MUL, pf, pb) for i, (pf, pb) in enumerate(_PAIRS)]
    + [Case(i + 8, Operation.ADD, pf, pb) for i, (pf, pb) in enumerate(_PAIRS)]
)


ALL_ONES = Case(None, Operation.MUL, 1.0, 1.0)


def get_case(index: int) -> Case:
    if not 0 <= index < len(VERIFICATION_CASES):
        raise DomainError(f"unknown case index {index}; valid indices are 0..{len(VERIFICATION_CASES) - 1}")
    return VERIFICATION_CASES[index]


@dataclass
class CaseRun:
    case: Case
    traces: list[SlotTrace]
    output: BitStream
    waveforms: Waveforms
    router: Router = field(repr=False)

    @property
    def load(self) -> PowerSeries:
        return self.waveforms.load


def run_case(
    case: Case,
    n_slots: int,
    master_seed: int = 0,
    seed_path: tuple[int, ...] = (),
    params: ElectricalParams = ElectricalParams(),
    waveform: WaveformModel = WaveformModel(),
    buffer: Buffer | None = None,
) -> CaseRun:
    src_f = bernoulli_stream(case.p_f, n_slots, SeededGenerator.derived(master_seed, *seed_path, SOURCE_F))
    src_b = bernoulli_stream(case.p_b, n_slots, SeededGenerator.derived(master_seed, *seed_path, SOURCE_B))
    router = Router(case.mode, buffer, SeededGenerator.derived(master_seed, *seed_path, MUX))
    traces, out = router.run_sequence(src_f, src_b)
    return CaseRun(case, traces, out, synthesize_waveform(traces, params, waveform), router)


def normalization_base(
    n_slots: int,
    params: ElectricalParams = ElectricalParams(),
    waveform: WaveformModel = WaveformModel(),
) -> float:
    """Mean load power of an all-ones multiplication run of ``n_slots`` slots."""
    run = run_case(ALL_ONES, n_slots, 0, (), params, waveform)
    return run.load.mean()
