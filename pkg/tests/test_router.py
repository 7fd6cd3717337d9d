import io
import itertools
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochpower.bitstream import BitStream, SeededGenerator, bernoulli_stream, value
from stochpower.errors import DomainError, SimulationFault
from stochpower.router import (
    TRACE_COLUMNS,
    Buffer,
    Operation,
    OperationMode,
    Router,
    SlotInputs,
    compute_result,
    read_trace_csv,
    write_trace_csv,
    write_trace_jsonl,
)

GOLDEN = Path(__file__).parent / "golden"
MUL = OperationMode.multiplication()
ADD = OperationMode.addition()


def random_run(mode, p_f, p_b, n, seed, buffer=None):
    g = SeededGenerator(seed)
    router = Router(mode, buffer, SeededGenerator.derived(seed, 2))
    return router.run_sequence(bernoulli_stream(p_f, n, g), bernoulli_stream(p_b, n, g))


# independent table definitions
AND_TABLE = {(0, 0): 0, (0, 1): 0, (1, 0): 0, (1, 1): 1}
MUX_TABLE = {  # (in_f, in_b, mux): mux=1 selects f
    (0, 0, 0): 0, (0, 0, 1): 0, (0, 1, 0): 1, (0, 1, 1): 0,
    (1, 0, 0): 0, (1, 0, 1): 1, (1, 1, 0): 1, (1, 1, 1): 1,
}


@pytest.mark.parametrize("op,f,b,m", list(itertools.product(Operation, (0, 1), (0, 1), (0, 1))))
def test_compute_result_matches_tables(op, f, b, m):
    expected = AND_TABLE[(f, b)] if op is Operation.MUL else MUX_TABLE[(f, b, m)]
    assert compute_result(OperationMode(op), f, b, m) == expected


def test_compute_result_examples():
    assert compute_result(MUL, 1, 1) == 1
    assert compute_result(ADD, 1, 0, 1) == 1
    assert compute_result(MUL, 0, 1) == 0


def test_operation_mode_validation():
    with pytest.raises(DomainError):
        OperationMode(Operation.ADD, 1.2)
    with pytest.raises(ValueError):
        OperationMode("div")
    assert ADD.expected_output(0.8, 0.9) == pytest.approx(0.85)
    assert MUL.expected_output(0.8, 0.9) == pytest.approx(0.72)


def test_step_mul_both_inputs_present():
    t = Router(MUL, prev_result=0).step(SlotInputs(1, 1))
    assert (t.rt1_f, t.rt2_f, t.result, t.rt2_b, t.rt3_b) == (1, 0, 1, 0, 1)
    assert (t.out_f, t.out_b) == (0, 1)


def test_step_add_buffer_feeds_b():
    t = Router(ADD, prev_result=1).step(SlotInputs(1, 0, mux=1))
    assert (t.out_f, t.rt1_f, t.result, t.rt2_b, t.rt3_b, t.out_b) == (1, 1, 1, 1, 0, 1)
    assert t.buffer_after == t.buffer_before + 1 - 2


def test_step_null_slot():
    t = Router(MUL).step(SlotInputs(0, 0))
    assert (t.result, t.out_b, t.rt2_b, t.rt3_b, t.rt1_f) == (0, 0, 0, 0, 0)


def test_rejected_b_packet_is_not_stored():
    t = Router(MUL).step(SlotInputs(0, 1))
    assert t.result == 0 and t.out_b == 0
    assert t.buffer_after == t.buffer_before


def test_step_rejects_non_bits():
    with pytest.raises(DomainError):
        Router(MUL).step(SlotInputs(2, 0))


def test_addition_needs_selector_source():
    with pytest.raises(DomainError):
        Router(ADD).step(SlotInputs(1, 0))
    with pytest.raises(DomainError):
        Router(ADD).run_sequence(BitStream.from_string("1"), BitStream.from_string("0"))


def test_run_sequence_all_ones():
    ones = BitStream(np.ones(100, dtype=np.uint8))
    _, out = Router(MUL).run_sequence(ones, ones)
    assert len(out) == 200
    assert value(out) == Fraction(199, 200)
    assert out.bits[0] == 0


def test_run_sequence_add_case9_density():
    _, out = random_run(ADD, 0.8, 0.9, 100_000, seed=9)
    assert abs(float(value(out)) - 0.85) < 0.01


@pytest.mark.parametrize("mode", [MUL, ADD])
def test_run_sequence_all_zeros(mode):
    zeros = BitStream(np.zeros(50, dtype=np.uint8))
    buf = Buffer.ledger(capacity=10, initial_charge=3)
    router = Router(mode, buf, SeededGenerator(1))
    traces, out = router.run_sequence(zeros, zeros)
    assert not out.bits.any()
    assert buf.charge == 3
    assert all(t.buffer_before == t.buffer_after == 3 for t in traces)


def test_run_sequence_length_mismatch():
    with pytest.raises(DomainError):
        Router(MUL).run_sequence(BitStream.from_string("10"), BitStream.from_string("1"))
    with pytest.raises(DomainError):
        Router(ADD).run_sequence(BitStream.from_string("10"), BitStream.from_string("11"), mux=[1])


@pytest.mark.parametrize("mode", [MUL, ADD])
def test_slot_invariants_randomized(mode):
    buf = Buffer.ledger(capacity=16, initial_charge=4, starvation_policy="emit_zero")
    traces, out = random_run(mode, 0.6, 0.7, 10_000, seed=31, buffer=buf)
    assert set(np.unique(out.bits)) <= {0, 1}
    prev = 0
    for t in traces:
        assert not (t.rt2_b and t.rt3_b)
        assert not t.rt3_b or t.in_b
        assert not t.rt2_b or (t.result and not t.in_b)
        if mode.op is Operation.MUL:
            assert t.rt2_b == 0
        assert t.rt2_f == prev
        if not t.starved_f:
            assert t.out_f == prev
        if not t.starved_b:
            assert t.out_b == t.result
        assert 0 <= t.buffer_after <= 16
        prev = t.result
    assert buf.charge == buf.initial_charge + buf.charges - buf.outputs
    assert buf.outputs <= buf.charges + buf.initial_charge


def test_ideal_buffer_never_starves():
    traces, _ = random_run(ADD, 0.2, 0.9, 5_000, seed=4)
    assert not any(t.starved_f or t.starved_b for t in traces)
    assert traces[-1].buffer_after < 0  # net-draining ledger balance


def test_starvation_at_f_raises():
    router = Router(ADD, Buffer.ledger(), prev_result=0)
    router.step(SlotInputs(1, 0, mux=1))  # stored at f, spent at b
    with pytest.raises(SimulationFault) as exc:
        router.step(SlotInputs(0, 0, mux=0))  # replays 1 from an empty store
    assert (exc.value.slot, exc.value.interval) == (1, "f")


def test_starvation_at_b_raises():
    router = Router(ADD, Buffer.ledger(), prev_result=0)
    router.step(SlotInputs(1, 0, mux=1))
    with pytest.raises(SimulationFault) as exc:
        router.step(SlotInputs(1, 0, mux=1))  # f store covers the replay, b finds nothing
    assert (exc.value.slot, exc.value.interval) == (1, "b")


def test_emit_zero_counts_starvation():
    buf = Buffer.ledger(starvation_policy="emit_zero")
    t = Router(MUL, buf, prev_result=1).step(SlotInputs(0, 0))
    assert t.starved_f and t.out_f == 0
    assert buf.starvations == 1 and buf.charge == 0


def test_overflow_discards():
    buf = Buffer.ledger(capacity=2)
    ones = BitStream(np.ones(5, dtype=np.uint8))
    zeros = BitStream(np.zeros(5, dtype=np.uint8))
    Router(MUL, buf).run_sequence(ones, zeros)
    assert buf.charge == 2 and buf.overflow_discards == 3


def test_buffer_validation():
    with pytest.raises(DomainError):
        Buffer.ledger(capacity=2, initial_charge=3)
    with pytest.raises(DomainError):
        Buffer.ledger(initial_charge=-1)
    with pytest.raises(ValueError):
        Buffer("tank")


def drift_oracle(op, p_f, p_b, p_mux=Fraction(1, 2)):
    """Expected per-slot ledger change by enumeration of the step rules."""
    mode = OperationMode(op)
    # stationary result density
    p_res = sum(
        (p_f if f else 1 - p_f) * (p_b if b else 1 - p_b) * (p_mux if m else 1 - p_mux)
        * compute_result(mode, f, b, m)
        for f, b, m in itertools.product((0, 1), repeat=3)
    )
    drift = Fraction(0)
    for prev, f, b, m in itertools.product((0, 1), repeat=4):
        w = ((p_res if prev else 1 - p_res) * (p_f if f else 1 - p_f)
             * (p_b if b else 1 - p_b) * (p_mux if m else 1 - p_mux))
        r = compute_result(mode, f, b, m)
        drift += w * (f - prev - (r & (1 - b)))
    return drift


@pytest.mark.parametrize("p_f,p_b", [(Fraction(9, 10), Fraction(1, 5)), (Fraction(4, 5), Fraction(9, 10))])
def test_drift_closed_forms_match_enumeration(p_f, p_b):
    assert drift_oracle(Operation.MUL, p_f, p_b) == p_f * (1 - p_b)
    assert drift_oracle(Operation.ADD, p_f, p_b) == -p_b * (1 - p_f) / 2


@pytest.mark.parametrize("mode", [MUL, ADD])
@pytest.mark.parametrize("p_f,p_b", [(0.9, 0.2), (0.8, 0.9)])
def test_empirical_drift(mode, p_f, p_b):
    n = 100_000
    traces, _ = random_run(mode, p_f, p_b, n, seed=77)
    drift = traces[-1].buffer_after / n
    expected = float(drift_oracle(mode.op, Fraction(p_f), Fraction(p_b)))
    assert abs(drift - expected) < 0.01


def test_mux_bits_recorded_and_batched():
    g = SeededGenerator(5)
    f, b = bernoulli_stream(0.5, 200, g), bernoulli_stream(0.5, 200, g)
    traces, _ = Router(ADD, mux_gen=SeededGenerator(99)).run_sequence(f, b)
    assert [t.mux for t in traces] == SeededGenerator(99).bits(0.5, 200).tolist()


def test_trace_determinism():
    a, _ = random_run(ADD, 0.4, 0.5, 300, seed=12)
    b, _ = random_run(ADD, 0.4, 0.5, 300, seed=12)
    assert a == b


def test_trace_csv_round_trip(tmp_path):
    traces, _ = random_run(ADD, 0.7, 0.8, 40, seed=3)
    path = tmp_path / "t.csv"
    write_trace_csv(traces, path)
    rows = read_trace_csv(path)
    assert list(rows[0]) == list(TRACE_COLUMNS)
    assert [r["out_b"] for r in rows] == [t.out_b for t in traces]
    buf = io.StringIO()
    write_trace_csv(traces, buf)
    assert buf.getvalue() == path.read_text()


def test_trace_jsonl():
    traces, _ = random_run(MUL, 0.7, 0.8, 10, seed=3)
    buf = io.StringIO()
    write_trace_jsonl(traces, buf)
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(recs) == 10
    assert recs[4]["result"] == traces[4].result
    assert isinstance(recs[0]["starved_f"], bool)


def test_golden_trace(tmp_path):
    # regression fixture: addition, p=(0.7,0.8), seed 2024, 64 slots
    traces, _ = random_run(ADD, 0.7, 0.8, 64, seed=2024)
    path = tmp_path / "trace.csv"
    write_trace_csv(traces, path)
    assert path.read_bytes() == (GOLDEN / "trace_add_seed2024.csv").read_bytes()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=80),
       st.sampled_from([MUL, ADD]), st.integers(0, 1))
def test_output_rule_property(slots, mode, prev0):
    f, b, m = (BitStream(np.array(col, dtype=np.uint8)) for col in zip(*slots))
    traces, out = Router(mode, prev_result=prev0).run_sequence(f, b, mux=m.bits.tolist())
    results = [t.result for t in traces]
    assert out.bits[0::2].tolist() == [prev0] + results[:-1]
    assert out.bits[1::2].tolist() == results
