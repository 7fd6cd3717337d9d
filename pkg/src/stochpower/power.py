"""Electrical view of router traces: waveforms, window averages, normalization.

Two waveform models are available.  ``rect`` treats every packet as a
rectangular pulse of ``p_unit`` watts lasting one interval.  ``rc`` gives the
buffer a capacitance: it charges through ``r_charge`` towards the source
voltage and discharges into the load, so buffer-sourced pulses sag while
direct-path pulses stay flat.  Both models share the same logic traces, so
long-run averages agree up to the RC sag.

Samples are taken at the midpoint of each ``sample_dt`` bin; sample ``i``
stands for ``[t0 + i*dt, t0 + (i+1)*dt)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError
from .router import SlotTrace

__all__ = [
    "ElectricalParams",
    "WaveformKind",
    "WaveformModel",
    "PowerSeries",
    "Waveforms",
    "synthesize_waveform",
    "average_power",
    "moving_average",
    "normalize",
]


@dataclass(frozen=True)
class ElectricalParams:
    v_source: float = 10.0
    r_load: float = 20.0
    clock_hz: float = 25_000.0

    def __post_init__(self):
        if self.v_source <= 0 or self.r_load <= 0 or self.clock_hz <= 0:
            raise DomainError("electrical parameters must be positive")

    @property
    def slot_s(self) -> float:
        return 1.0 / self.clock_hz

    @property
    def interval_s(self) -> float:
        return self.slot_s / 2

    @property
    def p_unit(self) -> float:
        return self.v_source ** 2 / self.r_load

    def slots_in(self, duration_s: float) -> int:
        return int(round(duration_s * self.clock_hz))


class WaveformKind(str, Enum):
    RECT = "rect"
    RC = "rc"


@dataclass(frozen=True)
class WaveformModel:
    """Waveform model and sampling.

    The RC defaults satisfy ``r_charge*c_buffer <= slot/10`` and
    ``r_load*c_buffer >= 20*slot`` at the default 25 kHz / 20 ohm setup: the
    buffer refills within a few microseconds and a 20 us discharge sags the
    delivered power by about 2 %.  ``v_initial=None`` starts the buffer full.
    """

    kind: WaveformKind = WaveformKind.RECT
    c_buffer: float = 100e-6
    r_charge: float = 0.02
    sample_dt: float | None = None
    v_initial: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", WaveformKind(self.kind))
        if self.c_buffer <= 0 or self.r_charge <= 0:
            raise DomainError("c_buffer and r_charge must be positive")
        if self.sample_dt is not None and self.sample_dt <= 0:
            raise DomainError("sample_dt must be positive")
        if self.v_initial is not None and self.v_initial < 0:
            raise DomainError("v_initial must be >= 0")

    def samples_per_interval(self, params: ElectricalParams) -> int:
        if self.sample_dt is None:
            return 1 if self.kind is WaveformKind.RECT else 20
        m = int(round(params.interval_s / self.sample_dt))
        if m < 1:
            raise DomainError("sample_dt is longer than one interval")
        # RC needs at least 20 samples per slot
        if self.kind is WaveformKind.RC and 2 * m < 20:
            raise DomainError("rc waveforms need sample_dt <= slot/20")
        return m


@dataclass(frozen=True, eq=False)
class PowerSeries:
    t0: float
    dt: float
    samples: np.ndarray
    normalized: bool = False
    base_power: float | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise DomainError("power samples must be one-dimensional")
        if np.any(s < 0):
            raise DomainError("power samples must be non-negative")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        if self.normalized and not (self.base_power and self.base_power > 0):
            raise DomainError("a normalized series needs a positive base power")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return int(self.samples.size)

    def __add__(self, other: "PowerSeries") -> "PowerSeries":
        if (len(self), self.dt, self.t0, self.normalized) != (len(other), other.dt, other.t0, other.normalized):
            raise DomainError("series are not aligned")
        return PowerSeries(self.t0, self.dt, self.samples + other.samples,
                           self.normalized, self.base_power)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def mean(self) -> float:
        if not len(self):
            raise DomainError("mean of an empty series")
        return float(self.samples.mean())

    def to_csv(self, path, value_name: str = "watts") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", value_name])
            for t, v in zip(self.times.tolist(), self.samples.tolist()):
                w.writerow([repr(t), repr(v)])

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "dt": self.dt,
            "normalized": self.normalized,
            "base_power": self.base_power,
            "samples": self.samples.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "PowerSeries":
        return cls(d["t0"], d["dt"], np.asarray(d["samples"], dtype=float),
                   d.get("normalized", False), d.get("base_power"))


class Waveforms(NamedTuple):
    p_in_f: PowerSeries
    p_in_b: PowerSeries
    p_out_f: PowerSeries
    p_out_b: PowerSeries

    @property
    def load(self) -> PowerSeries:
        """Total power delivered to the load (buffer output plus direct path)."""
        return self.p_out_f + self.p_out_b


def _interval_flags(traces: Sequence[SlotTrace]):
    n = len(traces)
    charging = np.zeros(2 * n, dtype=bool)
    discharging = np.zeros(2 * n, dtype=bool)
    direct = np.zeros(2 * n, dtype=bool)
    for k, t in enumerate(traces):
        charging[2 * k] = t.rt1_f
        discharging[2 * k] = t.out_f
        discharging[2 * k + 1] = t.rt2_b and t.out_b
        direct[2 * k + 1] = t.rt3_b
    return charging, discharging, direct


def synthesize_waveform(traces: Sequence[SlotTrace], params: ElectricalParams = ElectricalParams(),
                        model: WaveformModel = WaveformModel()) -> Waveforms:
    """Sampled power on the four measurement points of the router.

    ``p_out_f`` is the buffer output in either interval, ``p_out_b`` the
    direct path; ``p_in_f`` flows into the buffer and ``p_in_b`` equals
    ``p_out_b``.
    """
    for i in range(1, len(traces)):
        if traces[i].slot != traces[i - 1].slot + 1:
            raise DomainError(f"traces are not contiguous at slot {traces[i - 1].slot}")
    m = model.samples_per_interval(params)
    dt = params.interval_s / m
    t0 = traces[0].slot * params.slot_s if traces else 0.0
    charging, discharging, direct = _interval_flags(traces)
    n_int = charging.size
    p_unit = params.p_unit

    def series(per_interval: np.ndarray) -> PowerSeries:
        return PowerSeries(t0, dt, per_interval.reshape(-1))

    direct_p = np.repeat(direct * p_unit, m).reshape(n_int, m)
    if model.kind is WaveformKind.RECT:
        p_in_f = np.repeat(charging * p_unit, m).reshape(n_int, m)
        p_out_f = np.repeat(discharging * p_unit, m).reshape(n_int, m)
        return Waveforms(series(p_in_f), series(direct_p), series(p_out_f), series(direct_p))

    vs, rl, rc, c = params.v_source, params.r_load, model.r_charge, model.c_buffer
    v = vs if model.v_initial is None else model.v_initial
    T = params.interval_s
    rates = charging / (rc * c) + discharging / (rl * c)
    # each interval relaxes v towards v_inf at the given rate; idle intervals hold v
    drive = charging * (vs / (rc * c))
    v_inf = np.divide(drive, rates, out=np.zeros(n_int), where=rates > 0)
    v_start = np.empty(n_int)
    for k in range(n_int):
        v_start[k] = v
        if rates[k] > 0:
            v = v_inf[k] + (v - v_inf[k]) * math.exp(-rates[k] * T)
    tau = (np.arange(m) + 0.5) * dt
    decay = np.exp(-np.outer(rates, tau))
    v_t = v_inf[:, None] + (v_start - v_inf)[:, None] * decay
    p_out_f = np.where(discharging[:, None], v_t ** 2 / rl, 0.0)
    p_in_f = np.where(charging[:, None], vs * np.clip(vs - v_t, 0.0, None) / rc, 0.0)
    return Waveforms(series(p_in_f), series(direct_p), series(p_out_f), series(direct_p))


def _window_samples(series: PowerSeries, window_s: float) -> int:
    if window_s < series.dt * (1 - 1e-9):
        raise DomainError(f"window {window_s} s is shorter than one sample ({series.dt} s)")
    return max(1, int(round(window_s / series.dt)))


def average_power(series: PowerSeries, window_s: float) -> PowerSeries:
    """Non-overlapping window means.

    The window is rounded to a whole number of samples; a trailing partial
    window is dropped.
    """
    k = _window_samples(series, window_s)
    n = len(series) // k
    means = series.samples[: n * k].reshape(n, k).mean(axis=1)
    return PowerSeries(series.t0, series.dt * k, means, series.normalized, series.base_power)


def moving_average(series: PowerSeries, window_s: float) -> PowerSeries:
    """Trailing sliding mean; output sample ``i`` covers input samples ``i..i+k-1``.

    The result's ``t0`` is the end of the first full window, so each output
    is stamped at the end of the window it summarizes.
    """
    k = _window_samples(series, window_s)
    if len(series) < k:
        return PowerSeries(series.t0 + k * series.dt, series.dt, np.empty(0),
                           series.normalized, series.base_power)
    c = np.concatenate(([0.0], np.cumsum(series.samples)))
    means = np.clip((c[k:] - c[:-k]) / k, 0.0, None)
    return PowerSeries(series.t0 + k * series.dt, series.dt, means, series.normalized, series.base_power)


def normalize(series: PowerSeries, base: float) -> PowerSeries:
    if not base > 0:
        raise DomainError(f"normalization base must be positive, got {base}")
    if series.normalized:
        raise DomainError("series is already normalized")
    return PowerSeries(series.t0, series.dt, series.samples / base, True, float(base))
