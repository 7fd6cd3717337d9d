"""Unipolar stochastic numbers as 0/1 streams of power packets.

A stream position holds 1 when a unit power packet is present in the
corresponding interval and 0 otherwise.  The represented value is the
density of ones.  Multiplication is a bitwise AND of independent streams,
addition is a multiplexer driven by a random selector stream.

Randomness comes from :class:`SeededGenerator`, a thin wrapper around
numpy's counter-based Philox bit generator.  Philox output depends only on
(key, counter), so a given seed yields the same bits on every platform and
numpy version that ships the same algorithm.  Independent sub-streams are
derived with :func:`derive_seed`, which maps ``(master, *path)`` to a
``numpy.random.SeedSequence`` whose spawn key is ``path``.  Two distinct
paths under one master seed are statistically independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "BitStream",
    "SeededGenerator",
    "derive_seed",
    "bernoulli_stream",
    "categorical_stream",
    "value",
    "and_multiply",
    "and_multiply_n",
    "mux_add",
    "mux_add_n",
]

WEIGHT_TOL = 1e-12


def derive_seed(master: int, *path: int) -> np.random.SeedSequence:
    """Deterministic child seed for the sub-stream identified by ``path``."""
    if master < 0 or any(p < 0 for p in path):
        raise DomainError("seeds and seed paths must be non-negative integers")
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(p) for p in path))


class SeededGenerator:
    """Single-owner reproducible source of Bernoulli and categorical draws."""

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self.seed_seq = seed
        else:
            if int(seed) < 0:
                raise DomainError("seed must be a non-negative integer")
            self.seed_seq = np.random.SeedSequence(int(seed))
        self._rng = np.random.Generator(np.random.Philox(self.seed_seq))

    @classmethod
    def derived(cls, master: int, *path: int) -> "SeededGenerator":
        return cls(derive_seed(master, *path))

    def bits(self, p: float, n: int) -> np.ndarray:
        p = _check_probability(p)
        if n < 0:
            raise DomainError(f"stream length must be >= 0, got {n}")
        # uniform < p gives exact 0/1 streams at p == 0 and p == 1
        return (self._rng.random(n) < p).astype(np.uint8)

    def categorical(self, weights: Sequence[float], n: int) -> np.ndarray:
        w = _check_weights(weights)
        cdf = np.cumsum(w)
        cdf[-1] = 1.0
        u = self._rng.random(n)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)


def _check_probability(p) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p}")
    return p


def _check_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) < 2:
        raise DomainError("need a weight for each of at least two inputs")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    if abs(float(np.sum(w)) - 1.0) > WEIGHT_TOL:
        raise DomainError(f"weights must sum to 1 (within {WEIGHT_TOL}), got {float(np.sum(w))!r}")
    return w


@dataclass(frozen=True, eq=False)
class BitStream:
    """Immutable 0/1 sequence with an optional generating probability."""

    bits: np.ndarray
    nominal_p: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 1:
            raise DomainError("a bit stream is one-dimensional")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise DomainError("bit streams may only contain 0 and 1")
        arr = arr.astype(np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitStream):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self) -> str:
        body = self.to_string() if len(self) <= 32 else self.to_string()[:32] + "..."
        return f"BitStream('{body}', n={len(self)}, nominal_p={self.nominal_p})"

    @property
    def ones(self) -> int:
        return int(self.bits.sum(dtype=np.int64))

    @classmethod
    def from_string(cls, text: str, nominal_p: float | None = None) -> "BitStream":
        if any(c not in "01" for c in text):
            raise DomainError(f"not a 0/1 string: {text!r}")
        return cls(np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"), nominal_p)

    def to_string(self) -> str:
        return (self.bits + ord("0")).tobytes().decode("ascii")

    def pack(self) -> bytes:
        """Packed big-endian bytes; the length must be stored separately."""
        return np.packbits(self.bits).tobytes()

    @classmethod
    def unpack(cls, data: bytes, n: int, nominal_p: float | None = None) -> "BitStream":
        raw = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if n > raw.size:
            raise DomainError(f"packed data holds {raw.size} bits, {n} requested")
        return cls(raw[:n], nominal_p)


def bernoulli_stream(p: float, n: int, gen: SeededGenerator) -> BitStream:
    return BitStream(gen.bits(p, n), nominal_p=float(p))


def categorical_stream(weights: Sequence[float], n: int, gen: SeededGenerator) -> np.ndarray:
    """Selector indices in ``range(len(weights))`` drawn i.i.d. with ``weights``."""
    return gen.categorical(weights, n)


def value(s: BitStream) -> Fraction:
    """Density of ones as an exact fraction ``ones / length``."""
    if len(s) == 0:
        raise DomainError("the value of an empty stream is undefined")
    return Fraction(s.ones, len(s))


def _same_length(*streams: BitStream) -> int:
    n = len(streams[0])
    for s in streams[1:]:
        if len(s) != n:
            raise DomainError(f"stream lengths differ: {n} vs {len(s)}")
    return n


def _nominal(*ps):
    return None if any(p is None for p in ps) else ps


def and_multiply(a: BitStream, b: BitStream) -> BitStream:
    _same_length(a, b)
    nom = _nominal(a.nominal_p, b.nominal_p)
    return BitStream(a.bits & b.bits, None if nom is None else nom[0] * nom[1])


def and_multiply_n(streams: Sequence[BitStream]) -> BitStream:
    if len(streams) < 2:
        raise DomainError("AND multiplication needs at least two streams")
    _same_length(*streams)
    out = np.bitwise_and.reduce(np.stack([s.bits for s in streams]), axis=0)
    nom = _nominal(*(s.nominal_p for s in streams))
    return BitStream(out, None if nom is None else float(np.prod(nom)))


def mux_add(a: BitStream, b: BitStream, sel: BitStream) -> BitStream:
    """``(a AND sel) OR (b AND NOT sel)`` bit by bit."""
    _same_length(a, b, sel)
    out = (a.bits & sel.bits) | (b.bits & (1 - sel.bits))
    nom = _nominal(a.nominal_p, b.nominal_p, sel.nominal_p)
    p = None if nom is None else nom[0] * nom[2] + nom[1] * (1 - nom[2])
    return BitStream(out, p)


def mux_add_n(streams: Sequence[BitStream], selector, weights: Sequence[float]) -> BitStream:
    """Weighted n-ary addition: position i copies ``streams[selector[i]][i]``.

    ``selector`` is a categorical index stream (see :func:`categorical_stream`)
    and ``weights`` the probabilities it was drawn with; the output's nominal
    probability is ``sum(w_j * p_j)``.
    """
    if len(streams) < 2:
        raise DomainError("multiplexer addition needs at least two streams")
    w = _check_weights(weights)
    if len(w) != len(streams):
        raise DomainError(f"{len(streams)} streams but {len(w)} weights")
    n = _same_length(*streams)
    sel = np.asarray(selector, dtype=np.int64)
    if sel.shape != (n,):
        raise DomainError(f"selector length {sel.size} does not match stream length {n}")
    if sel.size and (sel.min() < 0 or sel.max() >= len(streams)):
        raise DomainError("selector index out of range")
    stacked = np.stack([s.bits for s in streams])
    out = stacked[sel, np.arange(n)]
    nom = _nominal(*(s.nominal_p for s in streams))
    return BitStream(out, None if nom is None else float(np.dot(w, nom)))
