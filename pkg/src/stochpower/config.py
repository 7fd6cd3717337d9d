"""TOML configuration for case runs, management scenarios and networks.

Example::

    seed = 0

    [electrical]
    v_source = 10.0
    r_load = 20.0
    clock_hz = 25000.0

    [waveform]
    kind = "rect"          # or "rc"

    [buffer]
    kind = "ledger"        # or "ideal"
    capacity = 64
    initial_charge = 8
    starvation_policy = "emit_zero"

    [management]
    p_ext = 0.7
    moving_avg_s = 0.1
    policy = "min_internal"    # or "prefer_mul"
    tracking_dt = 0.001

    [[management.schedule]]
    p_tar = 0.2
    hold_s = 1.0

    [network]
    n_slots = 100000

    [[network.nodes]]
    id = "a"
    kind = "source"
    p = 0.9

    [[network.nodes]]
    id = "r1"
    kind = "router"
    op = "mul"
    f = "a"
    b = "a"

    [[network.nodes]]
    id = "out"
    kind = "load"
    feed = "r1"

Every section is optional.  The digest covers the configuration with all
defaults filled in, so two files that differ only in formatting, key order,
or explicitly spelled-out defaults share a digest.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DomainError
from .management import (DEFAULT_SCHEDULE, ManagementConfig, Segment, min_internal_policy,
                         prefer_multiplication_policy)
from .network import NodeKind, NodeSpec
from .power import ElectricalParams, WaveformModel
from .router import Buffer, OperationMode

__all__ = ["BufferConfig", "RunConfig", "load_config", "parse_config", "POLICIES"]

POLICIES = {"min_internal": min_internal_policy, "prefer_mul": prefer_multiplication_policy}

_SECTIONS = {
    "seed": None,
    "electrical": {"v_source", "r_load", "clock_hz"},
    "waveform": {"kind", "c_buffer", "r_charge", "sample_dt", "v_initial"},
    "buffer": {"kind", "capacity", "initial_charge", "starvation_policy"},
    "management": {"p_ext", "moving_avg_s", "policy", "tracking_dt", "schedule"},
    "network": {"n_slots", "nodes"},
}
_NODE_KEYS = {"id", "kind", "p", "seed", "op", "p_mux", "f", "b", "feed"}


@dataclass(frozen=True)
class BufferConfig:
    kind: str = "ideal"
    capacity: int | None = None
    initial_charge: int = 0
    starvation_policy: str = "error"

    def build(self) -> Buffer:
        return Buffer(self.kind, self.capacity, self.initial_charge, self.starvation_policy)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    electrical: ElectricalParams = ElectricalParams()
    waveform: WaveformModel = WaveformModel()
    buffer: BufferConfig = BufferConfig()
    management: ManagementConfig = ManagementConfig()
    policy: str = "min_internal"
    tracking_dt: float = 1e-3
    n_slots: int = 100_000
    nodes: tuple[NodeSpec, ...] = ()
    canonical: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def digest(self) -> str:
        text = json.dumps(self.canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(raw)


def _take(section: dict, allowed: set[str], name: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return section


def parse_config(raw: dict) -> RunConfig:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    try:
        return _parse(raw)
    except (DomainError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _parse(raw: dict) -> RunConfig:
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")

    el = _take(raw.get("electrical", {}), _SECTIONS["electrical"], "electrical")
    electrical = ElectricalParams(**{k: float(v) for k, v in el.items()})

    wf = _take(raw.get("waveform", {}), _SECTIONS["waveform"], "waveform")
    waveform = WaveformModel(**wf)

    bf = _take(raw.get("buffer", {}), _SECTIONS["buffer"], "buffer")
    buffer = BufferConfig(**bf)
    buffer.build()

    mg = _take(raw.get("management", {}), _SECTIONS["management"], "management")
    policy = mg.get("policy", "min_internal")
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    if "schedule" in mg:
        schedule = tuple(Segment(**_take(s, {"p_tar", "hold_s"}, "management.schedule"))
                         for s in mg["schedule"])
    else:
        schedule = DEFAULT_SCHEDULE
    management = ManagementConfig(mg.get("p_ext", 0.7), schedule, mg.get("moving_avg_s", 0.1))
    tracking_dt = float(mg.get("tracking_dt", 1e-3))
    if tracking_dt <= 0:
        raise ConfigError("tracking_dt must be positive")

    nw = _take(raw.get("network", {}), _SECTIONS["network"], "network")
    n_slots = nw.get("n_slots", 100_000)
    if not isinstance(n_slots, int) or n_slots < 0:
        raise ConfigError("network.n_slots must be a non-negative integer")
    nodes = tuple(_node(_take(n, _NODE_KEYS, "network.nodes"), buffer) for n in nw.get("nodes", []))

    canonical = {
        "seed": seed,
        "electrical": {"v_source": electrical.v_source, "r_load": electrical.r_load,
                       "clock_hz": electrical.clock_hz},
        "waveform": {"kind": waveform.kind.value, "c_buffer": float(waveform.c_buffer),
                     "r_charge": float(waveform.r_charge), "sample_dt": _opt_float(waveform.sample_dt),
                     "v_initial": _opt_float(waveform.v_initial)},
        "buffer": {"kind": buffer.kind, "capacity": buffer.capacity,
                   "initial_charge": buffer.initial_charge,
                   "starvation_policy": buffer.starvation_policy},
        "management": {"p_ext": float(management.p_ext),
                       "moving_avg_s": float(management.moving_avg_s),
                       "policy": policy, "tracking_dt": tracking_dt,
                       "schedule": [[float(s.p_tar), float(s.hold_s)] for s in management.schedule]},
        "network": {"n_slots": n_slots,
                    "nodes": [_node_canonical(n) for n in nodes]},
    }
    return RunConfig(seed, electrical, waveform, buffer, management, policy, tracking_dt,
                     n_slots, nodes, canonical)


def _node(d: dict, buffer: BufferConfig) -> NodeSpec:
    if "id" not in d or "kind" not in d:
        raise ConfigError("every network node needs an id and a kind")
    kind = NodeKind(d["kind"])
    seed = d.get("seed")
    if kind is NodeKind.SOURCE:
        return NodeSpec.source(str(d["id"]), float(d.get("p", -1)), seed)
    if kind is NodeKind.ROUTER:
        if "f" not in d or "b" not in d:
            raise ConfigError(f"router {d['id']!r} needs both f and b feeds")
        mode = OperationMode(d.get("op", "mul"), d.get("p_mux", 0.5))
        return NodeSpec.router(str(d["id"]), mode, d["f"], d["b"], buffer.build(), seed)
    if "feed" not in d:
        raise ConfigError(f"load {d['id']!r} needs a feed")
    return NodeSpec.load(str(d["id"]), d["feed"])


def _opt_float(x):
    return None if x is None else float(x)


def _node_canonical(n: NodeSpec) -> dict:
    d = {"id": n.id, "kind": n.kind.value, "inputs": list(n.inputs), "seed": n.seed}
    if n.kind is NodeKind.SOURCE:
        d["p"] = float(n.p)
    elif n.kind is NodeKind.ROUTER:
        d["op"] = n.mode.op.value
        d["p_mux"] = float(n.mode.p_mux)
    return d
