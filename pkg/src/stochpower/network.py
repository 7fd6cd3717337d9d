"""Slot-synchronous networks of sources, routers and one load.

Every node emits one bit per interval, two per slot.  A router takes its
``in_f`` from the ``f``-interval bit of its first feed and its ``in_b`` from
the ``b``-interval bit of its second feed; when both feeds are the same
router, the downstream slot consumes that router's ``(out_f, out_b)`` pair.
Because the wiring is acyclic, evaluating whole streams node by node in
topological order gives the same result as stepping all nodes slot by slot.
"""

from __future__ import annotations

import copy
import graphlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .bitstream import BitStream, SeededGenerator, bernoulli_stream, value
from .errors import DomainError
from .router import Buffer, OperationMode, Router, SlotTrace

__all__ = ["NodeKind", "NodeSpec", "Network", "NetworkRun", "build", "run"]


class NodeKind(str, Enum):
    SOURCE = "source"
    ROUTER = "router"
    LOAD = "load"


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: NodeKind
    inputs: tuple[str, ...] = ()
    p: float | None = None
    mode: OperationMode | None = None
    buffer: Buffer | None = None
    seed: int | None = None

    @classmethod
    def source(cls, id: str, p: float, seed: int | None = None) -> "NodeSpec":
        return cls(id, NodeKind.SOURCE, (), p=p, seed=seed)

    @classmethod
    def router(cls, id: str, mode: OperationMode, f_from: str, b_from: str,
               buffer: Buffer | None = None, seed: int | None = None) -> "NodeSpec":
        return cls(id, NodeKind.ROUTER, (f_from, b_from), mode=mode, buffer=buffer, seed=seed)

    @classmethod
    def load(cls, id: str, feed: str) -> "NodeSpec":
        return cls(id, NodeKind.LOAD, (feed,))


_ARITY = {NodeKind.SOURCE: 0, NodeKind.ROUTER: 2, NodeKind.LOAD: 1}


@dataclass(frozen=True)
class Network:
    nodes: dict[str, NodeSpec]
    order: tuple[str, ...]
    load_id: str


@dataclass
class NetworkRun:
    n_slots: int
    streams: dict[str, BitStream]
    traces: dict[str, list[SlotTrace]] = field(repr=False)
    terminal: BitStream = None

    def values(self) -> dict[str, float]:
        return {k: float(value(s)) for k, s in self.streams.items() if len(s)}


def build(specs: Sequence[NodeSpec]) -> Network:
    nodes: dict[str, NodeSpec] = {}
    for spec in specs:
        kind = NodeKind(spec.kind)
        if spec.id in nodes:
            raise DomainError(f"duplicate node id {spec.id!r}")
        if len(spec.inputs) != _ARITY[kind]:
            raise DomainError(f"{kind.value} node {spec.id!r} needs {_ARITY[kind]} input(s), "
                              f"got {len(spec.inputs)}")
        if kind is NodeKind.SOURCE and (spec.p is None or not 0 <= spec.p <= 1):
            raise DomainError(f"source {spec.id!r} needs a probability in [0, 1]")
        if kind is NodeKind.ROUTER and spec.mode is None:
            raise DomainError(f"router {spec.id!r} needs an operation mode")
        nodes[spec.id] = spec
    loads = [n.id for n in nodes.values() if n.kind is NodeKind.LOAD]
    if len(loads) != 1:
        raise DomainError(f"a network needs exactly one load, got {len(loads)}")
    for spec in nodes.values():
        for src in spec.inputs:
            if src not in nodes:
                raise DomainError(f"node {spec.id!r} references unknown node {src!r}")
            if nodes[src].kind is NodeKind.LOAD:
                raise DomainError(f"node {spec.id!r} cannot draw from load {src!r}")
    sorter = graphlib.TopologicalSorter({n.id: n.inputs for n in nodes.values()})
    try:
        order = tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        raise DomainError(f"wiring contains a cycle: {' -> '.join(exc.args[1])}") from None
    return Network(nodes, order, loads[0])


def run(network: Network, n_slots: int, master_seed: int = 0) -> NetworkRun:
    """Evaluate ``n_slots`` slots.

    A node without an explicit seed draws from ``derive_seed(master_seed, i)``
    where ``i`` is its position in the node list given to :func:`build`.
    """
    if n_slots < 0:
        raise DomainError("n_slots must be >= 0")
    index = {nid: i for i, nid in enumerate(network.nodes)}
    streams: dict[str, BitStream] = {}
    traces: dict[str, list[SlotTrace]] = {}
    for nid in network.order:
        spec = network.nodes[nid]
        gen = (SeededGenerator(spec.seed) if spec.seed is not None
               else SeededGenerator.derived(master_seed, index[nid]))
        if spec.kind is NodeKind.SOURCE:
            streams[nid] = bernoulli_stream(spec.p, 2 * n_slots, gen)
        elif spec.kind is NodeKind.ROUTER:
            f_src, b_src = (streams[i].bits for i in spec.inputs)
            buf = None
            if spec.buffer is not None:
                buf = copy.deepcopy(spec.buffer)
                buf.reset()
            router = Router(spec.mode, buf, gen)
            traces[nid], streams[nid] = router.run_sequence(BitStream(f_src[0::2]), BitStream(b_src[1::2]))
        else:
            streams[nid] = streams[spec.inputs[0]]
    return NetworkRun(n_slots, streams, traces, streams[network.load_id])
