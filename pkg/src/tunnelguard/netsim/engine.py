"""Discrete-event network simulator with integer-millisecond virtual time.

The world is a graph of named nodes joined by point-to-point links.  A
single event heap drives everything; events fire in (time, node id,
sequence) order, so two events due at the same instant are handled in
node-id order and ties beyond that in insertion order.  Nothing ever
reads the wall clock.

Two transport flavours cross a link:

* datagrams - may be dropped.  Each direction of a link owns a private
  seeded RNG, and one uniform draw is consumed per datagram, so the
  fate of the Nth datagram on a link is a pure function of (seed, N).
* stream chunks - delivered reliably and in order, latency only.

Multi-hop delivery is node-level: a unit addressed to a distant node is
re-emitted hop by hop along shortest paths, and forwarding nodes may
inspect or rewrite what passes through them (that is where a tap
plugs in).
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Iterable

DGRAM = "dgram"
STREAM = "stream"


class NetsimError(Exception):
    """Base class for simulator wiring mistakes."""


class DuplicateNodeId(NetsimError):
    def __init__(self, node_id: str) -> None:
        super().__init__(f"node id already registered: {node_id!r}")
        self.node_id = node_id


class DanglingLink(NetsimError):
    def __init__(self, node_id: str) -> None:
        super().__init__(f"link references unknown node: {node_id!r}")
        self.node_id = node_id


class TapRefused(NetsimError):
    def __init__(self, node_id: str) -> None:
        super().__init__(f"node does not accept taps: {node_id!r}")
        self.node_id = node_id


@dataclass
class Unit:
    """One datagram or stream chunk in flight.

    ``src``/``dst`` are the original endpoints, not the current hop.
    ``meta`` rides along untouched by the engine; adversaries use it to
    mark frames they altered so the harness can do victim accounting.
    """

    kind: str
    src: str
    dst: str
    port: int
    payload: bytes
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WireRecord:
    """One hop as seen by the engine's own log: sent at `t` from `hop_src`
    toward `hop_dst`, `delivered` False when the link dropped it."""

    t: int
    hop_src: str
    hop_dst: str
    kind: str
    port: int
    payload: bytes
    delivered: bool


class Link:
    """One direction of a point-to-point link."""

    def __init__(self, src: str, dst: str, latency_ms: int, loss: float, seed: int) -> None:
        if latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        if not 0.0 <= loss <= 1.0:
            raise ValueError("loss must be in [0, 1]")
        self.src = src
        self.dst = dst
        self.latency_ms = latency_ms
        self.loss = loss
        self._rng = Random(seed)
        self.datagrams_sent = 0
        self.datagrams_dropped = 0
        self.datagrams_delivered = 0
        self.stream_chunks = 0

    def admit(self, unit: Unit) -> bool:
        """Decide the fate of one unit.  Stream chunks never consume RNG
        draws, so datagram loss stays a function of the datagram index."""
        if unit.kind == STREAM:
            self.stream_chunks += 1
            return True
        self.datagrams_sent += 1
        if self.loss > 0.0 and self._rng.random() < self.loss:
            self.datagrams_dropped += 1
            return False
        self.datagrams_delivered += 1
        return True


class Node:
    """Base class for everything attached to the network.

    Subclasses override ``handle`` (unit addressed to me), ``on_timer``
    and optionally ``on_forward`` (unit passing through me).  ``network``
    is set when the node is added.
    """

    tappable = False

    def __init__(self, node_id: str) -> None:
        self.id = node_id
        self.network: Network | None = None
        self.tap = None

    # -- override points -------------------------------------------------
    def start(self, now: int) -> None:
        """Called once when the simulation run begins."""

    def handle(self, now: int, unit: Unit) -> None:
        """A unit addressed to this node arrived."""

    def on_timer(self, now: int, tag: object) -> None:
        """A timer scheduled for this node fired."""

    def on_forward(self, now: int, unit: Unit) -> Unit | None:
        """A unit is transiting this node.  Return the unit (possibly
        rewritten) to pass it along, or None to swallow it."""
        return unit

    # -- plumbing ---------------------------------------------------------
    def receive(self, now: int, unit: Unit) -> None:
        if unit.dst == self.id:
            self.handle(now, unit)
            return
        out = unit
        if self.tap is not None:
            out = self.tap.process(now, out)
        if out is not None:
            out = self.on_forward(now, out)
        if out is not None and self.network is not None:
            self.network.hop(now, self.id, out)


class Network:
    """Node registry, link table, routing, and the event heap."""

    def __init__(self) -> None:
        self.nodes: dict[str, Node] = {}
        self.links: dict[tuple[str, str], Link] = {}
        self.now = 0
        self._heap: list[tuple[int, str, int, tuple]] = []
        self._seq = 0
        self._routes: dict[tuple[str, str], str] = {}
        self._routes_dirty = True
        self.wire_log: list[WireRecord] = []
        self.stream_pairs: set[tuple[str, str, int]] = set()
        self.dropped_by_adversary = 0

    # -- topology ----------------------------------------------------------
    def add_node(self, node: Node) -> Node:
        if node.id in self.nodes:
            raise DuplicateNodeId(node.id)
        node.network = self
        self.nodes[node.id] = node
        self._routes_dirty = True
        return node

    def add_link(
        self,
        a: str,
        b: str,
        latency_ms: int = 1,
        loss: float = 0.0,
        seed_ab: int = 0,
        seed_ba: int = 0,
    ) -> None:
        for end in (a, b):
            if end not in self.nodes:
                raise DanglingLink(end)
        self.links[(a, b)] = Link(a, b, latency_ms, loss, seed_ab)
        self.links[(b, a)] = Link(b, a, latency_ms, loss, seed_ba)
        self._routes_dirty = True

    def attach_tap(self, node_id: str, tap) -> None:
        node = self.nodes.get(node_id)
        if node is None:
            raise DanglingLink(node_id)
        if not node.tappable:
            raise TapRefused(node_id)
        node.tap = tap

    # -- routing -----------------------------------------------------------
    def _rebuild_routes(self) -> None:
        adj: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for (a, b) in self.links:
            adj[a].append(b)
        for nbrs in adj.values():
            nbrs.sort()
        self._routes.clear()
        for origin in self.nodes:
            # BFS gives shortest hop-count paths; sorted neighbours keep
            # route choice deterministic across runs.
            first_hop: dict[str, str] = {}
            visited = {origin}
            queue: deque[tuple[str, str | None]] = deque()
            for nbr in adj[origin]:
                if nbr not in visited:
                    visited.add(nbr)
                    first_hop[nbr] = nbr
                    queue.append((nbr, nbr))
            while queue:
                current, via = queue.popleft()
                for nbr in adj[current]:
                    if nbr not in visited:
                        visited.add(nbr)
                        first_hop[nbr] = via
                        queue.append((nbr, via))
            for dst, via in first_hop.items():
                self._routes[(origin, dst)] = via
        self._routes_dirty = False

    def next_hop(self, origin: str, dst: str) -> str:
        if self._routes_dirty:
            self._rebuild_routes()
        try:
            return self._routes[(origin, dst)]
        except KeyError:
            raise DanglingLink(dst) from None

    # -- traffic -----------------------------------------------------------
    def send(
        self,
        now: int,
        src: str,
        dst: str,
        port: int,
        payload: bytes,
        kind: str = DGRAM,
        meta: dict | None = None,
    ) -> None:
        unit = Unit(kind, src, dst, port, bytes(payload), meta or {})
        if kind == STREAM:
            self.stream_pairs.add((min(src, dst), max(src, dst), port))
        self.hop(now, src, unit)

    def hop(self, now: int, from_id: str, unit: Unit) -> None:
        via = self.next_hop(from_id, unit.dst)
        link = self.links[(from_id, via)]
        ok = link.admit(unit)
        self.wire_log.append(
            WireRecord(now, from_id, via, unit.kind, unit.port, unit.payload, ok)
        )
        if not ok:
            return
        self._push(now + link.latency_ms, via, ("deliver", unit))

    # -- timers / clock ------------------------------------------------------
    def schedule(self, at: int, node_id: str, tag: object) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past: {at} < {self.now}")
        self._push(at, node_id, ("timer", tag))

    def _push(self, at: int, node_id: str, item: tuple) -> None:
        heapq.heappush(self._heap, (at, node_id, self._seq, item))
        self._seq += 1

    def start(self) -> None:
        for nid in sorted(self.nodes):
            self.nodes[nid].start(self.now)

    def run_until(self, t_end: int) -> None:
        if t_end < self.now:
            raise ValueError("cannot run backwards")
        while self._heap and self._heap[0][0] <= t_end:
            at, node_id, _seq, item = heapq.heappop(self._heap)
            self.now = at
            node = self.nodes.get(node_id)
            if node is None:
                continue
            if item[0] == "deliver":
                node.receive(at, item[1])
            else:
                node.on_timer(at, item[1])
        self.now = t_end

    def pending_events(self) -> int:
        return len(self._heap)

    def next_event_at(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    # -- bookkeeping ---------------------------------------------------------
    def link_totals(self) -> dict[str, int]:
        sent = dropped = delivered = chunks = 0
        for link in self.links.values():
            sent += link.datagrams_sent
            dropped += link.datagrams_dropped
            delivered += link.datagrams_delivered
            chunks += link.stream_chunks
        return {
            "datagrams_sent": sent,
            "datagrams_dropped": dropped,
            "datagrams_delivered": delivered,
            "stream_chunks": chunks,
        }
