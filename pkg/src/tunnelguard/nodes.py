"""Simulation nodes: rooms, secure routers, the open hop, the server.

Traffic plan.  Rooms talk only to their own secure router: telemetry
datagrams to port 7000, command results to port 7001; commands reach a
room addressed to its device port.  What happens between router and
server depends on the variant:

* L2TP_LITE  - one tunnel per router; control and sealed data frames are
               datagrams on port 1701.
* PPTP_LITE  - control rides a reliable stream on port 1723; sealed data
               rides GRE-style datagrams on port 47.
* NONE       - the router re-emits telemetry and results as bare
               plaintext datagrams (ports 9000/9001), and the server
               addresses command datagrams straight at the device.

The open router in the middle just forwards - it is the only node that
accepts a tap, which is exactly the point.
"""

from __future__ import annotations

from random import Random

from .devices import MalformedCommand, Opcode, Room, decode_result, encode_result
from .netsim import STREAM, Node, Unit
from .server.core import ControlCore, ControlError, RegistryEntry
from .tunnel import (
    Channel,
    PayloadReceived,
    Role,
    SendDatagram,
    SendStream,
    SessionPhase,
    TunnelConfig,
    TunnelEndpoint,
    TunnelError,
    TunnelUp,
    Variant,
)

L2TP_PORT = 1701
PPTP_CTRL_PORT = 1723
GRE_PORT = 47
TELEMETRY_PORT = 7000
RESULT_PORT = 7001
RAW_TELEMETRY_PORT = 9000
RAW_RESULT_PORT = 9001

TICK_MS = 1000

# session payloads carry one type byte so one sealed channel can
# multiplex telemetry, commands and results
PAYLOAD_TELEMETRY = b"T"
PAYLOAD_COMMAND = b"C"
PAYLOAD_RESULT = b"R"


class RoomNode(Node):
    """One simulated room controller on the estate LAN."""

    def __init__(
        self,
        node_id: str,
        room: Room,
        router_id: str,
        device_port: int,
        until_ms: int | None = None,
    ) -> None:
        super().__init__(node_id)
        self.room = room
        self.router_id = router_id
        self.device_port = device_port
        self.until_ms = until_ms  # last tick at or before this instant
        self.emitted: list[tuple[int, bytes]] = []
        self.commands_executed = 0
        self.tampered_commands_accepted = 0
        self.tampered_received = 0
        self.malformed_commands = 0

    def start(self, now: int) -> None:
        if self.until_ms is None or now + TICK_MS <= self.until_ms:
            self.network.schedule(now + TICK_MS, self.id, "tick")

    def on_timer(self, now: int, tag: object) -> None:
        if tag != "tick":
            return
        line = self.room.tick(now)
        self.emitted.append((now, line))
        self.network.send(now, self.id, self.router_id, TELEMETRY_PORT, line)
        if self.until_ms is None or now + TICK_MS <= self.until_ms:
            self.network.schedule(now + TICK_MS, self.id, "tick")

    def handle(self, now: int, unit: Unit) -> None:
        if unit.port != self.device_port:
            return
        tampered = bool(unit.meta.get("tampered"))
        if tampered:
            self.tampered_received += 1
        try:
            result = self.room.handle_command(unit.payload)
        except MalformedCommand:
            self.malformed_commands += 1
            return
        self.commands_executed += 1
        if tampered:
            self.tampered_commands_accepted += 1
        self.network.send(now, self.id, self.router_id, RESULT_PORT, encode_result(result))


class _EndpointMixin:
    """Shared plumbing for nodes that own TunnelEndpoints: event fan-out,
    wire emission, and timer re-arming."""

    def _emit_outputs(self, now: int, peer: str, endpoint: TunnelEndpoint, outputs: list) -> None:
        for item in outputs:
            if isinstance(item, SendDatagram):
                port = GRE_PORT if endpoint.variant is Variant.PPTP_LITE else L2TP_PORT
                self.network.send(now, self.id, peer, port, item.data)
            elif isinstance(item, SendStream):
                self.network.send(now, self.id, peer, PPTP_CTRL_PORT, item.data, kind=STREAM)
            else:
                self._on_tunnel_event(now, peer, endpoint, item)

    def _rearm(self, now: int) -> None:
        deadline = self._combined_deadline()
        if deadline is None:
            return
        if self._armed_at is None or deadline < self._armed_at or self._armed_at <= now:
            self.network.schedule(max(deadline, now), self.id, "tunnel")
            self._armed_at = deadline

    def _on_tunnel_timer(self, now: int) -> None:
        self._armed_at = None
        for peer, endpoint in self._endpoints():
            self._emit_outputs(now, peer, endpoint, endpoint.step(now))
        self._rearm(now)


class RouterNode(Node, _EndpointMixin):
    """Secure router: LAC for its rooms' traffic, or a bare relay in the
    no-tunnel arm."""

    def __init__(
        self,
        node_id: str,
        variant: str,
        server_id: str,
        secret: bytes,
        tunnel_config: TunnelConfig,
        seed: int,
        rooms: list[tuple[int, str, int]],  # (room_id, room node id, device_port)
    ) -> None:
        super().__init__(node_id)
        self.variant_name = variant
        self.server_id = server_id
        self.rooms = rooms
        self._room_by_node = {node_id_: room_id for room_id, node_id_, _ in rooms}
        self._node_by_room = {room_id: (node_id_, port) for room_id, node_id_, port in rooms}
        self.endpoint: TunnelEndpoint | None = None
        if variant != "NONE":
            self.endpoint = TunnelEndpoint(
                Role.LAC,
                Variant[variant],
                secret,
                config=tunnel_config,
                rng=Random(seed),
            )
        self._armed_at: int | None = None
        self.tampered_received = 0
        self.telemetry_dropped_no_session = 0
        self.events: list[tuple[int, object]] = []

    # session id == room id: readable and globally unique
    def _session_for_room(self, room_id: int) -> int:
        return room_id

    def _endpoints(self):
        if self.endpoint is not None:
            yield self.server_id, self.endpoint
        return

    def _combined_deadline(self) -> int | None:
        return self.endpoint.next_deadline() if self.endpoint else None

    def start(self, now: int) -> None:
        if self.endpoint is None:
            return
        if self.variant_name == "PPTP_LITE":
            self.network.stream_pairs.add(
                (min(self.id, self.server_id), max(self.id, self.server_id), PPTP_CTRL_PORT)
            )
        self._emit_outputs(now, self.server_id, self.endpoint, self.endpoint.start(now))
        self._rearm(now)

    def on_timer(self, now: int, tag: object) -> None:
        if tag == "tunnel":
            self._on_tunnel_timer(now)

    def handle(self, now: int, unit: Unit) -> None:
        if unit.meta.get("tampered"):
            self.tampered_received += 1
        if unit.port == TELEMETRY_PORT:
            self._on_room_telemetry(now, unit)
        elif unit.port == RESULT_PORT:
            self._on_room_result(now, unit)
        elif unit.port in (L2TP_PORT, GRE_PORT) and self.endpoint is not None:
            self._emit_outputs(now, self.server_id, self.endpoint,
                               self.endpoint.step(now, unit.payload))
            self._rearm(now)
        elif unit.port == PPTP_CTRL_PORT and self.endpoint is not None:
            self._emit_outputs(now, self.server_id, self.endpoint,
                               self.endpoint.step(now, unit.payload, Channel.STREAM))
            self._rearm(now)

    def _on_room_telemetry(self, now: int, unit: Unit) -> None:
        if self.endpoint is None:
            self.network.send(now, self.id, self.server_id, RAW_TELEMETRY_PORT,
                              unit.payload, meta=dict(unit.meta))
            return
        room_id = self._room_by_node.get(unit.src)
        if room_id is None:
            return
        self._send_sealed(now, room_id, PAYLOAD_TELEMETRY + unit.payload)

    def _on_room_result(self, now: int, unit: Unit) -> None:
        if self.endpoint is None:
            self.network.send(now, self.id, self.server_id, RAW_RESULT_PORT,
                              unit.payload, meta=dict(unit.meta))
            return
        room_id = self._room_by_node.get(unit.src)
        if room_id is None:
            return
        self._send_sealed(now, room_id, PAYLOAD_RESULT + unit.payload)

    def _send_sealed(self, now: int, room_id: int, payload: bytes) -> None:
        sid = self._session_for_room(room_id)
        endpoint = self.endpoint
        if endpoint.session_phase(sid) is not SessionPhase.ESTABLISHED:
            self.telemetry_dropped_no_session += 1
            return
        self._emit_outputs(now, self.server_id, endpoint,
                           endpoint.send_payload(now, sid, payload))
        self._rearm(now)

    def _on_tunnel_event(self, now: int, peer: str, endpoint: TunnelEndpoint, event) -> None:
        self.events.append((now, event))
        if isinstance(event, TunnelUp):
            for room_id, _node, _port in self.rooms:
                self._emit_outputs(now, peer, endpoint,
                                   endpoint.open_session(now, self._session_for_room(room_id)))
        elif isinstance(event, PayloadReceived):
            kind, body = event.payload[:1], event.payload[1:]
            if kind == PAYLOAD_COMMAND:
                room_id = event.session_id
                target = self._node_by_room.get(room_id)
                if target is not None:
                    node_id, device_port = target
                    self.network.send(now, self.id, node_id, device_port, body)


class OpenRouterNode(Node):
    """The hop outside everyone's control: plain forwarding, and the one
    place a tap is allowed to attach."""

    tappable = True


class ServerNode(Node, _EndpointMixin):
    """Hosts the LNS end of every tunnel plus the control core."""

    def __init__(
        self,
        node_id: str,
        variant: str,
        secret: bytes,
        tunnel_config: TunnelConfig,
        core: ControlCore,
        peers: list[tuple[str, int]],  # (router node id, endpoint seed)
        room_nodes: dict[int, str],
        scripted: list | None = None,
    ) -> None:
        super().__init__(node_id)
        self.variant_name = variant
        self.core = core
        self.room_nodes = room_nodes
        self.scripted = list(scripted or [])
        self.endpoints: dict[str, TunnelEndpoint] = {}
        if variant != "NONE":
            for peer, seed in peers:
                self.endpoints[peer] = TunnelEndpoint(
                    Role.LNS,
                    Variant[variant],
                    secret,
                    config=tunnel_config,
                    rng=Random(seed),
                )
        self._armed_at: int | None = None
        self.tampered_received = 0
        self.malformed_results = 0
        self.script_errors = 0
        self.events: list[tuple[int, str, object]] = []
        core.set_transport(self._transport)

    def _endpoints(self):
        yield from self.endpoints.items()

    def _combined_deadline(self) -> int | None:
        deadlines = [ep.next_deadline() for ep in self.endpoints.values()]
        deadlines.append(self.core.next_deadline())
        live = [d for d in deadlines if d is not None]
        return min(live) if live else None

    def start(self, now: int) -> None:
        crossing = self.core.end_of_day_crossing_ms()
        if crossing is not None:
            self.network.schedule(crossing, self.id, "end_of_day")
        for index, spec in enumerate(self.scripted):
            # odd offset keeps scripted operator actions off the tick boundary
            self.network.schedule(spec.at_ms + 137, self.id, ("cmd", index))
        self._rearm(now)

    def on_timer(self, now: int, tag: object) -> None:
        if tag == "tunnel":
            self._armed_at = None
            for peer, endpoint in self._endpoints():
                self._emit_outputs(now, peer, endpoint, endpoint.step(now))
            self.core.on_timer(now)
        elif tag == "end_of_day":
            self.core.on_end_of_day(now)
        elif isinstance(tag, tuple) and tag and tag[0] == "cmd":
            spec = self.scripted[tag[1]]
            try:
                self.core.send_command(now, spec.room_id, Opcode[spec.opcode], origin="api")
            except ControlError:
                self.script_errors += 1
        self._rearm(now)

    def handle(self, now: int, unit: Unit) -> None:
        tampered = bool(unit.meta.get("tampered"))
        if tampered:
            self.tampered_received += 1
        if unit.kind == STREAM and unit.port == PPTP_CTRL_PORT:
            endpoint = self.endpoints.get(unit.src)
            if endpoint is not None:
                self._emit_outputs(now, unit.src, endpoint,
                                   endpoint.step(now, unit.payload, Channel.STREAM))
        elif unit.port in (L2TP_PORT, GRE_PORT):
            endpoint = self.endpoints.get(unit.src)
            if endpoint is not None:
                self._emit_outputs(now, unit.src, endpoint,
                                   endpoint.step(now, unit.payload))
        elif unit.port == RAW_TELEMETRY_PORT:
            self.core.ingest_raw(now, unit.payload, tampered=tampered)
        elif unit.port == RAW_RESULT_PORT:
            try:
                result = decode_result(unit.payload)
            except MalformedCommand:
                self.malformed_results += 1
            else:
                self.core.handle_result(now, result, tampered=tampered)
        self._rearm(now)

    def _transport(self, now: int, entry: RegistryEntry, payload: bytes) -> bool:
        if self.variant_name == "NONE":
            node_id = self.room_nodes.get(entry.room_id)
            if node_id is None:
                return False
            self.network.send(now, self.id, node_id, entry.device_port, payload)
            return True
        endpoint = self.endpoints.get(entry.node)
        if endpoint is None:
            return False
        if endpoint.session_phase(entry.session_id) is not SessionPhase.ESTABLISHED:
            return False
        try:
            outputs = endpoint.send_payload(now, entry.session_id, PAYLOAD_COMMAND + payload)
        except TunnelError:
            return False
        self._emit_outputs(now, entry.node, endpoint, outputs)
        return True

    def _on_tunnel_event(self, now: int, peer: str, endpoint: TunnelEndpoint, event) -> None:
        self.events.append((now, peer, event))
        if isinstance(event, PayloadReceived):
            kind, body = event.payload[:1], event.payload[1:]
            if kind == PAYLOAD_TELEMETRY:
                self.core.ingest_session(now, event.session_id, body)
            elif kind == PAYLOAD_RESULT:
                try:
                    result = decode_result(body)
                except MalformedCommand:
                    self.malformed_results += 1
                else:
                    self.core.handle_result(now, result)
