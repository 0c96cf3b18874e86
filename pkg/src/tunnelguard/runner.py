"""Build a network from a scenario, run it, and collect the evidence.

The runner is deliberately dumb glue: every behavior lives in the nodes,
endpoints, and the control core.  What it adds is bookkeeping - seed
derivation, registry bootstrap, the adversary tap, and turning the
finished network into a capture report plus log files on disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from random import Random

from .devices import Room, RoomState, SensorScript
from .netsim import STREAM, AdversaryMode, Network, Node, Tap, TamperRule
from .netsim.capture import CaptureReport, recovered_markers, write_capture_log
from .nodes import (
    GRE_PORT,
    L2TP_PORT,
    OpenRouterNode,
    RoomNode,
    RouterNode,
    ServerNode,
    _EndpointMixin,
)
from .scenario import Scenario, derive_secret, derive_seed
from .server.core import ControlCore, RegistryEntry
from .tunnel import (
    Channel,
    Role,
    SessionUp,
    TunnelConfig,
    TunnelDown,
    TunnelEndpoint,
    TunnelUp,
    Variant,
    wire,
)


@dataclass
class RunHandles:
    scenario: Scenario
    seed: int
    network: Network
    core: ControlCore
    server: ServerNode
    routers: dict
    rooms: dict
    tap: Tap | None


@dataclass
class RunResult:
    handles: RunHandles
    report: CaptureReport
    written: dict


def build_run(scenario: Scenario, seed: int | None = None, endless: bool = False) -> RunHandles:
    """Instantiate the whole estate. `endless` lets rooms keep ticking past
    the scenario duration (serve mode); batch runs stop emitting there so
    line counts stay exact."""
    master = scenario.seed if seed is None else seed
    secret = derive_secret(master)
    net = Network()

    net.add_node(OpenRouterNode(scenario.open_router))

    core = ControlCore(rules=scenario.rules, day_start_s=scenario.day_start_s)
    room_node_ids = {r.room_id: f"room_{r.room_id}" for r in scenario.rooms}
    peers = [
        (router, derive_seed(master, f"endpoint:{scenario.server}:{router}"))
        for router in scenario.routers
    ]
    server = ServerNode(
        scenario.server,
        scenario.variant,
        secret,
        scenario.tunnel,
        core,
        peers,
        room_node_ids,
        scripted=scenario.commands,
    )
    net.add_node(server)

    routers: dict[str, RouterNode] = {}
    for router_id in scenario.routers:
        room_list = [
            (r.room_id, room_node_ids[r.room_id], r.device_port)
            for r in scenario.rooms_for(router_id)
        ]
        node = RouterNode(
            router_id,
            scenario.variant,
            scenario.server,
            secret,
            scenario.tunnel,
            derive_seed(master, f"endpoint:{router_id}"),
            room_list,
        )
        routers[router_id] = node
        net.add_node(node)

    rooms: dict[int, RoomNode] = {}
    for spec in scenario.rooms:
        state = RoomState(
            room_id=spec.room_id,
            motion=spec.motion,
            temperature=spec.temperature,
            humidity=spec.humidity,
            servo_angle=spec.servo_angle,
            appliance_on=spec.appliance_on,
        )
        script = SensorScript(
            points=[(t, dict(values)) for t, values in spec.script],
            temperature_drift_per_s=spec.drift_per_s,
        )
        room = Room(state, script, vacancy_debounce_ms=scenario.rules.vacancy_debounce_s * 1000)
        node = RoomNode(room_node_ids[spec.room_id], room, spec.router, spec.device_port,
                        until_ms=None if endless else scenario.duration_s * 1000)
        rooms[spec.room_id] = node
        net.add_node(node)

    for link in scenario.links:
        net.add_link(
            link.a, link.b, link.latency_ms, link.loss,
            derive_seed(master, f"link:{link.a}:{link.b}"),
            derive_seed(master, f"link:{link.b}:{link.a}"),
        )
    for spec in scenario.rooms:
        node_id = room_node_ids[spec.room_id]
        net.add_link(
            node_id, spec.router,
            scenario.room_link_latency_ms, scenario.room_link_loss,
            derive_seed(master, f"link:{node_id}:{spec.router}"),
            derive_seed(master, f"link:{spec.router}:{node_id}"),
        )

    peer_port = {"L2TP_LITE": L2TP_PORT, "PPTP_LITE": GRE_PORT, "NONE": 0}[scenario.variant]
    for spec in sorted(scenario.rooms, key=lambda r: r.room_id):
        core.add_room(0, RegistryEntry(
            room_id=spec.room_id,
            node=spec.router,
            port=peer_port,
            session_id=spec.room_id,
            device_port=spec.device_port,
        ))

    tap = None
    if scenario.adversary is not None:
        if scenario.adversary.mode == "mitm":
            tap = Tap(AdversaryMode.MITM,
                      TamperRule(scenario.adversary.every_n, scenario.adversary.bit_offset))
        else:
            tap = Tap(AdversaryMode.PASSIVE_SNIFF)
        net.attach_tap(scenario.open_router, tap)

    return RunHandles(scenario, master, net, core, server, routers, rooms, tap)


def collect_report(handles: RunHandles) -> CaptureReport:
    scenario = handles.scenario
    core = handles.core
    tap = handles.tap

    emitted: list[bytes] = []
    for room_id in sorted(handles.rooms):
        emitted.extend(line for _, line in handles.rooms[room_id].emitted)
    distinct_emitted = len(set(emitted))

    entries = tap.entries if tap else []
    recovered_lines = recovered_markers(entries, emitted)
    recovered_cmds = recovered_markers(entries, core.sent_commands)

    endpoints: list[TunnelEndpoint] = [
        r.endpoint for r in handles.routers.values() if r.endpoint is not None
    ]
    endpoints.extend(handles.server.endpoints.values())
    auth_failures = sum(e.auth_failures for e in endpoints)
    replays = sum(e.replays for e in endpoints)
    decode_errors = sum(e.decode_errors for e in endpoints)

    tampered_delivered = handles.server.tampered_received
    tampered_delivered += sum(r.tampered_received for r in handles.routers.values())
    tampered_delivered += sum(r.tampered_received for r in handles.rooms.values())
    tampered_cmds_accepted = sum(r.tampered_commands_accepted for r in handles.rooms.values())
    tampered_accepted = (
        tampered_cmds_accepted
        + core.counters["tampered_lines_accepted"]
        + core.counters["tampered_results_accepted"]
    )

    control = data = chunks = 0
    for entry in entries:
        if entry.kind != "dgram":
            chunks += 1
        elif _is_control_frame(entry.data):
            control += 1
        else:
            data += 1

    report = CaptureReport(
        scenario=scenario.name,
        variant=scenario.variant,
        adversary=scenario.adversary.mode if scenario.adversary else "none",
        frames_captured=len(entries),
        control_frames=control,
        data_frames=data,
        stream_chunks=chunks,
        lines_emitted=len(emitted),
        distinct_lines_emitted=distinct_emitted,
        plaintext_lines_recovered=len(recovered_lines),
        commands_sent=len(set(core.sent_commands)),
        commands_recovered=len(recovered_cmds),
        tamper_attempts=tap.tamper_attempts if tap else 0,
        tampered_delivered=tampered_delivered,
        tamper_auth_failures=auth_failures,
        tampered_commands_accepted=tampered_cmds_accepted,
        replays_rejected=replays,
        decode_errors=decode_errors,
    )
    report.extras.update({
        "seed": handles.seed,
        "lines_persisted": core.counters["lines_persisted"],
        "malformed_lines": core.counters["malformed_lines"],
        "unmapped_sessions": core.counters["unmapped_session"],
        "tampered_accepted_by_victim": tampered_accepted,
        "command_timeouts": core.counters["command_timeouts"],
        "command_retries": core.counters["command_retries"],
        "events_total": len(core.events),
        "fire_alarms": sum(1 for e in core.events if e.kind == "FIRE_ALARM"),
        "lock_refused_events": sum(1 for e in core.events if e.kind == "LOCK_REFUSED"),
        "sweeps": [s.to_dict() for s in core.sweeps],
        "telemetry_dropped_no_session": sum(
            r.telemetry_dropped_no_session for r in handles.routers.values()
        ),
        "stream_conns": sorted(
            f"{a}:{b}:{port}" for a, b, port in handles.network.stream_pairs
        ),
        "links": handles.network.link_totals(),
    })
    return report


def _is_control_frame(data: bytes) -> bool:
    if len(data) >= wire.HEADER_LEN and (data[0] & 0x0F) == wire.PROTOCOL_VERSION:
        declared = int.from_bytes(data[1:3], "big")
        if declared == len(data):
            return bool(data[0] & 0x80)
    return False


def run_scenario(scenario: Scenario, outdir: str | Path | None = None,
                 seed: int | None = None, figures: bool = True) -> RunResult:
    handles = build_run(scenario, seed=seed)
    net = handles.network
    net.start()
    net.run_until((scenario.duration_s + 1) * 1000)

    report = collect_report(handles)
    written: dict[str, Path] = {}
    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "capture_report.json"
        report_path.write_text(report.to_json())
        written["capture_report"] = report_path

        telemetry_path = out / "telemetry.log"
        telemetry_path.write_text(
            "".join(line + "\n" for line in handles.core.telemetry_log_lines())
        )
        written["telemetry_log"] = telemetry_path

        events_path = out / "events.log"
        events_path.write_text(
            "".join(line + "\n" for line in handles.core.event_log_lines())
        )
        written["events_log"] = events_path

        import json as _json
        sweep_path = out / "sweep_report.json"
        sweep_path.write_text(_json.dumps(
            {"sweeps": [s.to_dict() for s in handles.core.sweeps]},
            indent=2, sort_keys=True) + "\n")
        written["sweep_report"] = sweep_path

        if handles.tap is not None:
            capture_path = out / "capture.log"
            write_capture_log(capture_path, handles.tap.entries)
            written["capture_log"] = capture_path

        if figures:
            from . import report as report_mod
            for name, path in report_mod.render_figures(out, report, handles).items():
                written[name] = path

    return RunResult(handles, report, written)


# ---------------------------------------------------------------------------
# bare-tunnel reliability trials
# ---------------------------------------------------------------------------


class _TrialPeer(Node, _EndpointMixin):
    """Minimal endpoint host for loss trials: no rooms, no server, just
    the tunnel state machine talking across one lossy link."""

    def __init__(self, node_id: str, endpoint: TunnelEndpoint, peer_id: str,
                 sessions_to_open: int = 0) -> None:
        super().__init__(node_id)
        self.endpoint = endpoint
        self.peer_id = peer_id
        self.sessions_to_open = sessions_to_open
        self._armed_at: int | None = None
        self.tunnel_up_at: int | None = None
        self.tunnel_down: TunnelDown | None = None
        self.tunnel_down_at: int | None = None
        self.sessions_up: set[int] = set()

    def _endpoints(self):
        yield self.peer_id, self.endpoint

    def _combined_deadline(self):
        return self.endpoint.next_deadline()

    def start(self, now: int) -> None:
        if self.endpoint.role is Role.LAC:
            self._emit_outputs(now, self.peer_id, self.endpoint, self.endpoint.start(now))
        self._rearm(now)

    def on_timer(self, now: int, tag: object) -> None:
        if tag == "tunnel":
            self._on_tunnel_timer(now)

    def handle(self, now: int, unit) -> None:
        channel = Channel.STREAM if unit.kind == STREAM else Channel.DATAGRAM
        self._emit_outputs(now, self.peer_id, self.endpoint,
                           self.endpoint.step(now, unit.payload, channel))
        self._rearm(now)

    def _on_tunnel_event(self, now: int, peer: str, endpoint, event) -> None:
        if isinstance(event, TunnelUp):
            self.tunnel_up_at = now
            for sid in range(1, self.sessions_to_open + 1):
                self._emit_outputs(now, peer, endpoint, endpoint.open_session(now, sid))
        elif isinstance(event, TunnelDown):
            self.tunnel_down = event
            self.tunnel_down_at = now
        elif isinstance(event, SessionUp):
            self.sessions_up.add(event.session_id)


def run_reliability_trial(
    seed: int,
    loss: float = 0.3,
    sessions: int = 20,
    rto_ms: int = 1000,
    max_retransmits: int = 6,
    latency_ms: int = 5,
    horizon_s: int = 600,
    variant: Variant = Variant.L2TP_LITE,
) -> dict:
    """One seeded attempt to bring up a tunnel plus `sessions` sessions
    across a lossy link.  Returns what happened and how hard the
    reliable layer had to work."""
    config = TunnelConfig(rto_ms=rto_ms, max_retransmits=max_retransmits)
    secret = derive_secret(seed)
    lac_ep = TunnelEndpoint(Role.LAC, variant, secret, config=config,
                            rng=Random(derive_seed(seed, "trial:lac")))
    lns_ep = TunnelEndpoint(Role.LNS, variant, secret, config=config,
                            rng=Random(derive_seed(seed, "trial:lns")))
    net = Network()
    lac = _TrialPeer("lac", lac_ep, "lns", sessions_to_open=sessions)
    lns = _TrialPeer("lns", lns_ep, "lac")
    net.add_node(lac)
    net.add_node(lns)
    net.add_link("lac", "lns", latency_ms, loss,
                 derive_seed(seed, "trial-link:fwd"), derive_seed(seed, "trial-link:rev"))
    net.start()

    horizon_ms = horizon_s * 1000
    established = False
    while net.now < horizon_ms:
        net.run_until(min(net.now + 100, horizon_ms))
        established = (
            lac_ep.established
            and len(lac.sessions_up) == sessions
            and len(lns_ep.established_sessions()) == sessions
        )
        if established or lac.tunnel_down is not None or lns.tunnel_down is not None:
            break
        if net.pending_events() == 0:
            break

    return {
        "established": established,
        "finished_at": net.now,
        "tunnel_down_at": lac.tunnel_down_at,
        "tunnel_down_reason": lac.tunnel_down.reason if lac.tunnel_down else None,
        "sessions_up": len(lac.sessions_up),
        "retransmissions": lac_ep.retransmissions + lns_ep.retransmissions,
        "max_message_retransmits": max(
            lac_ep.max_message_retransmits, lns_ep.max_message_retransmits
        ),
    }
