"""Scenario documents: what to simulate, declared as JSON.

A scenario pins everything a run needs - rooms and their sensor
scripts, topology and link parameters, the tunnel variant, the
adversary, rule configuration, and one master seed.  Validation is
strict and names the offending field, because a scenario is the main
user-facing input and silent defaults hide typos.

All derived randomness (link loss, tunnel ids, nonces, secrets) comes
from the master seed through labeled hashing, so two runs of one
document are bit-for-bit identical, and TG_SEED can swap the master
seed without touching the file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .server.core import RuleConfig
from .tunnel import TunnelConfig

VARIANTS = ("L2TP_LITE", "PPTP_LITE", "NONE")
ADVERSARY_MODES = ("sniff", "mitm")
_OPCODES = ("LOCK", "UNLOCK", "APPLIANCE_ON", "APPLIANCE_OFF", "BUZZER_ON", "BUZZER_OFF")


class ScenarioError(ValueError):
    """Validation failure; `field` is a dotted path into the document."""

    def __init__(self, field_path: str, message: str) -> None:
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


def derive_seed(master: int, label: str) -> int:
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def derive_secret(master: int) -> bytes:
    return hashlib.sha256(f"{master}:shared-secret".encode()).digest()


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    latency_ms: int = 2
    loss: float = 0.0


@dataclass(frozen=True)
class RoomSpec:
    room_id: int
    router: str
    device_port: int
    motion: bool = False
    temperature: float = 21.0
    humidity: int | None = 40
    appliance_on: bool = False
    servo_angle: int = 0
    drift_per_s: float = 0.0
    script: tuple = ()  # ((t_ms, {field: value}), ...)


@dataclass(frozen=True)
class CommandSpec:
    at_ms: int
    room_id: int
    opcode: str


@dataclass(frozen=True)
class AdversarySpec:
    mode: str
    every_n: int = 10
    bit_offset: int = 8


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_s: int
    variant: str
    day_start_s: int
    rules: RuleConfig
    tunnel: TunnelConfig
    server: str
    open_router: str
    routers: tuple
    links: tuple
    room_link_latency_ms: int
    room_link_loss: float
    rooms: tuple
    commands: tuple
    adversary: AdversarySpec | None

    def rooms_for(self, router: str) -> list[RoomSpec]:
        return [r for r in self.rooms if r.router == router]


def _need(doc: dict, key: str, path: str):
    if key not in doc:
        raise ScenarioError(f"{path}{key}", "missing required field")
    return doc[key]


def _as_int(value, path: str, minimum: int | None = None, maximum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(path, f"must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ScenarioError(path, f"must be <= {maximum}, got {value}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_str(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise ScenarioError(path, f"expected a non-empty string, got {value!r}")
    return value


def _parse_day_start(value, path: str) -> int:
    text = _as_str(value, path)
    parts = text.split(":")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise ScenarioError(path, f"expected HH:MM:SS, got {text!r}")
    h, m, s = (int(p) for p in parts)
    if h > 23 or m > 59 or s > 59:
        raise ScenarioError(path, f"not a time of day: {text!r}")
    return h * 3600 + m * 60 + s


def validate_scenario(doc: dict, source: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError(source, "document must be a JSON object")

    name = _as_str(_need(doc, "name", ""), "name")
    seed = _as_int(_need(doc, "seed", ""), "seed", minimum=0)
    duration = _as_int(_need(doc, "duration_s", ""), "duration_s", minimum=1, maximum=86_400)
    variant = _as_str(_need(doc, "variant", ""), "variant")
    if variant not in VARIANTS:
        raise ScenarioError("variant", f"must be one of {VARIANTS}, got {variant!r}")
    day_start = _parse_day_start(doc.get("day_start", "00:00:00"), "day_start")

    rules_doc = doc.get("rules", {})
    if not isinstance(rules_doc, dict):
        raise ScenarioError("rules", "must be an object")
    rules = RuleConfig(
        fire_threshold=_as_number(rules_doc.get("fire_threshold", 50.0), "rules.fire_threshold"),
        end_of_day=_as_str(rules_doc.get("end_of_day", "18:00:00"), "rules.end_of_day"),
        vacancy_debounce_s=_as_int(rules_doc.get("vacancy_debounce_s", 30), "rules.vacancy_debounce_s", minimum=0),
        command_timeout_ms=_as_int(rules_doc.get("command_timeout_ms", 2000), "rules.command_timeout_ms", minimum=1),
        command_retries=_as_int(rules_doc.get("command_retries", 1), "rules.command_retries", minimum=0),
    )
    try:
        rules.end_of_day_seconds()
    except ValueError as exc:
        raise ScenarioError("rules.end_of_day", str(exc)) from None

    tunnel_doc = doc.get("tunnel", {})
    if not isinstance(tunnel_doc, dict):
        raise ScenarioError("tunnel", "must be an object")
    tunnel = TunnelConfig(
        rto_ms=_as_int(tunnel_doc.get("rto_ms", 1000), "tunnel.rto_ms", minimum=1),
        max_retransmits=_as_int(tunnel_doc.get("max_retransmits", 5), "tunnel.max_retransmits", minimum=1),
        hello_interval_ms=_as_int(tunnel_doc.get("hello_interval_ms", 10_000), "tunnel.hello_interval_ms", minimum=1),
        mtu=_as_int(tunnel_doc.get("mtu", 1400), "tunnel.mtu", minimum=64),
    )

    topo = _need(doc, "topology", "")
    if not isinstance(topo, dict):
        raise ScenarioError("topology", "must be an object")
    server = _as_str(_need(topo, "server", "topology."), "topology.server")
    open_router = _as_str(_need(topo, "open_router", "topology."), "topology.open_router")
    routers_doc = _need(topo, "routers", "topology.")
    if not isinstance(routers_doc, list) or not routers_doc:
        raise ScenarioError("topology.routers", "must be a non-empty list")
    routers = tuple(_as_str(r, f"topology.routers[{i}]") for i, r in enumerate(routers_doc))
    if len(set(routers)) != len(routers):
        raise ScenarioError("topology.routers", "router ids must be unique")
    named = {server, open_router, *routers}
    if len(named) != len(routers) + 2:
        raise ScenarioError("topology", "server, open_router and routers must all be distinct")

    links_doc = _need(topo, "links", "topology.")
    if not isinstance(links_doc, list) or not links_doc:
        raise ScenarioError("topology.links", "must be a non-empty list")
    links = []
    for i, link in enumerate(links_doc):
        path = f"topology.links[{i}]"
        if not isinstance(link, dict):
            raise ScenarioError(path, "must be an object")
        a = _as_str(_need(link, "a", path + "."), path + ".a")
        b = _as_str(_need(link, "b", path + "."), path + ".b")
        if a not in named or b not in named:
            raise ScenarioError(path, f"link endpoints must be declared nodes, got {a!r}-{b!r}")
        latency = _as_int(link.get("latency_ms", 2), path + ".latency_ms", minimum=0)
        loss = _as_number(link.get("loss", 0.0), path + ".loss")
        if not 0.0 <= loss <= 1.0:
            raise ScenarioError(path + ".loss", f"must be in [0, 1], got {loss}")
        links.append(LinkSpec(a, b, latency, loss))

    room_link = topo.get("room_link", {})
    if not isinstance(room_link, dict):
        raise ScenarioError("topology.room_link", "must be an object")
    room_latency = _as_int(room_link.get("latency_ms", 1), "topology.room_link.latency_ms", minimum=0)
    room_loss = _as_number(room_link.get("loss", 0.0), "topology.room_link.loss")
    if not 0.0 <= room_loss <= 1.0:
        raise ScenarioError("topology.room_link.loss", f"must be in [0, 1], got {room_loss}")

    rooms_doc = _need(doc, "rooms", "")
    if not isinstance(rooms_doc, list) or not rooms_doc:
        raise ScenarioError("rooms", "must be a non-empty list")
    rooms = []
    seen_rooms: set[int] = set()
    seen_ports: set[int] = set()
    for i, room in enumerate(rooms_doc):
        path = f"rooms[{i}]"
        if not isinstance(room, dict):
            raise ScenarioError(path, "must be an object")
        room_id = _as_int(_need(room, "room_id", path + "."), path + ".room_id", minimum=1, maximum=0xFFFFFFFF)
        if room_id in seen_rooms:
            raise ScenarioError(path + ".room_id", f"duplicate room id {room_id}")
        seen_rooms.add(room_id)
        router = _as_str(_need(room, "router", path + "."), path + ".router")
        if router not in routers:
            raise ScenarioError(path + ".router", f"unknown router {router!r}")
        device_port = _as_int(_need(room, "device_port", path + "."), path + ".device_port", minimum=1, maximum=65535)
        if device_port in seen_ports:
            raise ScenarioError(path + ".device_port", f"duplicate device port {device_port}")
        seen_ports.add(device_port)

        initial = room.get("initial", {})
        if not isinstance(initial, dict):
            raise ScenarioError(path + ".initial", "must be an object")
        motion = initial.get("motion", 0)
        if motion not in (0, 1, False, True):
            raise ScenarioError(path + ".initial.motion", "must be 0 or 1")
        temperature = _as_number(initial.get("temperature", 21.0), path + ".initial.temperature")
        humidity = initial.get("humidity", 40)
        if humidity is not None:
            humidity = _as_int(humidity, path + ".initial.humidity", minimum=0, maximum=100)
        appliance = initial.get("appliance_on", 0)
        if appliance not in (0, 1, False, True):
            raise ScenarioError(path + ".initial.appliance_on", "must be 0 or 1")
        servo = _as_int(initial.get("servo_angle", 0), path + ".initial.servo_angle", minimum=0, maximum=180)
        drift = _as_number(room.get("drift_per_s", 0.0), path + ".drift_per_s")

        script_doc = room.get("script", [])
        if not isinstance(script_doc, list):
            raise ScenarioError(path + ".script", "must be a list")
        script = []
        last_t = -1
        for j, point in enumerate(script_doc):
            ppath = f"{path}.script[{j}]"
            if not isinstance(point, dict):
                raise ScenarioError(ppath, "must be an object")
            t_s = point.get("t_s")
            if t_s is None:
                raise ScenarioError(ppath + ".t_s", "missing required field")
            t_s = _as_int(t_s, ppath + ".t_s", minimum=0)
            if t_s * 1000 <= last_t:
                raise ScenarioError(ppath + ".t_s", "script times must be strictly increasing")
            last_t = t_s * 1000
            values: dict = {}
            if "motion" in point:
                if point["motion"] not in (0, 1, False, True):
                    raise ScenarioError(ppath + ".motion", "must be 0 or 1")
                values["motion"] = int(point["motion"])
            if "temperature" in point:
                values["temperature"] = _as_number(point["temperature"], ppath + ".temperature")
            if "humidity" in point:
                values["humidity"] = _as_int(point["humidity"], ppath + ".humidity", minimum=0, maximum=100)
            if not values:
                raise ScenarioError(ppath, "script point sets none of motion/temperature/humidity")
            script.append((t_s * 1000, values))
        rooms.append(RoomSpec(
            room_id=room_id,
            router=router,
            device_port=device_port,
            motion=bool(motion),
            temperature=temperature,
            humidity=humidity,
            appliance_on=bool(appliance),
            servo_angle=servo,
            drift_per_s=drift,
            script=tuple(script),
        ))

    commands_doc = doc.get("commands", [])
    if not isinstance(commands_doc, list):
        raise ScenarioError("commands", "must be a list")
    commands = []
    for i, cmd in enumerate(commands_doc):
        path = f"commands[{i}]"
        if not isinstance(cmd, dict):
            raise ScenarioError(path, "must be an object")
        at_s = _as_number(_need(cmd, "at_s", path + "."), path + ".at_s")
        if at_s < 0 or at_s > duration:
            raise ScenarioError(path + ".at_s", f"must be within [0, duration_s], got {at_s}")
        room_id = _as_int(_need(cmd, "room_id", path + "."), path + ".room_id", minimum=1)
        if room_id not in seen_rooms:
            raise ScenarioError(path + ".room_id", f"unknown room {room_id}")
        opcode = _as_str(_need(cmd, "opcode", path + "."), path + ".opcode")
        if opcode not in _OPCODES:
            raise ScenarioError(path + ".opcode", f"must be one of {_OPCODES}, got {opcode!r}")
        commands.append(CommandSpec(int(at_s * 1000), room_id, opcode))

    adversary_doc = doc.get("adversary")
    adversary = None
    if adversary_doc is not None:
        if not isinstance(adversary_doc, dict):
            raise ScenarioError("adversary", "must be an object or null")
        mode = _as_str(_need(adversary_doc, "mode", "adversary."), "adversary.mode")
        if mode not in ADVERSARY_MODES:
            raise ScenarioError("adversary.mode", f"must be one of {ADVERSARY_MODES}, got {mode!r}")
        tamper = adversary_doc.get("tamper", {})
        if not isinstance(tamper, dict):
            raise ScenarioError("adversary.tamper", "must be an object")
        adversary = AdversarySpec(
            mode=mode,
            every_n=_as_int(tamper.get("every_n", 10), "adversary.tamper.every_n", minimum=1),
            bit_offset=_as_int(tamper.get("bit_offset", 8), "adversary.tamper.bit_offset", minimum=0),
        )

    return Scenario(
        name=name,
        seed=seed,
        duration_s=duration,
        variant=variant,
        day_start_s=day_start,
        rules=rules,
        tunnel=tunnel,
        server=server,
        open_router=open_router,
        routers=routers,
        links=tuple(links),
        room_link_latency_ms=room_latency,
        room_link_loss=room_loss,
        rooms=tuple(rooms),
        commands=tuple(commands),
        adversary=adversary,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read scenario: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"not valid JSON: {exc}") from None
    return validate_scenario(doc, source=str(path))


# ---------------------------------------------------------------------------
# canonical replication scenario
# ---------------------------------------------------------------------------

def build_replication_doc(variant: str, adversary_mode: str) -> dict:
    """The canonical 20-room, 60-second estate used by the shipped
    scenario files: two secure routers with ten rooms each, one open
    hop carrying everything, a fire in room 103 at t=40, an auto-off
    demo in room 106, and a sweep race in room 107 right at the
    end-of-day crossing (t=50).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if adversary_mode not in ADVERSARY_MODES:
        raise ValueError(f"adversary_mode must be one of {ADVERSARY_MODES}")

    rooms = []
    for index in range(20):
        wing = "a" if index < 10 else "b"
        room_id = (101 + index) if index < 10 else (201 + index - 10)
        occupied = index % 2 == 1
        room: dict = {
            "room_id": room_id,
            "router": f"router_{wing}",
            "device_port": 8000 + room_id,
            "initial": {
                "motion": 1 if occupied else 0,
                "temperature": round(21.0 + (index % 7) * 0.7, 1),
                "humidity": 35 + (index % 10) * 2,
                "appliance_on": 1 if occupied else 0,
                "servo_angle": 0,
            },
            "drift_per_s": 0.1,
        }
        script = []
        if room_id == 103:
            # fire: jumps well past the alarm threshold and keeps climbing
            script.append({"t_s": 40, "temperature": 55.0})
        if room_id == 106:
            # occupied room empties early; appliances must auto-off 30 s later
            room["initial"]["motion"] = 1
            room["initial"]["appliance_on"] = 1
            script.append({"t_s": 10, "motion": 0})
        if room_id == 107:
            # becomes occupied in the same second the sweep starts: the
            # sweep acts on the stale record and the device refuses
            room["initial"]["motion"] = 0
            room["initial"]["appliance_on"] = 0
            script.append({"t_s": 50, "motion": 1})
        if room_id == 204:
            script.append({"t_s": 25, "motion": 0})
        if room_id == 207:
            script.append({"t_s": 35, "motion": 1})
        if room_id == 209:
            script.append({"t_s": 30, "humidity": 55})
        if script:
            room["script"] = script
        rooms.append(room)

    # Rooms with an odd index start occupied: 102, 104, 108, 110, 202,
    # 206, 208, 210 (plus 106 until t=10 and 204 until t=25).  Command
    # targets below rely on that split: LOCK demos against occupied
    # rooms must refuse, appliance demos that should stick target
    # occupied rooms (vacant ones auto-off within a tick at this point).
    commands = [
        {"at_s": 15, "room_id": 101, "opcode": "APPLIANCE_ON"},
        {"at_s": 17, "room_id": 104, "opcode": "BUZZER_ON"},
        {"at_s": 18, "room_id": 105, "opcode": "LOCK"},
        {"at_s": 20, "room_id": 104, "opcode": "LOCK"},
        {"at_s": 22, "room_id": 109, "opcode": "APPLIANCE_OFF"},
        {"at_s": 24, "room_id": 104, "opcode": "BUZZER_OFF"},
        {"at_s": 25, "room_id": 105, "opcode": "UNLOCK"},
        {"at_s": 28, "room_id": 110, "opcode": "BUZZER_ON"},
        {"at_s": 30, "room_id": 203, "opcode": "BUZZER_ON"},
        {"at_s": 32, "room_id": 110, "opcode": "BUZZER_OFF"},
        {"at_s": 34, "room_id": 202, "opcode": "APPLIANCE_OFF"},
        {"at_s": 36, "room_id": 201, "opcode": "LOCK"},
        {"at_s": 38, "room_id": 201, "opcode": "UNLOCK"},
        {"at_s": 42, "room_id": 103, "opcode": "BUZZER_OFF"},
        {"at_s": 44, "room_id": 202, "opcode": "APPLIANCE_ON"},
        {"at_s": 45, "room_id": 210, "opcode": "BUZZER_ON"},
        {"at_s": 46, "room_id": 210, "opcode": "BUZZER_OFF"},
        {"at_s": 47, "room_id": 209, "opcode": "APPLIANCE_OFF"},
        {"at_s": 48, "room_id": 208, "opcode": "BUZZER_ON"},
        {"at_s": 49, "room_id": 203, "opcode": "BUZZER_OFF"},
    ]

    doc = {
        "name": f"replication_{variant.lower()}_{adversary_mode}",
        "seed": 20260819,
        "duration_s": 60,
        "variant": variant,
        "day_start": "17:59:10",
        "rules": {
            "fire_threshold": 50.0,
            "end_of_day": "18:00:00",
            "vacancy_debounce_s": 30,
            "command_timeout_ms": 2000,
            "command_retries": 1,
        },
        "tunnel": {
            "rto_ms": 1000,
            "max_retransmits": 5,
            "hello_interval_ms": 10000,
            "mtu": 1400,
        },
        "topology": {
            "server": "server",
            "open_router": "wan",
            "routers": ["router_a", "router_b"],
            "links": [
                {"a": "router_a", "b": "wan", "latency_ms": 2, "loss": 0.0},
                {"a": "router_b", "b": "wan", "latency_ms": 2, "loss": 0.0},
                {"a": "wan", "b": "server", "latency_ms": 2, "loss": 0.0},
            ],
            "room_link": {"latency_ms": 1, "loss": 0.0},
        },
        "rooms": rooms,
        "commands": commands,
        "adversary": {"mode": adversary_mode, "tamper": {"every_n": 10, "bit_offset": 8}},
    }
    return doc
