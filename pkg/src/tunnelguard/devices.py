"""Simulated room controllers.

Each room owns a motion sensor, a temperature/humidity sensor, a door
servo (0 = unlocked, 90 = locked), an appliance relay, and a sounder.
Once per second the room samples its sensor script, applies local
rules, and emits one telemetry line:

    <room_id>-<motion>,<appliance>,<servo>,<temp>[,<humidity>]

e.g. ``101-1,1,90,26.0,40``.  The temperature always carries exactly
one fraction digit and may be negative; humidity is optional on parse
for older four-field emitters.

Command datagrams are ``opcode (u8) || request_id (u32 BE)``; replies
append ``status || servo || appliance`` (u8 each).  A LOCK against an
occupied room is refused rather than executed, so the servo can never
be driven to 90 while motion is detected.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

TICK_MS = 1000
VACANCY_DEBOUNCE_MS = 30_000
SERVO_LOCKED = 90
SERVO_UNLOCKED = 0

_CMD = struct.Struct(">BI")
_RESULT = struct.Struct(">BIBBB")


class Opcode(enum.IntEnum):
    LOCK = 0x01
    UNLOCK = 0x02
    APPLIANCE_ON = 0x03
    APPLIANCE_OFF = 0x04
    BUZZER_ON = 0x05
    BUZZER_OFF = 0x06

    @classmethod
    def name_of(cls, opcode: int) -> str:
        try:
            return cls(opcode).name
        except ValueError:
            return f"0x{opcode:02X}"


class CommandStatus(enum.IntEnum):
    OK = 0
    REFUSED_OCCUPIED = 1
    UNKNOWN_COMMAND = 2


class MalformedCommand(ValueError):
    pass


@dataclass(frozen=True)
class Command:
    opcode: int  # kept as a raw int so unknown opcodes survive decoding
    request_id: int


@dataclass(frozen=True)
class CommandResult:
    opcode: int
    request_id: int
    status: CommandStatus
    servo_angle: int
    appliance_on: bool


def encode_command(cmd: Command) -> bytes:
    return _CMD.pack(cmd.opcode, cmd.request_id)


def decode_command(data: bytes) -> Command:
    if len(data) != _CMD.size:
        raise MalformedCommand(f"command must be {_CMD.size} bytes, got {len(data)}")
    opcode, request_id = _CMD.unpack(data)
    return Command(opcode, request_id)


def encode_result(result: CommandResult) -> bytes:
    return _RESULT.pack(
        result.opcode, result.request_id, int(result.status),
        result.servo_angle, int(result.appliance_on),
    )


def decode_result(data: bytes) -> CommandResult:
    if len(data) != _RESULT.size:
        raise MalformedCommand(f"result must be {_RESULT.size} bytes, got {len(data)}")
    opcode, request_id, status, servo, appliance = _RESULT.unpack(data)
    try:
        parsed = CommandStatus(status)
    except ValueError:
        raise MalformedCommand(f"unknown status {status}") from None
    return CommandResult(opcode, request_id, parsed, servo, bool(appliance))


@dataclass
class RoomState:
    room_id: int
    motion: bool = False
    temperature: float = 21.0
    humidity: int | None = 40
    servo_angle: int = SERVO_UNLOCKED
    appliance_on: bool = False
    buzzer_on: bool = False
    vacancy_since: int | None = 0  # set iff motion is false

    @property
    def locked(self) -> bool:
        return self.servo_angle >= SERVO_LOCKED


def format_telemetry(state: RoomState) -> bytes:
    line = (
        f"{state.room_id}-{int(state.motion)},{int(state.appliance_on)},"
        f"{state.servo_angle},{state.temperature:.1f}"
    )
    if state.humidity is not None:
        line += f",{state.humidity}"
    return line.encode("ascii")


@dataclass
class SensorScript:
    """Set-point timeline. Values hold until the next point replaces them."""

    points: list = field(default_factory=list)  # [(t_ms, {"motion": .., "temperature": .., "humidity": ..})]
    temperature_drift_per_s: float = 0.0

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p[0])


class Room:
    """One controller: sensors in, telemetry out, commands round-tripped."""

    def __init__(
        self,
        state: RoomState,
        script: SensorScript | None = None,
        vacancy_debounce_ms: int = VACANCY_DEBOUNCE_MS,
        start_time_ms: int = 0,
    ):
        self.state = state
        self.script = script or SensorScript()
        self.vacancy_debounce_ms = vacancy_debounce_ms
        self._script_pos = 0
        self._base_temperature = state.temperature
        self.state.vacancy_since = None if state.motion else start_time_ms

    def tick(self, now: int) -> bytes:
        """Advance one sampling period and return the telemetry line."""
        self._sample_sensors(now)
        self._apply_local_rules(now)
        return format_telemetry(self.state)

    def handle_command(self, data: bytes) -> CommandResult:
        cmd = decode_command(data)
        state = self.state
        status = CommandStatus.OK
        if cmd.opcode == Opcode.LOCK:
            if state.motion:
                status = CommandStatus.REFUSED_OCCUPIED
            else:
                state.servo_angle = SERVO_LOCKED
        elif cmd.opcode == Opcode.UNLOCK:
            state.servo_angle = SERVO_UNLOCKED
        elif cmd.opcode == Opcode.APPLIANCE_ON:
            state.appliance_on = True
        elif cmd.opcode == Opcode.APPLIANCE_OFF:
            state.appliance_on = False
        elif cmd.opcode == Opcode.BUZZER_ON:
            state.buzzer_on = True
        elif cmd.opcode == Opcode.BUZZER_OFF:
            state.buzzer_on = False
        else:
            status = CommandStatus.UNKNOWN_COMMAND
        return CommandResult(
            cmd.opcode, cmd.request_id, status, state.servo_angle, state.appliance_on
        )

    # ----------------------------------------------------------- internals

    def _sample_sensors(self, now: int) -> None:
        state = self.state
        points = self.script.points
        while self._script_pos < len(points) and points[self._script_pos][0] <= now:
            values = points[self._script_pos][1]
            if "motion" in values:
                motion = bool(values["motion"])
                if motion != state.motion:
                    state.motion = motion
                    state.vacancy_since = None if motion else now
            if "temperature" in values:
                self._base_temperature = float(values["temperature"])
            if "humidity" in values:
                state.humidity = values["humidity"]
            self._script_pos += 1
        drift = self.script.temperature_drift_per_s * (now // 1000)
        state.temperature = round(self._base_temperature + drift, 1)

    def _apply_local_rules(self, now: int) -> None:
        state = self.state
        if (
            not state.motion
            and state.appliance_on
            and state.vacancy_since is not None
            and now - state.vacancy_since >= self.vacancy_debounce_ms
        ):
            state.appliance_on = False
