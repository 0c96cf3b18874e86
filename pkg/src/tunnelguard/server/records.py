"""Telemetry line parsing and the persisted record shape.

Accepted grammar (ASCII, newline-free):

    room_id "-" motion "," appliance "," servo "," temp ["," humidity]

room_id   decimal, fits in 32 bits unsigned
motion    single flag, 0 or 1
appliance single flag, 0 or 1
servo     decimal 0..180
temp      decimal with exactly one fraction digit, optional leading minus
humidity  decimal 0..100, optional fifth field

The parser is total: any byte string either yields a record or raises
MalformedLine / RangeViolation carrying the offset of the offending
byte, so a hostile or bit-flipped line can be logged and counted
without taking the ingest path down.
"""

from __future__ import annotations

from dataclasses import dataclass

_MAX_ROOM = 0xFFFFFFFF
_MAX_SERVO = 180
_MAX_HUMIDITY = 100


class TelemetryParseError(ValueError):
    """Base for line rejections; `position` is a byte offset into the line."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at byte {position})")
        self.position = position


class MalformedLine(TelemetryParseError):
    pass


class RangeViolation(TelemetryParseError):
    def __init__(self, field: str, value: int, position: int) -> None:
        super().__init__(f"{field} out of range: {value}", position)
        self.field = field
        self.value = value


@dataclass(frozen=True)
class TelemetryRecord:
    received_at: int
    room_id: int
    motion: bool
    appliance_on: bool
    servo_angle: int
    temperature: float
    humidity: int | None
    raw: bytes


class _Scanner:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.text)

    def expect(self, ch: str) -> None:
        if self.done() or self.text[self.pos] != ch:
            raise MalformedLine(f"expected {ch!r}", self.pos)
        self.pos += 1

    def digits(self, what: str) -> tuple[int, int]:
        start = self.pos
        while not self.done() and self.text[self.pos].isascii() and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start:
            raise MalformedLine(f"expected digits for {what}", start)
        return int(self.text[start : self.pos]), start

    def flag(self, what: str) -> bool:
        if self.done() or self.text[self.pos] not in "01":
            raise MalformedLine(f"{what} flag must be 0 or 1", self.pos)
        value = self.text[self.pos] == "1"
        self.pos += 1
        return value


def parse_log_line(line: bytes | str, received_at: int = 0) -> TelemetryRecord:
    raw = line.encode("ascii") if isinstance(line, str) else bytes(line)
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedLine("non-ASCII byte", exc.start) from None
    if "\n" in text or "\r" in text:
        raise MalformedLine("line break inside line", text.replace("\r", "\n").index("\n"))

    scan = _Scanner(text)
    room_id, room_pos = scan.digits("room id")
    if room_id > _MAX_ROOM:
        raise RangeViolation("room_id", room_id, room_pos)
    scan.expect("-")
    motion = scan.flag("motion")
    scan.expect(",")
    appliance = scan.flag("appliance")
    scan.expect(",")
    servo, servo_pos = scan.digits("servo angle")
    if servo > _MAX_SERVO:
        raise RangeViolation("servo_angle", servo, servo_pos)
    scan.expect(",")

    temp_start = scan.pos
    negative = not scan.done() and scan.text[scan.pos] == "-"
    if negative:
        scan.pos += 1
    whole, _ = scan.digits("temperature")
    scan.expect(".")
    frac_pos = scan.pos
    frac, _ = scan.digits("temperature fraction")
    if scan.pos - frac_pos != 1:
        raise MalformedLine("temperature needs exactly one fraction digit", frac_pos)
    temperature = float(text[temp_start : scan.pos])

    humidity: int | None = None
    if not scan.done():
        scan.expect(",")
        humidity, hum_pos = scan.digits("humidity")
        if humidity > _MAX_HUMIDITY:
            raise RangeViolation("humidity", humidity, hum_pos)
    if not scan.done():
        raise MalformedLine("trailing bytes after last field", scan.pos)

    return TelemetryRecord(
        received_at=received_at,
        room_id=room_id,
        motion=motion,
        appliance_on=appliance,
        servo_angle=servo,
        temperature=temperature,
        humidity=humidity,
        raw=raw,
    )
