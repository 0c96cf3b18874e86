"""The estate-management brain.

One ControlCore instance owns the room registry, the append-only
telemetry store, the rule engine, and every pending command.  It is
deliberately single-threaded: callers (tunnel events, HTTP handlers,
timers) are expected to funnel through one executor, so nothing in here
locks.  All time is integer virtual milliseconds supplied by the
caller; the core never reads a clock.

Rules implemented here:

* fire alarm    - strict temperature > threshold, one alarm per
                  continuous exceedance episode (re-armed once the room
                  reports a temperature back at or below threshold);
                  the alarm also dispatches BUZZER_ON to the room.
* end of day    - when the virtual time-of-day crosses `end_of_day`,
                  sweep every registered room: vacant rooms get LOCK,
                  occupied rooms are reported, unreachable or unheard
                  rooms land in the failed list.
* lock refusal  - REFUSED_OCCUPIED results surface as LOCK_REFUSED
                  alarm events (security should go look).

Commands ride the unreliable data channel, so each send gets
`command_timeout` to produce a matching result and exactly one retry
with the same request id before the caller sees Timeout.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from ..devices import Command, CommandResult, CommandStatus, Opcode, encode_command
from .records import MalformedLine, RangeViolation, TelemetryRecord, parse_log_line

AUDIT = "audit"
ALARM = "alarm"
INFO = "info"

_DAY_MS = 86_400_000


class ControlError(Exception):
    pass


class UnknownRoom(ControlError):
    def __init__(self, room_id: int) -> None:
        super().__init__(f"room {room_id} is not registered")
        self.room_id = room_id


class DuplicateRoom(ControlError):
    def __init__(self, detail: str) -> None:
        super().__init__(detail)


class NoDataYet(ControlError):
    def __init__(self, room_id: int) -> None:
        super().__init__(f"room {room_id} has not reported yet")
        self.room_id = room_id


class SessionDown(ControlError):
    def __init__(self, room_id: int) -> None:
        super().__init__(f"no usable session for room {room_id}")
        self.room_id = room_id


@dataclass(frozen=True)
class RegistryEntry:
    """Where a room lives: which tunnel peer, which session, and the
    forwarded port its device listens on behind the secure router."""

    room_id: int
    node: str
    port: int
    session_id: int
    device_port: int


@dataclass(frozen=True)
class RuleConfig:
    fire_threshold: float = 50.0
    end_of_day: str = "18:00:00"
    vacancy_debounce_s: int = 30
    command_timeout_ms: int = 2000
    command_retries: int = 1

    def end_of_day_seconds(self) -> int:
        parts = self.end_of_day.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad time of day: {self.end_of_day!r}")
        h, m, s = (int(p) for p in parts)
        if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
            raise ValueError(f"bad time of day: {self.end_of_day!r}")
        return h * 3600 + m * 60 + s


@dataclass(frozen=True)
class ServerEvent:
    seq: int
    t: int
    category: str
    kind: str
    room_id: int | None
    detail: str

    def to_line(self) -> str:
        room = "-" if self.room_id is None else str(self.room_id)
        return f"{self.t} {self.seq} {self.category} {self.kind} {room} {self.detail}"

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "t": self.t,
            "category": self.category,
            "kind": self.kind,
            "room_id": self.room_id,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class StatusView:
    room_id: int
    locked: bool
    appliance_on: bool
    occupied: bool
    temperature: float
    humidity: int | None
    last_seen: int
    staleness_ms: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SweepReport:
    started_at: int
    reason: str
    locked: list[int] = field(default_factory=list)
    notified: list[int] = field(default_factory=list)
    failed: list[dict] = field(default_factory=list)
    finished_at: int | None = None

    def to_dict(self) -> dict:
        return {
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "reason": self.reason,
            "locked": sorted(self.locked),
            "notified": sorted(self.notified),
            "failed": sorted(self.failed, key=lambda f: f["room_id"]),
        }


@dataclass
class _PendingCommand:
    request_id: int
    room_id: int
    opcode: int
    payload: bytes
    deadline: int
    attempts_left: int
    origin: str
    on_done: Callable[[int, CommandResult | None], None] | None


# transport callback: (now, entry, command bytes) -> True if handed to a live
# session, False if the room's channel is unusable right now
Transport = Callable[[int, RegistryEntry, bytes], bool]


class ControlCore:
    def __init__(self, rules: RuleConfig | None = None, day_start_s: int = 0) -> None:
        self.rules = rules or RuleConfig()
        self.day_start_s = day_start_s
        self.registry: dict[int, RegistryEntry] = {}
        self._by_session: dict[int, int] = {}
        self.records: list[TelemetryRecord] = []
        self.latest: dict[int, TelemetryRecord] = {}
        self.events: list[ServerEvent] = []
        self._event_seq = 0
        self.counters: Counter = Counter()
        self._fire_armed: dict[int, bool] = {}
        self._pending: dict[int, _PendingCommand] = {}
        self.sent_commands: list[bytes] = []
        self._next_request_id = 1
        self._send: Transport | None = None
        self.sweeps: list[SweepReport] = []
        self._active_sweep: SweepReport | None = None
        self._sweep_outstanding = 0
        self._sweep_waiters: list[Callable[[SweepReport], None]] = []
        self._end_of_day_done = False

    # ------------------------------------------------------------------
    # wiring
    # ------------------------------------------------------------------
    def set_transport(self, send: Transport) -> None:
        self._send = send

    def end_of_day_crossing_ms(self) -> int | None:
        """Virtual ms at which the end-of-day rule should fire, or None
        if the run starts at or after that time of day."""
        delta = self.rules.end_of_day_seconds() - self.day_start_s
        return delta * 1000 if delta > 0 else None

    # ------------------------------------------------------------------
    # events
    # ------------------------------------------------------------------
    def _emit(self, t: int, category: str, kind: str, room_id: int | None, detail: str) -> ServerEvent:
        self._event_seq += 1
        event = ServerEvent(self._event_seq, t, category, kind, room_id, detail)
        self.events.append(event)
        return event

    def events_since(self, seq: int) -> list[ServerEvent]:
        if seq <= 0:
            return list(self.events)
        return [e for e in self.events if e.seq > seq]

    def last_event_seq(self) -> int:
        return self._event_seq

    # ------------------------------------------------------------------
    # registry CRUD
    # ------------------------------------------------------------------
    def add_room(self, now: int, entry: RegistryEntry) -> None:
        if entry.room_id in self.registry:
            raise DuplicateRoom(f"room {entry.room_id} already registered")
        if entry.session_id in self._by_session:
            raise DuplicateRoom(f"session {entry.session_id} already mapped")
        self.registry[entry.room_id] = entry
        self._by_session[entry.session_id] = entry.room_id
        self._fire_armed.setdefault(entry.room_id, True)
        self._emit(now, AUDIT, "ROOM_ADDED", entry.room_id,
                   f"node={entry.node} session={entry.session_id} device_port={entry.device_port}")

    def update_room(self, now: int, room_id: int, **fields) -> RegistryEntry:
        entry = self.registry.get(room_id)
        if entry is None:
            raise UnknownRoom(room_id)
        updated = replace(entry, **fields)
        if updated.room_id != room_id:
            raise ControlError("room_id cannot be changed in place")
        if updated.session_id != entry.session_id and updated.session_id in self._by_session:
            raise DuplicateRoom(f"session {updated.session_id} already mapped")
        del self._by_session[entry.session_id]
        self.registry[room_id] = updated
        self._by_session[updated.session_id] = room_id
        self._emit(now, AUDIT, "ROOM_UPDATED", room_id,
                   f"node={updated.node} session={updated.session_id} device_port={updated.device_port}")
        return updated

    def delete_room(self, now: int, room_id: int) -> None:
        entry = self.registry.pop(room_id, None)
        if entry is None:
            raise UnknownRoom(room_id)
        del self._by_session[entry.session_id]
        self._emit(now, AUDIT, "ROOM_DELETED", room_id, "")

    def list_rooms(self) -> list[RegistryEntry]:
        return [self.registry[k] for k in sorted(self.registry)]

    # ------------------------------------------------------------------
    # ingest
    # ------------------------------------------------------------------
    def ingest_session(self, now: int, session_id: int, payload: bytes) -> None:
        """Telemetry arriving over an established tunnel session."""
        if session_id not in self._by_session:
            self.counters["unmapped_session"] += 1
            return
        self._ingest_line(now, payload, tampered=False)

    def ingest_raw(self, now: int, payload: bytes, tampered: bool = False) -> None:
        """Telemetry arriving as a bare plaintext datagram (no tunnel)."""
        self._ingest_line(now, payload, tampered=tampered)

    def _ingest_line(self, now: int, payload: bytes, tampered: bool) -> None:
        try:
            record = parse_log_line(payload, received_at=now)
        except RangeViolation:
            self.counters["range_violations"] += 1
            return
        except MalformedLine:
            self.counters["malformed_lines"] += 1
            return
        if record.room_id not in self.registry:
            self.counters["unknown_room_lines"] += 1
            return
        self.records.append(record)
        self.latest[record.room_id] = record
        self.counters["lines_persisted"] += 1
        if tampered:
            self.counters["tampered_lines_accepted"] += 1
        self._evaluate_rules(now, record)

    def _evaluate_rules(self, now: int, record: TelemetryRecord) -> None:
        room = record.room_id
        armed = self._fire_armed.get(room, True)
        if record.temperature > self.rules.fire_threshold:
            if armed:
                self._fire_armed[room] = False
                self._emit(now, ALARM, "FIRE_ALARM", room,
                           f"temperature={record.temperature:.1f} threshold={self.rules.fire_threshold:.1f}")
                try:
                    self.send_command(now, room, Opcode.BUZZER_ON, origin="rule")
                except ControlError:
                    self.counters["alarm_dispatch_failed"] += 1
        else:
            self._fire_armed[room] = True

    # ------------------------------------------------------------------
    # status
    # ------------------------------------------------------------------
    def get_status(self, now: int, room_id: int) -> StatusView:
        if room_id not in self.registry:
            raise UnknownRoom(room_id)
        record = self.latest.get(room_id)
        if record is None:
            raise NoDataYet(room_id)
        return StatusView(
            room_id=room_id,
            locked=record.servo_angle == 90,
            appliance_on=record.appliance_on,
            occupied=record.motion,
            temperature=record.temperature,
            humidity=record.humidity,
            last_seen=record.received_at,
            staleness_ms=now - record.received_at,
        )

    # ------------------------------------------------------------------
    # commands
    # ------------------------------------------------------------------
    def send_command(
        self,
        now: int,
        room_id: int,
        opcode: int,
        origin: str = "api",
        on_done: Callable[[int, CommandResult | None], None] | None = None,
    ) -> int:
        entry = self.registry.get(room_id)
        if entry is None:
            raise UnknownRoom(room_id)
        if self._send is None:
            raise SessionDown(room_id)
        request_id = self._next_request_id
        self._next_request_id += 1
        payload = encode_command(Command(int(opcode), request_id))
        pending = _PendingCommand(
            request_id=request_id,
            room_id=room_id,
            opcode=int(opcode),
            payload=payload,
            deadline=now + self.rules.command_timeout_ms,
            attempts_left=self.rules.command_retries,
            origin=origin,
            on_done=on_done,
        )
        if not self._send(now, entry, payload):
            raise SessionDown(room_id)
        self.sent_commands.append(payload)
        self._pending[request_id] = pending
        category = AUDIT if origin in ("api", "admin") else INFO
        self._emit(now, category, "COMMAND_SENT", room_id,
                   f"opcode={Opcode.name_of(opcode)} request_id={request_id} origin={origin}")
        return request_id

    def handle_result(self, now: int, result: CommandResult, tampered: bool = False) -> None:
        pending = self._pending.pop(result.request_id, None)
        if pending is None:
            self.counters["stray_results"] += 1
            return
        if tampered:
            self.counters["tampered_results_accepted"] += 1
        status = CommandStatus(result.status)
        if status is CommandStatus.REFUSED_OCCUPIED:
            self._emit(now, ALARM, "LOCK_REFUSED", pending.room_id,
                       f"request_id={result.request_id}")
        self._emit(now, INFO, "COMMAND_RESULT", pending.room_id,
                   f"request_id={result.request_id} status={status.name}")
        if pending.on_done is not None:
            pending.on_done(now, result)

    # ------------------------------------------------------------------
    # timers
    # ------------------------------------------------------------------
    def next_deadline(self) -> int | None:
        if not self._pending:
            return None
        return min(p.deadline for p in self._pending.values())

    def on_timer(self, now: int) -> None:
        """Resend or expire pending commands whose deadline has passed."""
        for request_id in sorted(self._pending):
            pending = self._pending.get(request_id)
            if pending is None or pending.deadline > now:
                continue
            if pending.attempts_left > 0 and self._send is not None:
                entry = self.registry.get(pending.room_id)
                if entry is not None and self._send(now, entry, pending.payload):
                    pending.attempts_left -= 1
                    pending.deadline = now + self.rules.command_timeout_ms
                    self.counters["command_retries"] += 1
                    continue
            del self._pending[request_id]
            self.counters["command_timeouts"] += 1
            self._emit(now, INFO, "COMMAND_TIMEOUT", pending.room_id,
                       f"request_id={request_id} opcode={Opcode.name_of(pending.opcode)}")
            if pending.on_done is not None:
                pending.on_done(now, None)

    # ------------------------------------------------------------------
    # end-of-day sweep
    # ------------------------------------------------------------------
    def start_sweep(
        self,
        now: int,
        reason: str = "manual",
        on_finished: Callable[[SweepReport], None] | None = None,
    ) -> SweepReport:
        if self._active_sweep is not None:
            raise ControlError("a sweep is already running")
        report = SweepReport(started_at=now, reason=reason)
        self._active_sweep = report
        self._sweep_outstanding = 0
        if on_finished is not None:
            self._sweep_waiters.append(on_finished)
        self._emit(now, AUDIT, "SWEEP_STARTED", None, f"reason={reason}")
        for room_id in sorted(self.registry):
            record = self.latest.get(room_id)
            if record is None:
                report.failed.append({"room_id": room_id, "reason": "no_data"})
            elif record.motion:
                report.notified.append(room_id)
                self._emit(now, ALARM, "OCCUPIED_AFTER_HOURS", room_id, "latest record shows motion")
            else:
                try:
                    self.send_command(now, room_id, Opcode.LOCK, origin="sweep",
                                      on_done=self._sweep_lock_done(room_id))
                    self._sweep_outstanding += 1
                except ControlError:
                    report.failed.append({"room_id": room_id, "reason": "session_down"})
        if self._sweep_outstanding == 0:
            self._finish_sweep(now)
        return report

    def _sweep_lock_done(self, room_id: int):
        def done(now: int, result: CommandResult | None) -> None:
            report = self._active_sweep
            if report is None:
                return
            if result is None:
                report.failed.append({"room_id": room_id, "reason": "timeout"})
            elif result.status == CommandStatus.REFUSED_OCCUPIED:
                report.notified.append(room_id)
                self._emit(now, ALARM, "OCCUPIED_AFTER_HOURS", room_id,
                           "lock refused: room became occupied")
            elif result.status == CommandStatus.OK:
                report.locked.append(room_id)
            else:
                report.failed.append({"room_id": room_id, "reason": f"status_{result.status}"})
            self._sweep_outstanding -= 1
            if self._sweep_outstanding == 0:
                self._finish_sweep(now)
        return done

    def _finish_sweep(self, now: int) -> None:
        report = self._active_sweep
        if report is None:
            return
        report.finished_at = now
        self._active_sweep = None
        self.sweeps.append(report)
        self._emit(now, INFO, "SWEEP_FINISHED", None,
                   f"locked={len(report.locked)} notified={len(report.notified)} failed={len(report.failed)}")
        waiters, self._sweep_waiters = self._sweep_waiters, []
        for waiter in waiters:
            waiter(report)

    def on_end_of_day(self, now: int) -> None:
        if self._end_of_day_done:
            return
        self._end_of_day_done = True
        try:
            self.start_sweep(now, reason="end_of_day")
        except ControlError:
            self.counters["sweep_skipped_busy"] += 1

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------
    def telemetry_log_lines(self) -> list[str]:
        return [f"{r.received_at} {r.raw.decode('ascii')}" for r in self.records]

    def event_log_lines(self) -> list[str]:
        return [e.to_line() for e in self.events]


def replay_telemetry_log(
    lines: Iterable[str],
    registry: Iterable[RegistryEntry],
    rules: RuleConfig | None = None,
) -> ControlCore:
    """Rebuild a store from a persisted telemetry log.  Rules and
    transports stay cold: replay reconstructs state, it does not re-run
    side effects."""
    core = ControlCore(rules=rules)
    for entry in registry:
        core.registry[entry.room_id] = entry
        core._by_session[entry.session_id] = entry.room_id
    for line in lines:
        line = line.strip()
        if not line:
            continue
        stamp, _, raw = line.partition(" ")
        record = parse_log_line(raw, received_at=int(stamp))
        core.records.append(record)
        core.latest[record.room_id] = record
        core.counters["lines_persisted"] += 1
    return core
