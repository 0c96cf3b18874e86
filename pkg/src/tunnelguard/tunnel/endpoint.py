"""Tunnel endpoint state machine.

One ``TunnelEndpoint`` owns one tunnel end (initiator or responder) and
all sessions multiplexed over it.  It is single-owner and time-driven:
every call takes ``now`` (virtual milliseconds) and returns the frames
to put on the wire plus the events the application should see.  Nothing
inside touches wall clocks, threads, or sockets.

Control channel rules (datagram variant):

* every sequenced message is retransmitted on an exponential backoff
  schedule (rto, 2*rto, 4*rto, ...) until its ns is covered by a
  peer nr; after ``max_retransmits`` expiries the tunnel dies with
  reason "timeout";
* one sequenced message is in flight at a time, so wire ns values are
  non-decreasing and gapless per direction;
* duplicates are acknowledged again and dropped;
* a ZLB (empty control frame) acknowledges when no reply is pending.

The stream variant sends control messages length-prefixed over a
reliable stream instead, so it needs no sequencing or retransmission.
Data frames are never retransmitted in either variant.
"""

from __future__ import annotations

import enum
import random
import struct
from collections import deque
from dataclasses import dataclass, field

from . import crypto, wire
from .wire import ControlMessage, CtrlType, Frame, FrameKind


class Role(enum.Enum):
    LAC = "LAC"  # initiator
    LNS = "LNS"  # responder


class Variant(enum.Enum):
    L2TP_LITE = "L2TP_LITE"
    PPTP_LITE = "PPTP_LITE"


class Channel(enum.Enum):
    DATAGRAM = "datagram"
    STREAM = "stream"


class TunnelState(enum.Enum):
    IDLE = "IDLE"
    WAIT_REPLY = "WAIT_REPLY"
    ESTABLISHED = "ESTABLISHED"
    STOPPING = "STOPPING"
    CLOSED = "CLOSED"


class SessionPhase(enum.Enum):
    REQUESTED = "REQUESTED"
    ESTABLISHED = "ESTABLISHED"
    CLOSED = "CLOSED"


class TunnelError(Exception):
    pass


class TunnelNotEstablished(TunnelError):
    pass


class DuplicateSession(TunnelError):
    pass


class NoSuchSession(TunnelError):
    pass


class SessionClosed(TunnelError):
    pass


# ---------------------------------------------------------------- events

@dataclass(frozen=True)
class TunnelUp:
    tunnel_id: int


@dataclass(frozen=True)
class TunnelDown:
    reason: str


@dataclass(frozen=True)
class SessionUp:
    session_id: int


@dataclass(frozen=True)
class SessionDown:
    session_id: int
    reason: str


@dataclass(frozen=True)
class PayloadReceived:
    session_id: int
    payload: bytes


@dataclass(frozen=True)
class PayloadRejected:
    session_id: int
    reason: str  # "auth" | "replay" | "no_session"


@dataclass(frozen=True)
class DecodeErrorEvent:
    detail: str


@dataclass(frozen=True)
class SendDatagram:
    data: bytes


@dataclass(frozen=True)
class SendStream:
    data: bytes


@dataclass
class TunnelConfig:
    rto_ms: int = 1000
    max_retransmits: int = 5
    hello_interval_ms: int = 10_000
    mtu: int = wire.DEFAULT_MTU
    replay_window: int = crypto.REPLAY_WINDOW


@dataclass
class _Session:
    session_id: int
    initiator: bool
    phase: SessionPhase = SessionPhase.REQUESTED
    key: bytes = b""
    send_counter: int = 0
    recv_window: crypto.ReplayWindow = field(default_factory=crypto.ReplayWindow)


@dataclass
class _Pending:
    seq: int
    msg: ControlMessage
    session_id: int
    attempts: int = 0
    deadline: int = 0


_STREAM_LEN = struct.Struct(">H")


class TunnelEndpoint:
    """One tunnel end plus its sessions, driven entirely through step()."""

    def __init__(
        self,
        role: Role,
        variant: Variant,
        shared_secret: bytes,
        config: TunnelConfig | None = None,
        rng: random.Random | None = None,
    ):
        self.role = role
        self.variant = variant
        self.shared_secret = shared_secret
        self.config = config or TunnelConfig()
        self.rng = rng or random.Random()
        self.state = TunnelState.IDLE
        self.tunnel_id = 0
        if role is Role.LAC:
            self.tunnel_id = self.rng.randrange(1, wire.MAX_U32)
        self.local_nonce = bytes(self.rng.randrange(256) for _ in range(crypto.HANDSHAKE_NONCE_LEN))
        self.peer_nonce = b""
        self.sessions: dict[int, _Session] = {}
        self._displaced: dict[int, _Session] = {}

        # reliable-control state (datagram variant)
        self._ns_next = 0
        self._nr_expected = 0
        self._inflight: _Pending | None = None
        self._queue: deque[tuple[ControlMessage, int]] = deque()
        self._hello_deadline: int | None = None
        self._stream_buf = b""

        # observability counters
        self.decode_errors = 0
        self.auth_failures = 0
        self.replays = 0
        self.retransmissions = 0
        self.max_message_retransmits = 0

        self._out: list = []
        self._ctrl_sent_in_step = False

    # ------------------------------------------------------------ public

    @property
    def established(self) -> bool:
        return self.state is TunnelState.ESTABLISHED

    def session_phase(self, session_id: int) -> SessionPhase | None:
        sess = self.sessions.get(session_id)
        return sess.phase if sess else None

    def established_sessions(self) -> list[int]:
        return sorted(
            sid for sid, s in self.sessions.items() if s.phase is SessionPhase.ESTABLISHED
        )

    def start(self, now: int) -> list:
        """Initiator only: begin the tunnel handshake."""
        if self.role is not Role.LAC:
            raise TunnelError("only the initiator starts a tunnel")
        if self.state is not TunnelState.IDLE:
            raise TunnelError(f"cannot start from {self.state.value}")
        self._out = []
        self.state = TunnelState.WAIT_REPLY
        self._queue_ctrl(
            now,
            ControlMessage(
                CtrlType.SCCRQ,
                (
                    (wire.ATTR_NONCE, self.local_nonce),
                    (wire.ATTR_TUNNEL, self.tunnel_id.to_bytes(4, "big")),
                ),
            ),
        )
        return self._drain()

    def open_session(self, now: int, session_id: int) -> list:
        if self.state is not TunnelState.ESTABLISHED:
            raise TunnelNotEstablished(f"tunnel is {self.state.value}")
        existing = self.sessions.get(session_id)
        if existing and existing.phase is not SessionPhase.CLOSED:
            raise DuplicateSession(f"session {session_id} already open")
        self._out = []
        self.sessions[session_id] = _Session(session_id, initiator=True)
        self._queue_ctrl(now, ControlMessage(CtrlType.ICRQ), session_id=session_id)
        return self._drain()

    def send_payload(self, now: int, session_id: int, payload: bytes) -> list:
        if self.state is not TunnelState.ESTABLISHED:
            raise TunnelNotEstablished(f"tunnel is {self.state.value}")
        sess = self.sessions.get(session_id)
        if sess is None:
            raise NoSuchSession(f"session {session_id}")
        if sess.phase is not SessionPhase.ESTABLISHED:
            raise SessionClosed(f"session {session_id} is {sess.phase.value}")
        if len(payload) > self.config.mtu - crypto.ENVELOPE_OVERHEAD:
            raise wire.OversizePayload(
                f"payload {len(payload)} exceeds mtu {self.config.mtu} minus "
                f"{crypto.ENVELOPE_OVERHEAD} envelope bytes"
            )
        if sess.send_counter >= crypto.MAX_COUNTER:
            raise crypto.CounterExhausted(f"session {session_id}")
        self._out = []
        counter = sess.send_counter
        sess.send_counter += 1
        if self.variant is Variant.PPTP_LITE:
            header = wire.gre_header(session_id, counter, len(payload) + crypto.TAG_LEN)
            sealed = crypto.seal(sess.key, session_id, counter, payload, wire.gre_aad(header))
            self._out.append(SendDatagram(header + sealed[crypto.COUNTER_LEN:]))
        else:
            sealed_len = len(payload) + crypto.ENVELOPE_OVERHEAD
            header = wire.data_frame_header(self.tunnel_id, session_id, sealed_len)
            sealed = crypto.seal(sess.key, session_id, counter, payload, header)
            self._out.append(SendDatagram(header + sealed))
        return self._drain()

    def close_session(self, now: int, session_id: int) -> list:
        sess = self.sessions.get(session_id)
        if sess is None:
            raise NoSuchSession(f"session {session_id}")
        self._out = []
        if sess.phase is SessionPhase.CLOSED:
            return self._drain()  # closing twice is a no-op
        self._close_session(sess, "local_close")
        if self.state is TunnelState.ESTABLISHED:
            self._queue_ctrl(
                now,
                ControlMessage(CtrlType.CDN, ((wire.ATTR_RESULT, struct.pack(">H", wire.RESULT_GENERAL)),)),
                session_id=session_id,
            )
        return self._drain()

    def close(self, now: int, result: int = wire.RESULT_GENERAL) -> list:
        self._out = []
        if self.state in (TunnelState.CLOSED, TunnelState.STOPPING, TunnelState.IDLE):
            if self.state is TunnelState.IDLE:
                self.state = TunnelState.CLOSED
            return self._drain()
        for sess in self.sessions.values():
            if sess.phase is not SessionPhase.CLOSED:
                self._close_session(sess, "tunnel_close")
        self._out.append(TunnelDown("local_close"))
        self._queue.clear()  # STOPCCN supersedes anything not yet on the wire
        self._queue_ctrl(
            now,
            ControlMessage(CtrlType.STOPCCN, ((wire.ATTR_RESULT, struct.pack(">H", result)),)),
        )
        if self.variant is Variant.PPTP_LITE:
            self.state = TunnelState.CLOSED
        else:
            self.state = TunnelState.STOPPING
        return self._drain()

    def step(self, now: int, incoming: bytes | None = None,
             channel: Channel = Channel.DATAGRAM) -> list:
        """Feed one incoming unit (or None) and advance timers to ``now``."""
        self._out = []
        if incoming is not None:
            if channel is Channel.STREAM:
                self._on_stream(now, incoming)
            elif self.variant is Variant.PPTP_LITE:
                self._on_gre(now, incoming)
            else:
                self._on_datagram(now, incoming)
        self._run_timers(now)
        return self._drain()

    def next_deadline(self) -> int | None:
        deadlines = []
        if self._inflight is not None:
            deadlines.append(self._inflight.deadline)
        if self._hello_deadline is not None and self.state is TunnelState.ESTABLISHED:
            deadlines.append(self._hello_deadline)
        return min(deadlines) if deadlines else None

    # ------------------------------------------------- control transmission

    def _queue_ctrl(self, now: int, msg: ControlMessage, session_id: int = 0) -> None:
        if self.variant is Variant.PPTP_LITE:
            if session_id:
                # No frame header on the stream, so the subject session id
                # travels as a leading attribute instead.
                msg = ControlMessage(
                    msg.msg_type,
                    ((wire.ATTR_SESSION, session_id.to_bytes(4, "big")),) + msg.attributes,
                )
            body = wire.encode_control(msg)
            self._out.append(SendStream(_STREAM_LEN.pack(len(body)) + body))
            return
        self._queue.append((msg, session_id))
        if self._inflight is None:
            self._transmit_next(now)

    def _transmit_next(self, now: int) -> None:
        msg, session_id = self._queue.popleft()
        pending = _Pending(self._ns_next, msg, session_id)
        self._ns_next += 1
        pending.deadline = now + self.config.rto_ms
        self._inflight = pending
        self._emit_pending(pending)
        self._hello_deadline = now + self.config.hello_interval_ms

    def _emit_pending(self, pending: _Pending) -> None:
        frame = Frame(
            FrameKind.CONTROL, False, self.tunnel_id, pending.session_id,
            pending.seq, self._nr_expected, wire.encode_control(pending.msg),
        )
        self._out.append(SendDatagram(wire.encode_frame(frame, self.config.mtu)))
        self._ctrl_sent_in_step = True

    def _emit_zlb(self) -> None:
        frame = Frame(FrameKind.CONTROL, False, self.tunnel_id, 0,
                      self._ns_next, self._nr_expected, b"")
        self._out.append(SendDatagram(wire.encode_frame(frame, self.config.mtu)))

    def _run_timers(self, now: int) -> None:
        while (
            self.variant is Variant.L2TP_LITE
            and self._inflight is not None
            and self._inflight.deadline <= now
        ):
            pending = self._inflight
            pending.attempts += 1
            if pending.attempts >= self.config.max_retransmits:
                self._inflight = None
                self._queue.clear()
                self._fail(now, "timeout")
                return
            self.retransmissions += 1
            self.max_message_retransmits = max(self.max_message_retransmits, pending.attempts)
            pending.deadline = pending.deadline + self.config.rto_ms * (2 ** pending.attempts)
            self._emit_pending(pending)
            self._hello_deadline = now + self.config.hello_interval_ms
        while (
            self.state is TunnelState.ESTABLISHED
            and self._hello_deadline is not None
            and self._hello_deadline <= now
        ):
            if self.variant is Variant.PPTP_LITE:
                self._hello_deadline = now + self.config.hello_interval_ms
                self._queue_ctrl(now, ControlMessage(CtrlType.HELLO))
            elif self._inflight is None and not self._queue:
                self._queue_ctrl(now, ControlMessage(CtrlType.HELLO))
            else:
                self._hello_deadline = now + self.config.hello_interval_ms

    # -------------------------------------------------------- receive paths

    def _on_datagram(self, now: int, data: bytes) -> None:
        try:
            frame = wire.decode_frame(data)
        except wire.DecodeError as exc:
            self.decode_errors += 1
            self._out.append(DecodeErrorEvent(str(exc)))
            return
        if frame.kind is FrameKind.DATA:
            self._on_data_frame(frame, data)
            return
        # Ack bookkeeping first: any control frame carries a cumulative nr.
        if self._inflight is not None and self._inflight.seq < frame.nr:
            self._inflight = None
            if self._queue and self.state is not TunnelState.CLOSED:
                self._transmit_next(now)
            elif self.state is TunnelState.STOPPING:
                self.state = TunnelState.CLOSED  # STOPCCN acknowledged
        if not frame.payload:
            return  # ZLB: pure acknowledgment, not sequenced
        if frame.ns != self._nr_expected:
            if frame.ns < self._nr_expected:
                self._emit_zlb()  # duplicate: re-acknowledge and drop
            return
        self._nr_expected += 1
        try:
            msg = wire.decode_control(frame.payload)
        except wire.DecodeError as exc:
            self.decode_errors += 1
            self._out.append(DecodeErrorEvent(str(exc)))
            self._emit_zlb()
            return
        self._ctrl_sent_in_step = False
        self._process_ctrl(now, msg, frame)
        if not self._ctrl_sent_in_step:
            self._emit_zlb()

    def _on_stream(self, now: int, data: bytes) -> None:
        self._stream_buf += data
        while len(self._stream_buf) >= 2:
            (mlen,) = _STREAM_LEN.unpack_from(self._stream_buf)
            if len(self._stream_buf) < 2 + mlen:
                break
            body = self._stream_buf[2:2 + mlen]
            self._stream_buf = self._stream_buf[2 + mlen:]
            try:
                msg = wire.decode_control(body)
            except wire.DecodeError as exc:
                self.decode_errors += 1
                self._out.append(DecodeErrorEvent(str(exc)))
                continue
            self._process_ctrl(now, msg, None)

    def _on_gre(self, now: int, data: bytes) -> None:
        try:
            session_id, counter, ct_tag = wire.decode_gre(data)
        except wire.DecodeError as exc:
            self.decode_errors += 1
            self._out.append(DecodeErrorEvent(str(exc)))
            return
        sealed = counter.to_bytes(8, "big") + ct_tag
        self._open_payload(session_id, sealed, wire.gre_aad(data))

    def _on_data_frame(self, frame: Frame, raw: bytes) -> None:
        self._open_payload(frame.session_id, frame.payload, raw[: wire.HEADER_LEN])

    def _open_payload(self, session_id: int, sealed: bytes, aad: bytes) -> None:
        sess = self.sessions.get(session_id)
        if sess is None or sess.phase is not SessionPhase.ESTABLISHED:
            self._out.append(PayloadRejected(session_id, "no_session"))
            return
        if len(sealed) >= crypto.COUNTER_LEN:
            counter = int.from_bytes(sealed[: crypto.COUNTER_LEN], "big")
            try:
                sess.recv_window.check(counter)
            except crypto.ReplayedCounter:
                self.replays += 1
                self._out.append(PayloadRejected(session_id, "replay"))
                return
        try:
            counter, plaintext = crypto.open_sealed(sess.key, session_id, sealed, aad)
        except crypto.AuthFailure:
            self.auth_failures += 1
            self._out.append(PayloadRejected(session_id, "auth"))
            return
        sess.recv_window.mark(counter)
        self._out.append(PayloadReceived(session_id, plaintext))

    # ------------------------------------------------------ control handling

    def _process_ctrl(self, now: int, msg: ControlMessage, frame: Frame | None) -> None:
        session_id = frame.session_id if frame is not None else 0
        mtype = msg.msg_type
        if mtype is CtrlType.SCCRQ:
            self._on_sccrq(now, msg, frame)
        elif mtype is CtrlType.SCCRP:
            self._on_sccrp(now, msg)
        elif mtype is CtrlType.SCCCN:
            self._on_scccn(now)
        elif mtype is CtrlType.STOPCCN:
            self._on_stopccn(msg)
        elif mtype is CtrlType.HELLO:
            pass  # acknowledged by the sequencing layer alone
        elif mtype is CtrlType.ICRQ:
            self._on_icrq(now, msg, self._msg_session_id(msg, session_id))
        elif mtype is CtrlType.ICRP:
            self._on_icrp(now, msg, self._msg_session_id(msg, session_id))
        elif mtype is CtrlType.ICCN:
            self._on_iccn(now, self._msg_session_id(msg, session_id))
        elif mtype is CtrlType.CDN:
            self._on_cdn(self._msg_session_id(msg, session_id))

    @staticmethod
    def _msg_session_id(msg: ControlMessage, frame_sid: int) -> int:
        if frame_sid:
            return frame_sid
        carried = msg.get(wire.ATTR_SESSION)
        if carried and len(carried[0]) == 4:
            return int.from_bytes(carried[0], "big")
        return 0

    def _on_sccrq(self, now: int, msg: ControlMessage, frame: Frame | None) -> None:
        if self.role is not Role.LNS or self.state is not TunnelState.IDLE:
            return  # duplicate or misdirected open, sequencing already acked it
        nonces = msg.get(wire.ATTR_NONCE)
        if len(nonces) != 1 or len(nonces[0]) != crypto.HANDSHAKE_NONCE_LEN:
            self._reject(now, "handshake_rejected")
            return
        self.peer_nonce = nonces[0]
        carried = msg.get(wire.ATTR_TUNNEL)
        if carried and len(carried[0]) == 4:
            self.tunnel_id = int.from_bytes(carried[0], "big")
        elif frame is not None:
            self.tunnel_id = frame.tunnel_id
        self.state = TunnelState.WAIT_REPLY
        self._queue_ctrl(
            now, ControlMessage(CtrlType.SCCRP, ((wire.ATTR_NONCE, self.local_nonce),))
        )

    def _on_sccrp(self, now: int, msg: ControlMessage) -> None:
        if self.role is not Role.LAC or self.state is not TunnelState.WAIT_REPLY:
            return
        nonces = msg.get(wire.ATTR_NONCE)
        if len(nonces) != 1 or len(nonces[0]) != crypto.HANDSHAKE_NONCE_LEN:
            self._reject(now, "handshake_rejected")
            return
        self.peer_nonce = nonces[0]
        self.state = TunnelState.ESTABLISHED
        self._hello_deadline = now + self.config.hello_interval_ms
        self._queue_ctrl(now, ControlMessage(CtrlType.SCCCN))
        self._out.append(TunnelUp(self.tunnel_id))

    def _on_scccn(self, now: int) -> None:
        if self.role is not Role.LNS or self.state is not TunnelState.WAIT_REPLY:
            return
        self.state = TunnelState.ESTABLISHED
        self._hello_deadline = now + self.config.hello_interval_ms
        self._out.append(TunnelUp(self.tunnel_id))

    def _on_stopccn(self, msg: ControlMessage) -> None:
        if self.state is TunnelState.CLOSED:
            return
        results = msg.get(wire.ATTR_RESULT)
        code = int.from_bytes(results[0], "big") if results and len(results[0]) == 2 else 0
        reason = "handshake_rejected" if code == wire.RESULT_REJECTED else "stopped_by_peer"
        for sess in self.sessions.values():
            if sess.phase is not SessionPhase.CLOSED:
                self._close_session(sess, reason)
        if self.state is not TunnelState.STOPPING:
            self._out.append(TunnelDown(reason))
        self.state = TunnelState.CLOSED
        self._inflight = None
        self._queue.clear()

    def _on_icrq(self, now: int, msg: ControlMessage, session_id: int) -> None:
        if self.state is not TunnelState.ESTABLISHED or session_id == 0:
            return
        existing = self.sessions.get(session_id)
        if existing is not None and existing.phase is not SessionPhase.CLOSED:
            if existing.initiator and existing.phase is SessionPhase.REQUESTED:
                # Crossed requests for the same id. The responder's claim wins:
                # it redirects the peer to a fresh id; the initiator yields and
                # lets the redirect for its own request arrive via ICRP.
                if self.role is Role.LNS:
                    alt = self._fresh_session_id()
                    self._queue_ctrl(
                        now,
                        ControlMessage(
                            CtrlType.ICRP,
                            ((wire.ATTR_ALT_SESSION, alt.to_bytes(4, "big")),),
                        ),
                        session_id=session_id,
                    )
                    return
                self._displaced[session_id] = existing
            else:
                self._queue_ctrl(
                    now,
                    ControlMessage(
                        CtrlType.CDN,
                        ((wire.ATTR_RESULT, struct.pack(">H", wire.RESULT_COLLISION)),),
                    ),
                    session_id=session_id,
                )
                return
        self.sessions[session_id] = _Session(session_id, initiator=False)
        self._queue_ctrl(now, ControlMessage(CtrlType.ICRP), session_id=session_id)

    def _on_icrp(self, now: int, msg: ControlMessage, session_id: int) -> None:
        displaced = False
        sess = self.sessions.get(session_id)
        if sess is None or not sess.initiator or sess.phase is not SessionPhase.REQUESTED:
            sess = self._displaced.pop(session_id, None)
            displaced = True
            if sess is None:
                return
        alts = msg.get(wire.ATTR_ALT_SESSION)
        if alts and len(alts[0]) == 4:
            if not displaced:
                del self.sessions[session_id]
            alt = int.from_bytes(alts[0], "big")
            self.sessions[alt] = _Session(alt, initiator=True)
            self._queue_ctrl(now, ControlMessage(CtrlType.ICRQ), session_id=alt)
            return
        if displaced:
            return  # displaced request can only continue via a redirect
        sess.key = self._derive_key(session_id)
        sess.phase = SessionPhase.ESTABLISHED
        self._queue_ctrl(now, ControlMessage(CtrlType.ICCN), session_id=session_id)
        self._out.append(SessionUp(session_id))

    def _on_iccn(self, now: int, session_id: int) -> None:
        sess = self.sessions.get(session_id)
        if sess is None or sess.initiator or sess.phase is not SessionPhase.REQUESTED:
            return
        sess.key = self._derive_key(session_id)
        sess.phase = SessionPhase.ESTABLISHED
        self._out.append(SessionUp(session_id))

    def _on_cdn(self, session_id: int) -> None:
        sess = self.sessions.get(session_id)
        if sess is None or sess.phase is SessionPhase.CLOSED:
            return
        self._close_session(sess, "closed_by_peer")

    # ------------------------------------------------------------- internals

    def _derive_key(self, session_id: int) -> bytes:
        if self.role is Role.LAC:
            initiator_nonce, responder_nonce = self.local_nonce, self.peer_nonce
        else:
            initiator_nonce, responder_nonce = self.peer_nonce, self.local_nonce
        return crypto.derive_session_key(
            self.shared_secret, self.tunnel_id, session_id, initiator_nonce, responder_nonce
        )

    def _fresh_session_id(self) -> int:
        sid = 1
        while sid in self.sessions or sid in self._displaced:
            sid += 1
        return sid

    def _close_session(self, sess: _Session, reason: str) -> None:
        sess.phase = SessionPhase.CLOSED
        sess.key = b""  # erase key material on close
        self._out.append(SessionDown(sess.session_id, reason))

    def _reject(self, now: int, reason: str) -> None:
        self._out.append(TunnelDown(reason))
        for sess in self.sessions.values():
            if sess.phase is not SessionPhase.CLOSED:
                self._close_session(sess, reason)
        self._queue.clear()
        self._inflight = None
        self._queue_ctrl(
            now,
            ControlMessage(CtrlType.STOPCCN, ((wire.ATTR_RESULT, struct.pack(">H", wire.RESULT_REJECTED)),)),
        )
        if self.variant is Variant.PPTP_LITE:
            self.state = TunnelState.CLOSED
        else:
            self.state = TunnelState.STOPPING

    def _fail(self, now: int, reason: str) -> None:
        if self.state is TunnelState.CLOSED:
            return
        stopping = self.state is TunnelState.STOPPING
        self.state = TunnelState.CLOSED
        for sess in self.sessions.values():
            if sess.phase is not SessionPhase.CLOSED:
                self._close_session(sess, reason)
        if not stopping:
            self._out.append(TunnelDown(reason))

    def _drain(self) -> list:
        out, self._out = self._out, []
        return out
