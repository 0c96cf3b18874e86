"""Wire codecs for tunnel frames and control messages.

Common frame header, 15 bytes, all integers big-endian::

     0                   1
     0 1 2 3 4 5 6 7 8 9 0 1 2 3 4
    +-+-+-+-+-+-+-+-+---------------+
    |T|S|E|r|  ver  |    length     |
    +-+-+-+-+-+-+-+-+---------------+
    |           tunnel_id           |
    +-------------------------------+
    |          session_id           |
    +-------------------------------+
    |      ns       |      nr       |
    +---------------+---------------+

    T    1 = control frame, 0 = data frame
    S    sequencing present, always 1 in version 2
    E    payload is sealed (data frames only)
    r    reserved, must be 0
    ver  protocol version, always 2

``length`` counts the whole frame including the header.  ``ns``/``nr``
are the control send/expected sequence numbers; data frames carry both
as zero because their ordering lives in the sealed payload counter.

Control payload::

    msg_type (u16) || attribute*
    attribute = attr_id (u16) || value_len (u16) || value

GRE-style data header used by the stream-controlled variant, 18 bytes::

    magic 0x3001 (u16) || proto 0x880B (u16) || payload_len (u16)
    || session_id (u32) || counter (u64) || ciphertext+tag

Decoders are total: any byte string either decodes or raises a
``DecodeError`` subclass, never anything else.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

HEADER_LEN = 15
GRE_HEADER_LEN = 18
DEFAULT_MTU = 1400
PROTOCOL_VERSION = 2

_FLAG_CONTROL = 0x80
_FLAG_SEQ = 0x40
_FLAG_SEALED = 0x20
_FLAG_RESERVED = 0x10

_HDR = struct.Struct(">BHIIHH")
_GRE_HDR = struct.Struct(">HHHIQ")

GRE_MAGIC = 0x3001
GRE_PROTO = 0x880B

MAX_U16 = 0xFFFF
MAX_U32 = 0xFFFFFFFF


class DecodeError(ValueError):
    """Base for every malformed-input error raised by the decoders."""


class Truncated(DecodeError):
    """Fewer bytes than the header or the declared length requires."""


class BadVersion(DecodeError):
    """Version nibble is not the supported protocol version."""


class LengthMismatch(DecodeError):
    """Declared length disagrees with the bytes actually present."""


class InvalidFlags(DecodeError):
    """Flag combination outside the protocol (S=0, E on control, reserved set)."""


class UnknownMessageType(DecodeError):
    """Control message type outside the closed message set."""


class OversizePayload(ValueError):
    """Payload exceeds the negotiated MTU; frames are never fragmented."""


class FrameKind(enum.Enum):
    CONTROL = "control"
    DATA = "data"


class CtrlType(enum.IntEnum):
    SCCRQ = 1    # tunnel open request
    SCCRP = 2    # tunnel open reply
    SCCCN = 3    # tunnel open confirm
    STOPCCN = 4  # tunnel stop
    HELLO = 6    # keepalive
    ICRQ = 10    # session open request
    ICRP = 11    # session open reply
    ICCN = 12    # session open confirm
    CDN = 14     # session close


_CTRL_TYPES = {int(t) for t in CtrlType}

# Attribute ids carried inside control messages.
ATTR_NONCE = 1        # 16-byte handshake nonce (SCCRQ/SCCRP, exactly one)
ATTR_RESULT = 2       # u16 result code (STOPCCN/CDN)
ATTR_ALT_SESSION = 3  # u32 alternate session id proposal (collision handling)
ATTR_SESSION = 4      # u32 subject session id (stream control, no frame header)
ATTR_TUNNEL = 5       # u32 initiator-assigned tunnel id (SCCRQ); keying input
                      # that stream-carried control has no frame header to supply

RESULT_GENERAL = 1
RESULT_REJECTED = 2
RESULT_COLLISION = 3


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    encrypted: bool
    tunnel_id: int
    session_id: int
    ns: int
    nr: int
    payload: bytes = b""

    def __post_init__(self):
        if self.encrypted and self.kind is not FrameKind.DATA:
            raise ValueError("only data frames carry sealed payloads")
        for name, value, limit in (
            ("tunnel_id", self.tunnel_id, MAX_U32),
            ("session_id", self.session_id, MAX_U32),
            ("ns", self.ns, MAX_U16),
            ("nr", self.nr, MAX_U16),
        ):
            if not 0 <= value <= limit:
                raise ValueError(f"{name} out of range: {value}")


def encode_frame(frame: Frame, mtu: int = DEFAULT_MTU) -> bytes:
    """Serialize a frame. Rejects payloads above the MTU instead of fragmenting."""
    if len(frame.payload) > mtu:
        raise OversizePayload(f"payload {len(frame.payload)} exceeds mtu {mtu}")
    flags = _FLAG_SEQ | PROTOCOL_VERSION
    if frame.kind is FrameKind.CONTROL:
        flags |= _FLAG_CONTROL
    if frame.encrypted:
        flags |= _FLAG_SEALED
    header = _HDR.pack(
        flags,
        HEADER_LEN + len(frame.payload),
        frame.tunnel_id,
        frame.session_id,
        frame.ns,
        frame.nr,
    )
    return header + frame.payload


def frame_header(frame: Frame, mtu: int = DEFAULT_MTU) -> bytes:
    """Header bytes alone, as bound into the sealed-payload AAD."""
    return encode_frame(frame, mtu)[:HEADER_LEN]


def decode_frame(data: bytes) -> Frame:
    if len(data) < HEADER_LEN:
        raise Truncated(f"frame needs {HEADER_LEN} header bytes, got {len(data)}")
    flags, length, tunnel_id, session_id, ns, nr = _HDR.unpack_from(data)
    if flags & 0x0F != PROTOCOL_VERSION:
        raise BadVersion(f"version {flags & 0x0F}")
    if not flags & _FLAG_SEQ:
        raise InvalidFlags("S bit must be set")
    if flags & _FLAG_RESERVED:
        raise InvalidFlags("reserved bit set")
    control = bool(flags & _FLAG_CONTROL)
    sealed = bool(flags & _FLAG_SEALED)
    if sealed and control:
        raise InvalidFlags("E bit on a control frame")
    if length < HEADER_LEN:
        raise LengthMismatch(f"declared length {length} below header size")
    if len(data) < length:
        raise Truncated(f"declared {length} bytes, got {len(data)}")
    if len(data) > length:
        raise LengthMismatch(f"declared {length} bytes, got {len(data)} (trailing bytes)")
    return Frame(
        kind=FrameKind.CONTROL if control else FrameKind.DATA,
        encrypted=sealed,
        tunnel_id=tunnel_id,
        session_id=session_id,
        ns=ns,
        nr=nr,
        payload=bytes(data[HEADER_LEN:length]),
    )


@dataclass(frozen=True)
class ControlMessage:
    msg_type: CtrlType
    attributes: tuple = field(default_factory=tuple)  # ((attr_id, value bytes), ...)

    def get(self, attr_id: int) -> list[bytes]:
        return [value for aid, value in self.attributes if aid == attr_id]


def encode_control(msg: ControlMessage) -> bytes:
    out = [struct.pack(">H", int(msg.msg_type))]
    for attr_id, value in msg.attributes:
        if len(value) > MAX_U16:
            raise ValueError("attribute value too long")
        out.append(struct.pack(">HH", attr_id, len(value)))
        out.append(value)
    return b"".join(out)


def decode_control(payload: bytes) -> ControlMessage:
    if len(payload) < 2:
        raise Truncated("control payload needs a 2-byte message type")
    (raw_type,) = struct.unpack_from(">H", payload)
    if raw_type not in _CTRL_TYPES:
        raise UnknownMessageType(f"message type {raw_type}")
    attrs = []
    pos = 2
    while pos < len(payload):
        if len(payload) - pos < 4:
            raise Truncated(f"attribute header truncated at offset {pos}")
        attr_id, value_len = struct.unpack_from(">HH", payload, pos)
        pos += 4
        if len(payload) - pos < value_len:
            raise Truncated(f"attribute value truncated at offset {pos}")
        attrs.append((attr_id, bytes(payload[pos:pos + value_len])))
        pos += value_len
    return ControlMessage(CtrlType(raw_type), tuple(attrs))


def encode_gre(session_id: int, counter: int, ct_and_tag: bytes) -> bytes:
    if not 0 <= session_id <= MAX_U32:
        raise ValueError("session_id out of range")
    if len(ct_and_tag) > MAX_U16:
        raise ValueError("payload too long for GRE length field")
    return _GRE_HDR.pack(GRE_MAGIC, GRE_PROTO, len(ct_and_tag), session_id, counter) + ct_and_tag


def gre_header(session_id: int, counter: int, ct_len: int) -> bytes:
    return _GRE_HDR.pack(GRE_MAGIC, GRE_PROTO, ct_len, session_id, counter)


def data_frame_header(tunnel_id: int, session_id: int, sealed_len: int) -> bytes:
    """Header for a sealed data frame, usable as AAD before sealing."""
    flags = _FLAG_SEQ | _FLAG_SEALED | PROTOCOL_VERSION
    return _HDR.pack(flags, HEADER_LEN + sealed_len, tunnel_id, session_id, 0, 0)


def gre_aad(data: bytes) -> bytes:
    """Static prefix of the GRE header (magic, proto, length, session id)."""
    return bytes(data[:10])


def decode_gre(data: bytes) -> tuple[int, int, bytes]:
    """Returns (session_id, counter, ciphertext+tag)."""
    if len(data) < GRE_HEADER_LEN:
        raise Truncated(f"GRE header needs {GRE_HEADER_LEN} bytes, got {len(data)}")
    magic, proto, length, session_id, counter = _GRE_HDR.unpack_from(data)
    if magic != GRE_MAGIC or proto != GRE_PROTO:
        raise BadVersion(f"bad GRE magic/proto {magic:#06x}/{proto:#06x}")
    body = data[GRE_HEADER_LEN:]
    if len(body) < length:
        raise Truncated(f"GRE declared {length} payload bytes, got {len(body)}")
    if len(body) > length:
        raise LengthMismatch(f"GRE declared {length} payload bytes, got {len(body)}")
    return session_id, counter, bytes(body)
