"""On-path observer and tamperer.

A Tap sits on a forwarding node (the open segment of the topology) and
sees every unit that transits it.  In sniff mode it only records.  In
man-in-the-middle mode it additionally flips one bit in every Nth data
payload that passes, where "data" means anything that is not control
signalling: the payload region of a sealed data frame, the body of a
bare datagram, or the ciphertext of a GRE-style packet.  Control
handshakes are left alone so the tunnel always comes up and the
comparison stays about the data path.

The tap never drops or reorders; altered units are marked in their
``meta`` so endpoints' reactions can be attributed afterwards.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..tunnel import wire
from .engine import DGRAM, Unit


class AdversaryMode(enum.Enum):
    PASSIVE_SNIFF = "sniff"
    MITM = "mitm"


@dataclass(frozen=True)
class TamperRule:
    """Flip bit `bit_offset` (counted from the start of the data region)
    in every `every_n`-th observed data payload."""

    every_n: int = 10
    bit_offset: int = 8
    target: str = "data"

    def __post_init__(self) -> None:
        if self.every_n < 1:
            raise ValueError("every_n must be >= 1")
        if self.bit_offset < 0:
            raise ValueError("bit_offset must be >= 0")
        if self.target != "data":
            raise ValueError(f"unsupported tamper target: {self.target!r}")


@dataclass(frozen=True)
class CaptureEntry:
    """One unit as captured on the wire (after any tampering)."""

    t: int
    src: str
    dst: str
    kind: str
    port: int
    data: bytes
    tampered: bool = False


def data_region_offset(kind: str, payload: bytes) -> int | None:
    """Where the application data begins inside a captured payload, or
    None when the payload is control traffic and must not be touched.

    Stream chunks are control by definition here.  Datagrams are
    classified by shape: a well-formed tunnel frame is control or data
    by its header bit, a GRE-style packet is all data past its header,
    and anything else is a bare application datagram.
    """
    if kind != DGRAM:
        return None
    if len(payload) >= wire.HEADER_LEN and (payload[0] & 0x0F) == wire.PROTOCOL_VERSION:
        declared = int.from_bytes(payload[1:3], "big")
        if declared == len(payload):
            if payload[0] & 0x80:
                return None
            return wire.HEADER_LEN
    if len(payload) >= wire.GRE_HEADER_LEN:
        magic = int.from_bytes(payload[0:2], "big")
        proto = int.from_bytes(payload[2:4], "big")
        if magic == wire.GRE_MAGIC and proto == wire.GRE_PROTO:
            return wire.GRE_HEADER_LEN
    return 0


def _flip_bit(data: bytes, region: int, bit_offset: int) -> bytes | None:
    bit = region * 8 + bit_offset
    index = bit // 8
    if index >= len(data):
        return None
    mutable = bytearray(data)
    mutable[index] ^= 0x80 >> (bit % 8)
    return bytes(mutable)


@dataclass
class Tap:
    mode: AdversaryMode
    tamper: TamperRule | None = None
    entries: list[CaptureEntry] = field(default_factory=list)
    data_payloads_seen: int = 0
    tamper_attempts: int = 0

    def process(self, now: int, unit: Unit) -> Unit:
        tampered = False
        if self.mode is AdversaryMode.MITM and self.tamper is not None:
            region = data_region_offset(unit.kind, unit.payload)
            if region is not None:
                self.data_payloads_seen += 1
                if self.data_payloads_seen % self.tamper.every_n == 0:
                    flipped = _flip_bit(unit.payload, region, self.tamper.bit_offset)
                    if flipped is not None:
                        self.tamper_attempts += 1
                        unit.payload = flipped
                        unit.meta["tampered"] = True
                        tampered = True
        self.entries.append(
            CaptureEntry(now, unit.src, unit.dst, unit.kind, unit.port, unit.payload, tampered)
        )
        return unit
