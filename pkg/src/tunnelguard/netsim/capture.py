"""Turning a capture into evidence.

The question a capture answers is blunt: of the application payloads the
victims actually produced, how many can be read back out of the bytes an
on-path observer recorded?  The analysis takes the true payloads (the
telemetry lines rooms emitted, the command bytes the server sent) as
oracle markers and scans the capture for exact occurrences.  Plaintext
transports leak everything; sealed transports should leak nothing.

Capture files are one line per observed unit:

    <virtual-time-ms> <src>-><dst> <hex-bytes>
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .adversary import CaptureEntry

# Joining frames with a separator that cannot occur inside ASCII telemetry
# or our fixed-size binary messages prevents a marker from matching across
# a frame boundary.
_JOIN = b"\x00\xff\x00"


@dataclass
class CaptureReport:
    scenario: str
    variant: str
    adversary: str
    frames_captured: int
    control_frames: int
    data_frames: int
    stream_chunks: int
    lines_emitted: int
    distinct_lines_emitted: int
    plaintext_lines_recovered: int
    commands_sent: int
    commands_recovered: int
    tamper_attempts: int
    tampered_delivered: int
    tamper_auth_failures: int
    tampered_commands_accepted: int
    replays_rejected: int
    decode_errors: int
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "extras"}
        out.update(self.extras)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _distinct(items: Iterable[bytes]) -> list[bytes]:
    seen: set[bytes] = set()
    out: list[bytes] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def recovered_markers(
    entries: Sequence[CaptureEntry], markers: Iterable[bytes]
) -> list[bytes]:
    """Markers that appear verbatim in at least one captured payload."""
    haystack = _JOIN.join(e.data for e in entries)
    return [m for m in _distinct(markers) if m and m in haystack]


def analyze_capture(
    entries: Sequence[CaptureEntry],
    emitted_lines: Sequence[bytes],
    sent_commands: Sequence[bytes],
) -> tuple[list[bytes], list[bytes]]:
    """Split the oracle scan: (telemetry lines recovered, commands recovered)."""
    return recovered_markers(entries, emitted_lines), recovered_markers(entries, sent_commands)


def capture_log_lines(entries: Sequence[CaptureEntry]) -> list[str]:
    return [f"{e.t} {e.src}->{e.dst} {e.data.hex()}" for e in entries]


def write_capture_log(path: str | Path, entries: Sequence[CaptureEntry]) -> None:
    Path(path).write_text("".join(line + "\n" for line in capture_log_lines(entries)))
