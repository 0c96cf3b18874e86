from .engine import (
    Network,
    Node,
    Link,
    Unit,
    WireRecord,
    NetsimError,
    DuplicateNodeId,
    DanglingLink,
    TapRefused,
    DGRAM,
    STREAM,
)
from .adversary import AdversaryMode, TamperRule, Tap, CaptureEntry
from .capture import CaptureReport, analyze_capture, write_capture_log, capture_log_lines

__all__ = [name for name in dir() if not name.startswith("_")]
