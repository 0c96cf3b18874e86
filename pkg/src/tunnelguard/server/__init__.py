from .records import (
    TelemetryRecord,
    TelemetryParseError,
    MalformedLine,
    RangeViolation,
    parse_log_line,
)
from .core import (
    ControlCore,
    RegistryEntry,
    RuleConfig,
    ServerEvent,
    StatusView,
    SweepReport,
    ControlError,
    UnknownRoom,
    DuplicateRoom,
    NoDataYet,
    SessionDown,
    replay_telemetry_log,
)
from .api import ApiServer, Runtime

__all__ = [name for name in dir() if not name.startswith("_")]
