from .wire import (
    Frame,
    FrameKind,
    ControlMessage,
    CtrlType,
    DecodeError,
    Truncated,
    BadVersion,
    LengthMismatch,
    InvalidFlags,
    UnknownMessageType,
    OversizePayload,
    encode_frame,
    decode_frame,
    encode_control,
    decode_control,
    encode_gre,
    decode_gre,
    HEADER_LEN,
    GRE_HEADER_LEN,
    DEFAULT_MTU,
)
from .crypto import (
    AuthFailure,
    ReplayedCounter,
    CounterExhausted,
    ReplayWindow,
    derive_session_key,
    seal,
    open_sealed,
    ENVELOPE_OVERHEAD,
    SESSION_KEY_LEN,
    HANDSHAKE_NONCE_LEN,
)
from .endpoint import (
    Channel,
    Role,
    Variant,
    TunnelConfig,
    TunnelEndpoint,
    TunnelState,
    SessionPhase,
    TunnelError,
    TunnelNotEstablished,
    DuplicateSession,
    NoSuchSession,
    SessionClosed,
    TunnelUp,
    TunnelDown,
    SessionUp,
    SessionDown,
    PayloadReceived,
    PayloadRejected,
    DecodeErrorEvent,
    SendDatagram,
    SendStream,
)

__all__ = [name for name in dir() if not name.startswith("_")]
