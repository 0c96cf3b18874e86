"""Session key derivation and payload sealing.

Key schedule (HKDF-SHA256, extract then expand):

    salt = nonce_initiator || nonce_responder        (16 bytes each)
    PRK  = HMAC-SHA256(salt, shared_secret)
    key  = first 32 bytes of expand(PRK, info)
    info = "tunnelguard session key v2" || tunnel_id (u32 BE) || session_id (u32 BE)

Sealed envelope (ChaCha20-Poly1305, 16-byte tag):

    counter (u64 BE) || ciphertext || tag

The 96-bit AEAD nonce is session_id (u32 BE) || counter (u64 BE), so a
counter never repeats under one key and payloads cannot be replayed
into a different session.  The carrying frame header is bound as
associated data; flipping any header or envelope bit fails the tag.
"""

from __future__ import annotations

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

SESSION_KEY_LEN = 32
HANDSHAKE_NONCE_LEN = 16
TAG_LEN = 16
COUNTER_LEN = 8
ENVELOPE_OVERHEAD = COUNTER_LEN + TAG_LEN
MAX_COUNTER = 2**64 - 1
REPLAY_WINDOW = 64

_KDF_INFO_PREFIX = b"tunnelguard session key v2"


class AuthFailure(Exception):
    """Tag verification failed; the payload or its header was altered."""


class ReplayedCounter(Exception):
    """Counter already accepted or older than the replay window."""


class CounterExhausted(Exception):
    """Send counter reached its ceiling; the session must be reopened."""


def derive_session_key(
    shared_secret: bytes,
    tunnel_id: int,
    session_id: int,
    nonce_initiator: bytes,
    nonce_responder: bytes,
) -> bytes:
    if len(nonce_initiator) != HANDSHAKE_NONCE_LEN or len(nonce_responder) != HANDSHAKE_NONCE_LEN:
        raise ValueError("handshake nonces must be 16 bytes")
    info = (
        _KDF_INFO_PREFIX
        + tunnel_id.to_bytes(4, "big")
        + session_id.to_bytes(4, "big")
    )
    return HKDF(
        algorithm=hashes.SHA256(),
        length=SESSION_KEY_LEN,
        salt=nonce_initiator + nonce_responder,
        info=info,
    ).derive(shared_secret)


def seal(key: bytes, session_id: int, counter: int, plaintext: bytes, aad: bytes) -> bytes:
    """Seal one payload. The caller owns counter monotonicity."""
    if counter >= MAX_COUNTER:
        raise CounterExhausted(f"counter {counter} at ceiling")
    nonce = session_id.to_bytes(4, "big") + counter.to_bytes(8, "big")
    ct = ChaCha20Poly1305(key).encrypt(nonce, plaintext, aad)
    return counter.to_bytes(8, "big") + ct


def open_sealed(key: bytes, session_id: int, sealed: bytes, aad: bytes) -> tuple[int, bytes]:
    """Open one sealed envelope, returning (counter, plaintext).

    Replay tracking lives in ReplayWindow; this only checks the tag.
    """
    if len(sealed) < ENVELOPE_OVERHEAD:
        raise AuthFailure(f"sealed envelope needs {ENVELOPE_OVERHEAD}+ bytes, got {len(sealed)}")
    counter = int.from_bytes(sealed[:COUNTER_LEN], "big")
    nonce = session_id.to_bytes(4, "big") + sealed[:COUNTER_LEN]
    try:
        plaintext = ChaCha20Poly1305(key).decrypt(nonce, sealed[COUNTER_LEN:], aad)
    except InvalidTag:
        raise AuthFailure("tag verification failed") from None
    return counter, plaintext


class ReplayWindow:
    """Sliding acceptance window over the last ``size`` counters.

    check() rejects duplicates and counters that fell off the window;
    mark() records a counter, and must only run after the tag verified,
    so forged frames cannot burn counter slots.
    """

    def __init__(self, size: int = REPLAY_WINDOW):
        self.size = size
        self.highest = -1
        self.bitmap = 0
        self._mask = (1 << size) - 1

    def check(self, counter: int) -> None:
        if counter > self.highest:
            return
        offset = self.highest - counter
        if offset >= self.size:
            raise ReplayedCounter(f"counter {counter} below window floor")
        if self.bitmap & (1 << offset):
            raise ReplayedCounter(f"counter {counter} already accepted")

    def mark(self, counter: int) -> None:
        if counter > self.highest:
            shift = counter - self.highest
            self.bitmap = ((self.bitmap << min(shift, self.size)) | 1) & self._mask
            self.highest = counter
        else:
            self.bitmap |= 1 << (self.highest - counter)
