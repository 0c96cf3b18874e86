"""Shared helpers: seeded endpoint pairs and a lossless in-memory wire.

The pump delivers queued sends back and forth within one virtual
instant, which is exactly what the endpoint unit tests want: ordering
matters, latency does not.  Anything time-sensitive (retransmission,
HELLO cadence) drives step() by hand instead.
"""

import random
import struct
from collections import deque

from tunnelguard.tunnel import wire
from tunnelguard.tunnel.endpoint import (
    Channel,
    Role,
    SendDatagram,
    SendStream,
    TunnelEndpoint,
    Variant,
)

SECRET = bytes(range(32))


def make_pair(variant=Variant.L2TP_LITE, config=None, secret=SECRET, seed=7):
    lac = TunnelEndpoint(Role.LAC, variant, secret, config, rng=random.Random(seed))
    lns = TunnelEndpoint(Role.LNS, variant, secret, config, rng=random.Random(seed + 1))
    return lac, lns


def pump(now, a, b, initial=(), drop=None, trace=None):
    """Shuttle queued sends between two endpoints until the wire drains.

    initial:    iterable of (endpoint, outputs) to put on the wire first.
    drop:       optional callable (sender, channel, data) -> True to lose
                that unit after tracing it.
    trace:      optional list collecting (sender, channel, data).

    Returns the non-send events per endpoint as (events_a, events_b).
    """
    work = deque()
    for ep, outs in initial:
        for item in outs:
            work.append((ep, item))
    events = {id(a): [], id(b): []}
    while work:
        ep, item = work.popleft()
        if isinstance(item, (SendDatagram, SendStream)):
            channel = Channel.STREAM if isinstance(item, SendStream) else Channel.DATAGRAM
            if trace is not None:
                trace.append((ep, channel, item.data))
            if drop is not None and drop(ep, channel, item.data):
                continue
            peer = b if ep is a else a
            for followup in peer.step(now, item.data, channel):
                work.append((peer, followup))
        else:
            events[id(ep)].append(item)
    return events[id(a)], events[id(b)]


def establish(lac, lns, now=0, trace=None):
    """Run the tunnel handshake to completion over a perfect wire."""
    return pump(now, lac, lns, [(lac, lac.start(now))], trace=trace)


def open_session(now, lac, lns, session_id, trace=None):
    return pump(now, lac, lns, [(lac, lac.open_session(now, session_id))], trace=trace)


def established_pair(variant=Variant.L2TP_LITE, config=None, seed=7, session_id=None):
    lac, lns = make_pair(variant, config, seed=seed)
    establish(lac, lns)
    if session_id is not None:
        open_session(0, lac, lns, session_id)
    return lac, lns


def control_messages(trace, sender=None):
    """Decode the sequenced control messages in a trace, ZLBs excluded.

    Returns [(sender, CtrlType)] in wire order.  Stream chunks carry a
    2-byte length prefix instead of a frame header.
    """
    out = []
    for ep, channel, data in trace:
        if sender is not None and ep is not sender:
            continue
        if channel is Channel.STREAM:
            pos = 0
            while pos + 2 <= len(data):
                (mlen,) = struct.unpack_from(">H", data, pos)
                body = data[pos + 2:pos + 2 + mlen]
                pos += 2 + mlen
                out.append((ep, wire.decode_control(body).msg_type))
            continue
        frame = wire.decode_frame(data)
        if frame.kind is wire.FrameKind.CONTROL and frame.payload:
            out.append((ep, wire.decode_control(frame.payload).msg_type))
    return out
