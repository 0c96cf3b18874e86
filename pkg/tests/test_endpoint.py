"""Tunnel endpoint state machine: handshake, reliability, sessions, data."""

import pytest

from conftest import (
    SECRET,
    control_messages,
    establish,
    established_pair,
    make_pair,
    open_session,
    pump,
)
from tunnelguard.tunnel import crypto, wire
from tunnelguard.tunnel.endpoint import (
    Channel,
    DuplicateSession,
    NoSuchSession,
    PayloadReceived,
    PayloadRejected,
    SendDatagram,
    SendStream,
    SessionClosed,
    SessionDown,
    SessionUp,
    TunnelConfig,
    TunnelDown,
    TunnelNotEstablished,
    TunnelUp,
    Variant,
)
from tunnelguard.tunnel.wire import CtrlType


def datagrams(out):
    return [item.data for item in out if isinstance(item, SendDatagram)]


# ------------------------------------------------------------- handshake

def test_three_way_handshake_over_perfect_wire():
    lac, lns = make_pair()
    trace = []
    ev_lac, ev_lns = establish(lac, lns, trace=trace)
    assert lac.established and lns.established
    assert TunnelUp(lac.tunnel_id) in ev_lac
    assert TunnelUp(lns.tunnel_id) in ev_lns
    assert lns.tunnel_id == lac.tunnel_id  # responder adopts the initiator's id
    sequenced = control_messages(trace)
    assert [m for _, m in sequenced] == [CtrlType.SCCRQ, CtrlType.SCCRP, CtrlType.SCCCN]


def test_establishment_costs_exactly_three_control_messages():
    lac, lns = make_pair()
    trace = []
    establish(lac, lns, trace=trace)
    non_zlb = [
        data for _, ch, data in trace
        if ch is Channel.DATAGRAM and wire.decode_frame(data).payload
    ]
    assert len(non_zlb) == 3
    # plus the final ZLB acknowledging SCCCN
    zlbs = [
        data for _, ch, data in trace
        if ch is Channel.DATAGRAM and not wire.decode_frame(data).payload
    ]
    assert len(zlbs) == 1


def test_only_initiator_may_start():
    _, lns = make_pair()
    with pytest.raises(Exception):
        lns.start(0)


def test_handshake_nonces_flow_into_the_session_key():
    lac, lns = make_pair(seed=21)
    establish(lac, lns)
    open_session(0, lac, lns, 33)
    expected = crypto.derive_session_key(
        SECRET, lac.tunnel_id, 33, lac.local_nonce, lns.local_nonce
    )
    assert lac.sessions[33].key == expected
    assert lns.sessions[33].key == expected


def test_malformed_sccrq_is_rejected_with_stopccn():
    lac, lns = make_pair()
    out_lac = lac.start(0)
    # strip the nonce attribute before delivery
    bad = wire.encode_frame(
        wire.Frame(wire.FrameKind.CONTROL, False, lac.tunnel_id, 0, 0, 0,
                   wire.encode_control(wire.ControlMessage(CtrlType.SCCRQ))))
    out_lns = lns.step(0, bad)
    assert any(isinstance(e, TunnelDown) and e.reason == "handshake_rejected" for e in out_lns)
    ev_lac, _ = pump(0, lac, lns, [(lns, out_lns), (lac, out_lac)])
    assert any(isinstance(e, TunnelDown) and e.reason == "handshake_rejected" for e in ev_lac)


def test_duplicate_sccrp_is_reacked_and_ignored():
    lac, lns = make_pair()
    trace = []
    establish(lac, lns, trace=trace)
    sccrp = next(
        data for ep, ch, data in trace
        if ep is lns and ch is Channel.DATAGRAM and wire.decode_frame(data).payload
    )
    out = lac.step(50, sccrp)
    frames = datagrams(out)
    assert len(frames) == 1 and not wire.decode_frame(frames[0]).payload  # a ZLB, nothing else
    assert not any(isinstance(e, TunnelUp) for e in out)  # no second up event
    assert lac.established


# --------------------------------------------------- retransmission clock

def test_retransmit_schedule_and_death_at_31_seconds():
    # rto 1s doubling per attempt: copies at 0, 1000, 3000, 7000, 15000,
    # then the fifth expiry at 31000 kills the tunnel without a resend.
    lac, _ = make_pair()
    sent = {0: len(datagrams(lac.start(0)))}
    death = None
    for t in range(1, 32_001):
        out = lac.step(t)
        frames = datagrams(out)
        if frames:
            sent[t] = len(frames)
        for event in out:
            if isinstance(event, TunnelDown):
                death = (t, event.reason)
    assert sent == {0: 1, 1000: 1, 3000: 1, 7000: 1, 15000: 1}
    assert death == (31_000, "timeout")
    assert lac.retransmissions == 4
    assert lac.max_message_retransmits == 4
    assert not lac.established


def test_death_is_checked_before_resending():
    # max_retransmits=1: the very first expiry must kill, zero resends.
    lac, _ = make_pair(config=TunnelConfig(max_retransmits=1))
    lac.start(0)
    out = lac.step(1000)
    assert datagrams(out) == []
    assert TunnelDown("timeout") in out
    assert lac.retransmissions == 0


def test_lost_message_is_retransmitted_then_acked():
    lac, lns = make_pair()
    first = datagrams(lac.start(0))[0]
    # lose the first copy; nothing reaches the responder
    assert lac.step(999) == []
    out = lac.step(1000)
    (retry,) = datagrams(out)
    assert retry == first  # identical bytes, same ns
    ev_lac, ev_lns = pump(1000, lac, lns, [(lac, [SendDatagram(retry)])])
    assert lac.established and lns.established
    assert lac.retransmissions == 1


def test_ack_stops_the_retransmit_clock():
    lac, lns = make_pair()
    establish(lac, lns)
    before = lac.retransmissions
    for t in range(1, 9000):
        assert datagrams(lac.step(t)) == []
    assert lac.retransmissions == before


def test_data_frames_are_never_retransmitted():
    lac, lns = established_pair(session_id=5)
    payload_frame = datagrams(lac.send_payload(0, 5, b"doomed"))[0]
    # drop it on the floor; advance well past every control deadline
    seen = []
    for t in range(1, 9500):
        seen += datagrams(lac.step(t))
    assert payload_frame not in seen
    assert lac.retransmissions == 0


# ----------------------------------------------------------------- hello

def test_hello_cadence_three_in_thirty_seconds():
    lac, lns = established_pair()
    hellos = []
    for t in range(1, 30_001):
        trace = []
        pump(t, lac, lns, [(lac, lac.step(t)), (lns, lns.step(t))], trace=trace)
        hellos += [(t, ep) for ep, mtype in control_messages(trace) if mtype is CtrlType.HELLO]
    lac_hellos = [t for t, ep in hellos if ep is lac]
    assert lac_hellos == [10_000, 20_000, 30_000]


def test_application_traffic_defers_hello():
    lac, lns = established_pair(session_id=3)
    # control chatter at t=6000 resets the silence clock on both ends
    pump(6000, lac, lns, [(lac, lac.open_session(6000, 44))])
    hello_times = []
    for t in range(6001, 16_001):
        trace = []
        pump(t, lac, lns, [(lac, lac.step(t)), (lns, lns.step(t))], trace=trace)
        hello_times += [t for _, mtype in control_messages(trace) if mtype is CtrlType.HELLO]
    # one per side, ten seconds after the last control exchange, not before
    assert hello_times == [16_000, 16_000]


def test_unanswered_hellos_eventually_kill_the_tunnel():
    lac, lns_side = make_pair()
    establish(lac, lns_side)
    death_at = None
    for t in range(1, 60_001):
        for event in lac.step(t):
            if isinstance(event, TunnelDown):
                death_at = (t, event.reason)
        if death_at:
            break
    # HELLO goes out at 10s, then five copies expire: 11,13,17,25,41 -> dead
    assert death_at == (41_000, "timeout")


# -------------------------------------------------------------- sessions

def test_session_open_close_lifecycle():
    lac, lns = established_pair()
    ev_lac, ev_lns = open_session(0, lac, lns, 101)
    assert SessionUp(101) in ev_lac and SessionUp(101) in ev_lns
    assert lac.established_sessions() == [101]
    assert lns.established_sessions() == [101]

    ev_lac, ev_lns = pump(5, lac, lns, [(lac, lac.close_session(5, 101))])
    assert any(isinstance(e, SessionDown) and e.session_id == 101 for e in ev_lac)
    assert any(isinstance(e, SessionDown) and e.session_id == 101 for e in ev_lns)
    assert lac.established_sessions() == []
    assert lns.established_sessions() == []
    assert lac.sessions[101].key == b""  # key material erased on close


def test_session_requires_established_tunnel():
    lac, _ = make_pair()
    with pytest.raises(TunnelNotEstablished):
        lac.open_session(0, 1)


def test_duplicate_session_id_rejected_locally():
    lac, lns = established_pair(session_id=7)
    with pytest.raises(DuplicateSession):
        lac.open_session(0, 7)


def test_send_on_closed_or_missing_session():
    lac, lns = established_pair(session_id=7)
    pump(0, lac, lns, [(lac, lac.close_session(0, 7))])
    with pytest.raises(SessionClosed):
        lac.send_payload(0, 7, b"x")
    with pytest.raises(NoSuchSession):
        lac.send_payload(0, 8, b"x")


def test_hundred_sessions_then_close_one():
    lac, lns = established_pair()
    for sid in range(1, 101):
        open_session(0, lac, lns, sid)
    assert lac.established_sessions() == list(range(1, 101))
    pump(1, lac, lns, [(lac, lac.close_session(1, 50))])
    assert lac.established_sessions() == [s for s in range(1, 101) if s != 50]
    assert lns.established_sessions() == [s for s in range(1, 101) if s != 50]
    # the rest still carry traffic
    ev_lac, ev_lns = pump(2, lac, lns, [(lac, lac.send_payload(2, 99, b"still here"))])
    assert PayloadReceived(99, b"still here") in ev_lns


def test_session_collision_responder_claim_wins():
    lac, lns = established_pair()
    crossed = [(lac, lac.open_session(0, 7)), (lns, lns.open_session(0, 7))]
    ev_lac, ev_lns = pump(0, lac, lns, crossed)
    assert lac.established_sessions() == [1, 7]
    assert lns.established_sessions() == [1, 7]
    # exactly one up event per session per side
    assert sorted(e.session_id for e in ev_lac if isinstance(e, SessionUp)) == [1, 7]
    assert sorted(e.session_id for e in ev_lns if isinstance(e, SessionUp)) == [1, 7]
    # and the keys agree, so data flows both ways on both ids
    for sid in (1, 7):
        _, ev = pump(1, lac, lns, [(lac, lac.send_payload(1, sid, b"ping"))])
        assert PayloadReceived(sid, b"ping") in ev


# ------------------------------------------------------------- data path

def test_payload_round_trip():
    lac, lns = established_pair(session_id=12)
    ev_lac, ev_lns = pump(0, lac, lns, [(lac, lac.send_payload(0, 12, b"21.5 degrees"))])
    assert PayloadReceived(12, b"21.5 degrees") in ev_lns
    back, _ = pump(1, lac, lns, [(lns, lns.send_payload(1, 12, b"LOCK"))])
    assert PayloadReceived(12, b"LOCK") in back


def test_wire_bytes_never_contain_plaintext():
    lac, lns = established_pair(session_id=12)
    secret_line = b"101-1,1,90,26.0,40"
    (frame,) = datagrams(lac.send_payload(0, 12, secret_line))
    assert secret_line not in frame


def test_mtu_boundary_on_send():
    lac, lns = established_pair(session_id=2)
    limit = lac.config.mtu - crypto.ENVELOPE_OVERHEAD
    assert limit == 1376
    lac.send_payload(0, 2, b"x" * limit)  # fits
    with pytest.raises(wire.OversizePayload):
        lac.send_payload(0, 2, b"x" * (limit + 1))


def test_tampered_data_frame_fails_auth():
    lac, lns = established_pair(session_id=9)
    (frame,) = datagrams(lac.send_payload(0, 9, b"attack at dawn"))
    damaged = bytearray(frame)
    damaged[wire.HEADER_LEN + 9] ^= 0x01  # one ciphertext bit
    out = lns.step(0, bytes(damaged))
    assert PayloadRejected(9, "auth") in out
    assert lns.auth_failures == 1
    # the pristine copy still opens: failure was the tamper, not the state
    assert PayloadReceived(9, b"attack at dawn") in lns.step(1, frame)


def test_replayed_data_frame_rejected():
    lac, lns = established_pair(session_id=9)
    (frame,) = datagrams(lac.send_payload(0, 9, b"once only"))
    assert PayloadReceived(9, b"once only") in lns.step(0, frame)
    assert PayloadRejected(9, "replay") in lns.step(1, frame)
    assert lns.replays == 1


def test_payload_for_unknown_session_rejected():
    lac, lns = established_pair(session_id=3)
    (frame,) = datagrams(lac.send_payload(0, 3, b"hi"))
    fresh_lac, fresh_lns = established_pair(seed=99)
    out = fresh_lns.step(0, frame)
    assert out == [PayloadRejected(3, "no_session")]


def test_send_counter_monotonic_and_exhaustible():
    lac, lns = established_pair(session_id=4)
    for expected in range(5):
        (frame,) = datagrams(lac.send_payload(0, 4, b"n"))
        decoded = wire.decode_frame(frame)
        assert int.from_bytes(decoded.payload[:8], "big") == expected
    lac.sessions[4].send_counter = crypto.MAX_COUNTER
    with pytest.raises(crypto.CounterExhausted):
        lac.send_payload(0, 4, b"n")


def test_control_ns_is_gapless_per_direction():
    lac, lns = make_pair()
    trace = []
    establish(lac, lns, trace=trace)
    for sid in (1, 2, 3):
        open_session(0, lac, lns, sid, trace=trace)
    pump(1, lac, lns, [(lac, lac.close_session(1, 2))], trace=trace)
    for sender in (lac, lns):
        seq = [
            wire.decode_frame(data).ns
            for ep, ch, data in trace
            if ep is sender and ch is Channel.DATAGRAM and wire.decode_frame(data).payload
        ]
        assert seq == list(range(len(seq)))


# ------------------------------------------------------------- teardown

def test_local_close_stops_both_sides():
    lac, lns = established_pair(session_id=6)
    ev_lac, ev_lns = pump(3, lac, lns, [(lac, lac.close(3))])
    assert TunnelDown("local_close") in ev_lac
    assert TunnelDown("stopped_by_peer") in ev_lns
    assert not lac.established and not lns.established
    assert any(isinstance(e, SessionDown) and e.session_id == 6 for e in ev_lac)
    with pytest.raises(TunnelNotEstablished):
        lac.send_payload(4, 6, b"x")


def test_close_is_idempotent():
    lac, lns = established_pair()
    pump(0, lac, lns, [(lac, lac.close(0))])
    assert lac.close(1) == []


def test_garbage_datagrams_are_counted_not_fatal():
    lac, lns = established_pair(session_id=1)
    lns.step(0, b"\x00" * 4)
    lns.step(0, b"\xff" * 40)
    assert lns.decode_errors == 2
    # the tunnel shrugged it off
    _, ev_lns = pump(1, lac, lns, [(lac, lac.send_payload(1, 1, b"fine"))])
    assert PayloadReceived(1, b"fine") in ev_lns


# ---------------------------------------------------------- PPTP variant

def test_pptp_control_rides_the_stream():
    lac, lns = make_pair(Variant.PPTP_LITE)
    trace = []
    establish(lac, lns, trace=trace)
    assert lac.established and lns.established
    channels = {ch for _, ch, _ in trace}
    assert channels == {Channel.STREAM}  # no control datagrams at all
    msgs = [m for _, m in control_messages(trace)]
    assert msgs == [CtrlType.SCCRQ, CtrlType.SCCRP, CtrlType.SCCCN]


def test_pptp_data_rides_gre_datagrams():
    lac, lns = established_pair(Variant.PPTP_LITE, session_id=101)
    out = lac.send_payload(0, 101, b"telemetry")
    (item,) = out
    assert isinstance(item, SendDatagram)
    session_id, counter, ct = wire.decode_gre(item.data)
    assert (session_id, counter) == (101, 0)
    assert b"telemetry" not in item.data
    ev = lns.step(0, item.data)
    assert PayloadReceived(101, b"telemetry") in ev


def test_pptp_stream_reassembles_byte_by_byte():
    lac, lns = make_pair(Variant.PPTP_LITE)
    (chunk,) = [i.data for i in lac.start(0) if isinstance(i, SendStream)]
    outs = []
    for i in range(len(chunk)):
        outs += lns.step(0, chunk[i:i + 1], Channel.STREAM)
    # the responder parsed exactly one SCCRQ and answered it
    replies = [i for i in outs if isinstance(i, SendStream)]
    assert len(replies) == 1
    assert lns.state.value == "WAIT_REPLY"


def test_pptp_stream_handles_coalesced_messages():
    lac, lns = established_pair(Variant.PPTP_LITE)
    a = [i.data for i in lac.open_session(0, 1) if isinstance(i, SendStream)]
    b = [i.data for i in lac.open_session(0, 2) if isinstance(i, SendStream)]
    outs = lns.step(0, a[0] + b[0], Channel.STREAM)  # both in one chunk
    replies = [i for i in outs if isinstance(i, SendStream)]
    assert len(replies) == 2


def test_pptp_replay_and_tamper_protection_match_datagram_variant():
    lac, lns = established_pair(Variant.PPTP_LITE, session_id=8)
    (packet,) = datagrams(lac.send_payload(0, 8, b"gre payload"))
    assert PayloadReceived(8, b"gre payload") in lns.step(0, packet)
    assert PayloadRejected(8, "replay") in lns.step(1, packet)
    damaged = bytearray(packet)
    damaged[-1] ^= 0x01
    fresh = established_pair(Variant.PPTP_LITE, session_id=8, seed=31)[1]
    assert PayloadRejected(8, "auth") in fresh.step(0, bytes(damaged))


def test_pptp_has_no_retransmit_clock():
    lac, lns = established_pair(Variant.PPTP_LITE)
    for t in range(1, 9000):
        assert lac.step(t) == []
    assert lac.retransmissions == 0
