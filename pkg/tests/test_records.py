"""Telemetry line grammar: what parses, what is rejected, and where."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tunnelguard.server.records import (
    MalformedLine,
    RangeViolation,
    TelemetryParseError,
    parse_log_line,
)


def test_five_field_line():
    record = parse_log_line(b"101-1,1,90,26.0,40", received_at=7)
    assert record.room_id == 101
    assert record.motion is True
    assert record.appliance_on is True
    assert record.servo_angle == 90
    assert record.temperature == 26.0
    assert record.humidity == 40
    assert record.received_at == 7
    assert record.raw == b"101-1,1,90,26.0,40"


def test_four_field_line_has_no_humidity():
    record = parse_log_line("7-0,0,0,0.0")
    assert record.room_id == 7
    assert record.humidity is None
    assert record.temperature == 0.0


def test_negative_temperature_accepted():
    assert parse_log_line(b"3-0,0,0,-12.5,10").temperature == -12.5


def test_motion_flag_must_be_binary():
    with pytest.raises(MalformedLine):
        parse_log_line(b"101-2,1,90,26.0")


def test_servo_range_enforced():
    assert parse_log_line(b"1-0,0,180,21.0").servo_angle == 180
    with pytest.raises(RangeViolation) as err:
        parse_log_line(b"1-0,0,181,21.0")
    assert err.value.field == "servo_angle"
    assert err.value.value == 181


def test_humidity_range_enforced():
    assert parse_log_line(b"1-0,0,0,21.0,100").humidity == 100
    with pytest.raises(RangeViolation) as err:
        parse_log_line(b"1-0,0,0,21.0,101")
    assert err.value.field == "humidity"


def test_room_id_must_fit_32_bits():
    assert parse_log_line(b"4294967295-0,0,0,21.0").room_id == 0xFFFFFFFF
    with pytest.raises(RangeViolation):
        parse_log_line(b"4294967296-0,0,0,21.0")


def test_temperature_needs_exactly_one_fraction_digit():
    with pytest.raises(MalformedLine):
        parse_log_line(b"1-0,0,0,21,40")
    with pytest.raises(MalformedLine):
        parse_log_line(b"1-0,0,0,21.05,40")
    with pytest.raises(MalformedLine):
        parse_log_line(b"1-0,0,0,21.,40")


def test_non_ascii_byte_reported_with_position():
    with pytest.raises(MalformedLine) as err:
        parse_log_line(b"101-1,1,90,26.0,4\xad")
    assert err.value.position == 17


def test_line_breaks_rejected():
    with pytest.raises(MalformedLine):
        parse_log_line(b"101-1,1,90,26.0\n102-0,0,0,21.0")
    with pytest.raises(MalformedLine):
        parse_log_line(b"101-1,1,90,26.0\r")


def test_trailing_bytes_rejected():
    with pytest.raises(MalformedLine):
        parse_log_line(b"101-1,1,90,26.0,40 ")
    with pytest.raises(MalformedLine):
        parse_log_line(b"101-1,1,90,26.0,40,7")


def test_empty_and_fragmentary_lines_rejected():
    for bad in (b"", b"101", b"101-", b"101-1", b"101-1,1,90,", b"-1,1,90,26.0"):
        with pytest.raises(MalformedLine):
            parse_log_line(bad)


def test_error_position_points_at_offending_byte():
    with pytest.raises(MalformedLine) as err:
        parse_log_line(b"101-9,1,90,26.0")
    assert err.value.position == 4  # the bad motion flag
    with pytest.raises(RangeViolation) as err2:
        parse_log_line(b"101-1,1,981,26.0")
    assert err2.value.position == 8  # start of the servo field


def test_single_bit_flip_in_ascii_never_parses_silently():
    # the adversary's favourite move: flip the top bit of one byte.
    # That always produces a non-ASCII byte, so the line must die.
    line = bytearray(b"101-1,1,90,26.0,40")
    for i in range(len(line)):
        damaged = bytearray(line)
        damaged[i] ^= 0x80
        with pytest.raises(MalformedLine):
            parse_log_line(bytes(damaged))


@given(st.binary(max_size=40))
def test_parser_is_total(data):
    try:
        parse_log_line(data)
    except TelemetryParseError:
        pass  # anything else escaping is a bug
