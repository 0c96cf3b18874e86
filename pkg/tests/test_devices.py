"""Room device model: sensors, local rules, command execution, codecs."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tunnelguard.devices import (
    Command,
    CommandResult,
    CommandStatus,
    MalformedCommand,
    Opcode,
    Room,
    RoomState,
    SensorScript,
    decode_command,
    decode_result,
    encode_command,
    encode_result,
    format_telemetry,
)
from tunnelguard.server.records import parse_log_line


def make_room(
    room_id=101,
    motion=False,
    temperature=21.0,
    humidity=40,
    appliance_on=False,
    servo_angle=0,
    script=(),
    drift=0.0,
    debounce_ms=30_000,
):
    state = RoomState(
        room_id=room_id,
        motion=motion,
        temperature=temperature,
        humidity=humidity,
        servo_angle=servo_angle,
        appliance_on=appliance_on,
    )
    return Room(state, SensorScript(script, drift), vacancy_debounce_ms=debounce_ms)


# ------------------------------------------------------------- telemetry

def test_line_format_with_humidity():
    state = RoomState(room_id=101, motion=True, temperature=26.0, humidity=40,
                      servo_angle=90, appliance_on=True)
    assert format_telemetry(state) == b"101-1,1,90,26.0,40"


def test_line_format_without_humidity():
    state = RoomState(room_id=7, motion=False, temperature=0.0, humidity=None,
                      servo_angle=0, appliance_on=False)
    assert format_telemetry(state) == b"7-0,0,0,0.0"


def test_negative_temperature_keeps_one_fraction_digit():
    state = RoomState(room_id=3, motion=False, temperature=-5.25, humidity=10,
                      servo_angle=0, appliance_on=False)
    assert format_telemetry(state) == b"3-0,0,0,-5.2,10"


def test_sixty_ticks_sixty_lines():
    room = make_room()
    lines = [room.tick(t) for t in range(0, 60_000, 1000)]
    assert len(lines) == 60
    assert all(line.startswith(b"101-") for line in lines)


def test_temperature_drift_accumulates_per_second():
    room = make_room(temperature=20.0, drift=0.1)
    assert room.tick(0) == b"101-0,0,0,20.0,40"
    assert room.tick(10_000) == b"101-0,0,0,21.0,40"
    assert room.tick(25_000) == b"101-0,0,0,22.5,40"


def test_script_points_apply_once_and_hold():
    room = make_room(script=((5000, {"motion": True}), (8000, {"temperature": 55.0})))
    assert room.tick(0) == b"101-0,0,0,21.0,40"
    assert room.tick(5000) == b"101-1,0,0,21.0,40"
    assert room.tick(7000) == b"101-1,0,0,21.0,40"   # holds
    assert room.tick(8000) == b"101-1,0,0,55.0,40"   # new temperature base
    assert room.tick(9000) == b"101-1,0,0,55.0,40"


def test_late_start_applies_all_past_points():
    room = make_room(script=((1000, {"motion": True}), (2000, {"humidity": 80})))
    assert room.tick(10_000) == b"101-1,0,0,21.0,80"


# ------------------------------------------------------------ local rules

def test_vacancy_auto_off_from_the_30s_tick():
    room = make_room(appliance_on=True)  # vacant from t=0
    lines = {t: room.tick(t) for t in range(0, 60_000, 1000)}
    assert lines[29_000] == b"101-0,1,0,21.0,40"  # still on just before
    assert lines[30_000] == b"101-0,0,0,21.0,40"  # off at the debounce tick
    assert lines[59_000] == b"101-0,0,0,21.0,40"


def test_occupied_room_never_auto_changes():
    room = make_room(motion=True, appliance_on=True)
    for t in range(0, 120_000, 1000):
        room.tick(t)
    assert room.state.appliance_on


def test_vacancy_clock_resets_when_motion_returns():
    room = make_room(appliance_on=True,
                     script=((10_000, {"motion": True}), (20_000, {"motion": False})))
    for t in range(0, 49_000, 1000):
        room.tick(t)
    assert room.state.appliance_on          # vacant only since t=20000
    assert room.tick(50_000) == b"101-0,0,0,21.0,40"  # 30s after re-vacancy


def test_appliance_commanded_back_on_while_vacant_turns_off_again():
    room = make_room(appliance_on=True)
    room.tick(30_000)
    assert not room.state.appliance_on
    room.handle_command(encode_command(Command(int(Opcode.APPLIANCE_ON), 1)))
    assert room.state.appliance_on
    room.tick(61_000)
    assert not room.state.appliance_on  # debounce had long expired


# -------------------------------------------------------------- commands

def test_lock_vacant_room_succeeds():
    room = make_room()
    result = room.handle_command(encode_command(Command(int(Opcode.LOCK), 9)))
    assert result.status == CommandStatus.OK
    assert result.servo_angle == 90
    assert room.state.locked


def test_lock_occupied_room_refused_and_state_unchanged():
    room = make_room(motion=True)
    result = room.handle_command(encode_command(Command(int(Opcode.LOCK), 9)))
    assert result.status == CommandStatus.REFUSED_OCCUPIED
    assert result.servo_angle == 0
    assert not room.state.locked


def test_unlock_always_succeeds():
    room = make_room(motion=True, servo_angle=90)
    result = room.handle_command(encode_command(Command(int(Opcode.UNLOCK), 1)))
    assert result.status == CommandStatus.OK
    assert room.state.servo_angle == 0


def test_unknown_opcode_reports_and_leaves_state_alone():
    room = make_room()
    before = (room.state.servo_angle, room.state.appliance_on, room.state.buzzer_on)
    result = room.handle_command(encode_command(Command(0xFF, 4)))
    assert result.status == CommandStatus.UNKNOWN_COMMAND
    assert result.request_id == 4
    assert (room.state.servo_angle, room.state.appliance_on, room.state.buzzer_on) == before


def test_buzzer_and_appliance_opcodes():
    room = make_room()
    room.handle_command(encode_command(Command(int(Opcode.BUZZER_ON), 1)))
    assert room.state.buzzer_on
    room.handle_command(encode_command(Command(int(Opcode.BUZZER_OFF), 2)))
    assert not room.state.buzzer_on
    room.handle_command(encode_command(Command(int(Opcode.APPLIANCE_ON), 3)))
    assert room.state.appliance_on
    room.handle_command(encode_command(Command(int(Opcode.APPLIANCE_OFF), 4)))
    assert not room.state.appliance_on


def test_commands_are_idempotent():
    room = make_room()
    first = room.handle_command(encode_command(Command(int(Opcode.LOCK), 1)))
    second = room.handle_command(encode_command(Command(int(Opcode.LOCK), 2)))
    assert first.status == second.status == CommandStatus.OK
    assert room.state.servo_angle == 90


@given(st.lists(st.tuples(st.sampled_from(sorted(Opcode)), st.booleans()), max_size=30))
def test_lock_safety_property(steps):
    # under any command interleaving with motion flips, a LOCK never
    # takes effect while the room reads occupied
    room = make_room()
    rid = 0
    for opcode, motion in steps:
        room.state.motion = motion
        rid += 1
        locked_before = room.state.locked
        result = room.handle_command(encode_command(Command(int(opcode), rid)))
        if opcode is Opcode.LOCK and motion:
            assert result.status == CommandStatus.REFUSED_OCCUPIED
            assert room.state.locked == locked_before


# ---------------------------------------------------------------- codecs

def test_command_codec_round_trip():
    cmd = Command(int(Opcode.LOCK), 0xDEADBEEF)
    data = encode_command(cmd)
    assert len(data) == 5
    assert decode_command(data) == cmd


def test_command_codec_rejects_wrong_length():
    with pytest.raises(MalformedCommand):
        decode_command(b"\x01\x00\x00")
    with pytest.raises(MalformedCommand):
        decode_command(encode_command(Command(1, 1)) + b"x")


def test_unknown_opcode_survives_decoding():
    # rejecting unknown opcodes is the device's job, not the codec's
    assert decode_command(encode_command(Command(0xEE, 7))).opcode == 0xEE


def test_result_codec_round_trip():
    result = CommandResult(int(Opcode.LOCK), 12, int(CommandStatus.OK), 90, True)
    data = encode_result(result)
    assert len(data) == 8
    assert decode_result(data) == result


def test_result_codec_rejects_bad_status():
    data = bytearray(encode_result(CommandResult(1, 1, 0, 0, False)))
    data[5] = 99  # status byte
    with pytest.raises(MalformedCommand):
        decode_result(bytes(data))
    with pytest.raises(MalformedCommand):
        decode_result(bytes(data)[:-1])


@given(
    opcode=st.integers(0, 255),
    request_id=st.integers(0, 2**32 - 1),
)
def test_command_codec_property(opcode, request_id):
    assert decode_command(encode_command(Command(opcode, request_id))) == Command(opcode, request_id)


# ------------------------------------------------- emit/parse round trip

@settings(max_examples=300)
@given(
    room_id=st.integers(0, 0xFFFFFFFF),
    motion=st.booleans(),
    appliance=st.booleans(),
    servo=st.integers(0, 180),
    temp=st.floats(min_value=-80.0, max_value=200.0, allow_nan=False),
    humidity=st.one_of(st.none(), st.integers(0, 100)),
)
def test_every_emitted_line_parses_back(room_id, motion, appliance, servo, temp, humidity):
    state = RoomState(room_id=room_id, motion=motion, temperature=temp,
                      humidity=humidity, servo_angle=servo, appliance_on=appliance)
    line = format_telemetry(state)
    record = parse_log_line(line, received_at=5)
    assert record.room_id == room_id
    assert record.motion == motion
    assert record.appliance_on == appliance
    assert record.servo_angle == servo
    assert record.humidity == humidity
    assert record.temperature == float(f"{temp:.1f}")
    assert record.raw == line
