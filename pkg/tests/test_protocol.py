import struct

import pytest
from hypothesis import given, strategies as st

from pqnsim.analyzer import AnalyzerFrame
from pqnsim.channel import CountRecord
from pqnsim.chsh import chsh_from_matrix, exact_measurement_matrix, settings_from_user
from pqnsim.net.protocol import (
    MAX_FRAME_BYTES,
    AngleSet,
    Calibrate,
    ChshResultMsg,
    CountReport,
    ErrorMsg,
    FrameDecoder,
    FrameMsg,
    Hello,
    Progress,
    ProtocolError,
    RunChsh,
    SetAngle,
    StartCount,
    decode_message,
    encode_message,
)
from pqnsim.polarization import AnalyzerSetting

angles = st.floats(-360.0, 360.0, allow_nan=False)


def sample_record() -> CountRecord:
    return CountRecord(
        AnalyzerSetting(12.5), AnalyzerSetting(35.0, "reflected"),
        10.0, 985, 37000, 41000, 42.0,
    )


def sample_result():
    m = exact_measurement_matrix(0.9, settings_from_user(3.0, 48.0), scale=1000.0)
    return chsh_from_matrix(m, live=True, wall_time=160.0)


ALL_VARIANTS = [
    Hello(role="source_lab", version="1", token="public-node"),
    SetAngle(target_node="closet_waveplate", angle_deg=22.5, request_id=7),
    AngleSet(request_id=7, actual_angle_deg=22.5),
    StartCount(duration_s=10.0, request_id=8),
    CountReport(request_id=8, record=sample_record()),
    RunChsh(a=0.0, a_prime=45.0, integration_s=10.0, session_id="abc"),
    Progress(session_id="abc", step=3, of=16),
    ChshResultMsg(session_id="abc", result=sample_result()),
    FrameMsg(frame=AnalyzerFrame(1023.0, 0.0, 511.5, 511.5)),
    Calibrate(action="reset"),
    ErrorMsg(code="BUSY", detail="a session is already running"),
]


@pytest.mark.parametrize("message", ALL_VARIANTS, ids=lambda m: type(m).__name__)
def test_round_trip_identity(message):
    assert decode_message(encode_message(message)) == message


def test_frame_layout_is_length_prefixed():
    msg = SetAngle(target_node="closet_waveplate", angle_deg=22.5, request_id=7)
    frame = encode_message(msg)
    (length,) = struct.unpack(">I", frame[:4])
    assert length == len(frame) - 4


@given(a=angles, a_prime=angles, integration=st.floats(0.001, 1e4, allow_nan=False))
def test_run_chsh_round_trip_any_floats(a, a_prime, integration):
    msg = RunChsh(a=a, a_prime=a_prime, integration_s=integration, session_id="s")
    assert decode_message(encode_message(msg)) == msg


@given(rid=st.integers(0, 2**53), angle=angles)
def test_angle_set_round_trip(rid, angle):
    msg = AngleSet(request_id=rid, actual_angle_deg=angle)
    assert decode_message(encode_message(msg)) == msg


def test_truncated_frame_is_incomplete_and_consumes_nothing():
    frame = encode_message(Calibrate(action="done"))
    with pytest.raises(ProtocolError) as err:
        decode_message(frame[:-3])
    assert err.value.code == "INCOMPLETE"
    decoder = FrameDecoder()
    assert decoder.feed(frame[:-3]) == []
    assert decoder.pending_bytes == len(frame) - 3
    assert decoder.feed(frame[-3:]) == [Calibrate(action="done")]
    assert decoder.pending_bytes == 0


def test_stream_decoder_handles_coalesced_frames():
    messages = ALL_VARIANTS[:5]
    blob = b"".join(encode_message(m) for m in messages)
    decoder = FrameDecoder()
    out = []
    for i in range(0, len(blob), 7):  # drip-feed in awkward chunks
        out.extend(decoder.feed(blob[i : i + 7]))
    assert out == messages


def test_unknown_type_is_reported_with_the_tag():
    payload = b'{"type":"WOBBLE","x":1}'
    frame = struct.pack(">I", len(payload)) + payload
    with pytest.raises(ProtocolError) as err:
        decode_message(frame)
    assert err.value.code == "UNKNOWN_TYPE"
    assert "WOBBLE" in str(err.value)


def test_missing_field_is_malformed():
    payload = b'{"type":"SET_ANGLE","angle_deg":3.0}'
    frame = struct.pack(">I", len(payload)) + payload
    with pytest.raises(ProtocolError) as err:
        decode_message(frame)
    assert err.value.code == "MALFORMED"


def test_oversize_frames_rejected_both_ways():
    big = ErrorMsg(code="X", detail="y" * (MAX_FRAME_BYTES + 10))
    with pytest.raises(ProtocolError) as err:
        encode_message(big)
    assert err.value.code == "OVERSIZE"
    fake_header = struct.pack(">I", MAX_FRAME_BYTES + 1)
    with pytest.raises(ProtocolError):
        decode_message(fake_header + b"x")
    with pytest.raises(ProtocolError):
        FrameDecoder().feed(fake_header)
