import struct
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastzip.errors import FrameTooLarge, ProtocolViolation, Truncated, UnknownType
from fastzip.transport import (
    ABORT_REASONS,
    MAX_FRAME,
    AbortCode,
    Hello,
    Message,
    MsgType,
    combined_nonce,
    decode_frame,
    encode_frame,
    memory_pair,
    negotiate,
)
from fastzip.transport.channel import StreamChannel, parse_address
from fastzip.transport.wire import sensor_bitmap, split_frame


def test_abort_bytes():
    assert encode_frame(Message.abort(AbortCode.ParamMismatch)) == bytes.fromhex("000000020f01")


def test_abort_codes_are_pinned():
    assert [int(c) for c in AbortCode] == [1, 2, 3, 4, 5, 6, 7]
    assert ABORT_REASONS[0] == "ParamMismatch"


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(list(MsgType)), st.binary(max_size=4096))
def test_round_trip(kind, payload):
    msg = Message(kind, payload)
    assert decode_frame(encode_frame(msg)) == msg


def test_oversized_declared_length():
    with pytest.raises(FrameTooLarge):
        decode_frame(struct.pack(">IB", 2 << 20, 1))
    with pytest.raises(FrameTooLarge):
        encode_frame(Message(MsgType.COMMIT, bytes(MAX_FRAME)))


def test_truncated_frames():
    frame = encode_frame(Message(MsgType.CONFIRM_A, bytes(32)))
    for cut in (0, 3, 4, 10, len(frame) - 1):
        with pytest.raises(Truncated):
            decode_frame(frame[:cut])
    with pytest.raises(Truncated):
        decode_frame(b"\x00\x00\x00\x00")


def test_unknown_type():
    with pytest.raises(UnknownType):
        decode_frame(b"\x00\x00\x00\x01\x09")


def test_trailing_bytes_rejected():
    with pytest.raises(ValueError):
        decode_frame(encode_frame(Message(MsgType.HELLO)) + b"\x00")


def test_split_frame_streams():
    a = encode_frame(Message(MsgType.PAKE_A, b"xy"))
    b = encode_frame(Message(MsgType.PAKE_B, b"z"))
    msg, rest = split_frame(a + b[:3])
    assert msg.payload == b"xy" and rest == b[:3]
    assert split_frame(rest) == (None, rest)


def hello(**kw):
    base = dict(version=1, nonce=b"\x00" * 16, n=48, thr=Fraction(729, 1000), secret_bits=128,
                sensors=0x03)
    base.update(kw)
    return Hello(**base)


def test_hello_layout_and_round_trip():
    h = hello(nonce=bytes(range(16)))
    msg = h.encode()
    assert len(msg.payload) == 26
    assert msg.payload[:1] == b"\x01" and msg.payload[1:17] == bytes(range(16))
    assert msg.payload[17:] == bytes.fromhex("0030" "02d9" "03e8" "0080" "03")
    assert Hello.decode(msg) == h


def test_hello_decode_errors():
    with pytest.raises(ProtocolViolation):
        Hello.decode(Message(MsgType.HELLO, b"\x01" * 10))
    bad = bytearray(hello().encode().payload)
    bad[21:23] = b"\x00\x00"
    with pytest.raises(ProtocolViolation):
        Hello.decode(Message(MsgType.HELLO, bytes(bad)))


def test_negotiate():
    a, b = hello(nonce=b"a" * 16), hello(nonce=b"b" * 16)
    nonce = negotiate(a, b)
    assert nonce == combined_nonce(b"a" * 16, b"b" * 16) and len(nonce) == 16
    assert negotiate(b, a) != nonce
    assert negotiate(a, hello(version=2)) is AbortCode.VersionMismatch
    assert negotiate(a, hello(n=40)) is AbortCode.ParamMismatch
    assert negotiate(a, hello(thr=Fraction(3, 4))) is AbortCode.ParamMismatch
    assert negotiate(a, hello(secret_bits=244)) is AbortCode.ParamMismatch
    assert negotiate(a, hello(sensors=0x0F)) is AbortCode.ParamMismatch


def test_sensor_bitmap():
    assert sensor_bitmap(["Acv", "Ach", "Gyr", "Bar"]) == 0x0F
    assert sensor_bitmap(["Gyr"]) == 0x04


def test_memory_channel_drop():
    a, b = memory_pair(drop_a=lambda m: m.type == MsgType.PAKE_A)
    a.send(Message(MsgType.PAKE_A, b"1"))
    a.send(Message(MsgType.PAKE_B, b"2"))
    assert b.recv(timeout=0) == Message(MsgType.PAKE_B, b"2")
    assert b.recv(timeout=0) is None
    assert len(a.sent) == 2


def test_stream_channel_over_socketpair():
    import socket

    s1, s2 = socket.socketpair()
    c1, c2 = StreamChannel(s1), StreamChannel(s2)
    try:
        c1.send(Message(MsgType.COMMIT, bytes(1000)))
        c1.send(Message.abort("Timeout"))
        assert c2.recv(timeout=1).payload == bytes(1000)
        assert c2.recv(timeout=1) == Message(MsgType.ABORT, b"\x07")
        assert c2.recv(timeout=0.05) is None
    finally:
        c1.close()
        c2.close()


def test_parse_address():
    assert parse_address("127.0.0.1:9000") == ("127.0.0.1", 9000)
    with pytest.raises(ValueError):
        parse_address("nohost")
