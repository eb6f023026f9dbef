"""Frame layout, message types and the HELLO negotiation.

A frame is ``length (u32 BE) | type (u8) | payload`` where ``length``
counts the type byte plus the payload.  See WIRE.md for field widths.
"""

import hashlib
import struct
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction

from ..errors import FrameTooLarge, ProtocolViolation, Truncated, UnknownType

MAX_FRAME = 1 << 20
PROTOCOL_VERSION = 1
NONCE_BYTES = 16
CONFIRM_BYTES = 32

SENSOR_BITS = {"Acv": 0x01, "Ach": 0x02, "Gyr": 0x04, "Bar": 0x08}


class MsgType(IntEnum):
    HELLO = 0x01
    PAKE_A = 0x02
    PAKE_B = 0x03
    COMMIT = 0x04
    CONFIRM_A = 0x05
    CONFIRM_B = 0x06
    ABORT = 0x0F


class AbortCode(IntEnum):
    ParamMismatch = 0x01
    VersionMismatch = 0x02
    DecodeFailure = 0x03
    HashMismatch = 0x04
    ProtocolViolation = 0x05
    ConfirmTimeout = 0x06
    Timeout = 0x07


ABORT_REASONS = tuple(c.name for c in AbortCode)


@dataclass(frozen=True)
class Message:
    type: MsgType
    payload: bytes = b""

    @classmethod
    def abort(cls, reason):
        code = reason if isinstance(reason, AbortCode) else AbortCode[reason]
        return cls(MsgType.ABORT, bytes([code]))


def encode_frame(msg):
    body_len = 1 + len(msg.payload)
    if body_len > MAX_FRAME:
        raise FrameTooLarge(f"frame of {body_len} bytes exceeds {MAX_FRAME}")
    return struct.pack(">IB", body_len, int(msg.type)) + bytes(msg.payload)


def parse_header(header):
    """Validate the 4-byte length prefix; returns the body length."""
    if len(header) < 4:
        raise Truncated("incomplete length prefix")
    (length,) = struct.unpack(">I", header[:4])
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME}")
    if length < 1:
        raise Truncated("frame has no type byte")
    return length


def decode_body(body):
    try:
        kind = MsgType(body[0])
    except ValueError:
        raise UnknownType(f"message type 0x{body[0]:02x}") from None
    return Message(kind, bytes(body[1:]))


def decode_frame(data):
    """Decode exactly one frame; trailing bytes are an error."""
    msg, rest = split_frame(data)
    if msg is None:
        raise Truncated(f"need more bytes than the {len(data)} available")
    if rest:
        raise ValueError(f"{len(rest)} trailing bytes after frame")
    return msg


def split_frame(buf):
    """Pop one frame off ``buf``; returns ``(None, buf)`` if it is incomplete."""
    if len(buf) < 4:
        return None, buf
    length = parse_header(buf)
    if len(buf) < 4 + length:
        return None, buf
    return decode_body(buf[4:4 + length]), buf[4 + length:]


# --- HELLO -----------------------------------------------------------------

_HELLO = struct.Struct(">B16sHHHHB")


@dataclass(frozen=True)
class Hello:
    version: int
    nonce: bytes
    n: int
    thr: Fraction
    secret_bits: int
    sensors: int

    def encode(self):
        t = Fraction(self.thr)
        return Message(MsgType.HELLO, _HELLO.pack(
            self.version, self.nonce, self.n, t.numerator, t.denominator,
            self.secret_bits, self.sensors))

    @classmethod
    def decode(cls, msg):
        if msg.type != MsgType.HELLO or len(msg.payload) != _HELLO.size:
            raise ProtocolViolation(f"HELLO payload must be {_HELLO.size} bytes")
        version, nonce, n, num, den, secret_bits, sensors = _HELLO.unpack(msg.payload)
        if den == 0:
            raise ProtocolViolation("threshold denominator is zero")
        return cls(version, nonce, n, Fraction(num, den), secret_bits, sensors)


def sensor_bitmap(modalities):
    out = 0
    for m in modalities:
        out |= SENSOR_BITS[m]
    return out


def combined_nonce(nonce_a, nonce_b):
    return hashlib.sha256(nonce_a + nonce_b).digest()[:NONCE_BYTES]


def negotiate(initiator_hello, responder_hello):
    """The agreed session nonce, or an abort code.

    The hellos are passed in role order so both sides hash the nonces in
    the same order.
    """
    a, b = initiator_hello, responder_hello
    if a.version != b.version:
        return AbortCode.VersionMismatch
    if (a.n, a.thr, a.secret_bits, a.sensors) != (b.n, b.thr, b.secret_bits, b.sensors):
        return AbortCode.ParamMismatch
    return combined_nonce(a.nonce, b.nonce)
