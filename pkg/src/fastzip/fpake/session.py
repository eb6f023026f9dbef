"""Two-role fPAKE session as a sans-IO state machine.

Message order (initiator A, responder B)::

    A -> B  HELLO
    B -> A  HELLO
    A -> B  PAKE_A
    B -> A  PAKE_B
    A -> B  COMMIT, CONFIRM_A     com = c + k,  h = H(s || 0)
    B -> A  CONFIRM_B             h' = H(s' || 1)

Either side may send ABORT instead of its next message.  Every wait has a
deadline; the one after COMMIT is the key-confirmation timeout.
"""

import hashlib
import hmac
import math
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import ProtocolViolation
from ..transport.wire import (
    NONCE_BYTES,
    PROTOCOL_VERSION,
    AbortCode,
    Hello,
    Message,
    MsgType,
    negotiate,
)
from .field import ELEMENT_BYTES, P130, ReedSolomon
from .pake import BitPake, derive_keys

CONFIRM_LABEL = b"fastzip-confirm"
SESSION_KEY_LABEL = b"session-key"

# 244-bit keys are carried as two 122-bit constant terms
BLOCK_BITS = {128: (128,), 244: (122, 122)}


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    thr: Fraction
    secret_bits: int = 128
    confirm_timeout: float = 3.0
    sensors: int = 0x0F
    version: int = PROTOCOL_VERSION

    def __post_init__(self):
        thr = Fraction(str(self.thr)) if isinstance(self.thr, float) else Fraction(self.thr)
        object.__setattr__(self, "thr", thr)
        if not Fraction(1, 2) < thr <= 1:
            raise ValueError("threshold must lie in (0.5, 1]")
        if not 1 <= self.n <= 0xFFFF:
            raise ValueError("n must fit in 16 bits")
        if self.secret_bits not in BLOCK_BITS:
            raise ValueError(f"secret_bits must be one of {sorted(BLOCK_BITS)}")
        if self.confirm_timeout <= 0:
            raise ValueError("confirm_timeout must be positive")

    @property
    def d(self):
        return math.ceil((2 * self.thr - 1) * self.n)

    @property
    def max_errors(self):
        return (self.n - self.d) // 2

    @property
    def blocks(self):
        return len(BLOCK_BITS[self.secret_bits])

    def hello(self, nonce):
        return Hello(self.version, nonce, self.n, self.thr, self.secret_bits, self.sensors)


class Role(Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class Phase(Enum):
    INIT = "Init"
    AMPLIFYING = "Amplifying"
    COMMITTING = "Committing"
    CONFIRMING = "Confirming"
    DONE = "Done"
    ABORTED = "Aborted"


@dataclass
class Outcome:
    key: bytes = None
    reason: str = None
    timings: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.key is not None


def confirm_tag(nonce, secret_bytes, suffix):
    return hashlib.sha256(CONFIRM_LABEL + nonce + secret_bytes + bytes([suffix])).digest()


def session_key(nonce, secret_bytes, bits):
    nbytes = (bits + 7) // 8
    key = bytearray(HKDF(hashes.SHA256(), nbytes, nonce, SESSION_KEY_LABEL).derive(secret_bytes))
    spare = nbytes * 8 - bits
    if spare:
        key[0] &= 0xFF >> spare
    return bytes(key)


def key_fingerprint(key):
    """Short public digest of a key, safe to print for comparison."""
    return hashlib.sha256(b"fastzip-key-id" + key).hexdigest()[:16]


class Session:
    """One side of a pairing.  Feed it messages; it returns messages to send."""

    def __init__(self, role, bits, cfg, *, clock=time.monotonic, random_bytes=os.urandom,
                 codec=None):
        self.role = Role(role)
        bits = [int(b) for b in bits]
        if len(bits) != cfg.n:
            raise ValueError(f"fingerprint has {len(bits)} bits, config expects {cfg.n}")
        if any(b not in (0, 1) for b in bits):
            raise ValueError("fingerprint bits must be 0 or 1")
        self.cfg = cfg
        self.phase = Phase.INIT
        self.clock = clock
        self._random = random_bytes
        self._codec = codec or ReedSolomon(P130)
        self._bits = bits
        self._nonce_local = random_bytes(NONCE_BYTES)
        self.nonce = None
        self._pake = None
        self._pake_a = self._pake_b = None
        self._keys = None
        self._secret = None
        self.key = None
        self.reason = None
        self.deadline = None
        self.marks = {}
        self.compute_time = 0.0

    # -- public API ---------------------------------------------------------

    @property
    def finished(self):
        return self.phase in (Phase.DONE, Phase.ABORTED)

    def start(self):
        t0 = time.perf_counter()
        self.marks["start"] = self.clock()
        self._arm()
        out = []
        if self.role is Role.INITIATOR:
            out.append(self.cfg.hello(self._nonce_local).encode())
        self.compute_time += time.perf_counter() - t0
        return out

    def receive(self, msg):
        if self.finished:
            return []
        t0 = time.perf_counter()
        try:
            if msg.type == MsgType.ABORT:
                self._fail(_reason_name(msg.payload))
                return []
            handler = self._expected().get(msg.type)
            if handler is None:
                raise ProtocolViolation(f"{msg.type.name} not expected in {self.phase.value}")
            return handler(msg)
        except ProtocolViolation as exc:
            return self._abort(AbortCode.ProtocolViolation, str(exc))
        finally:
            self.compute_time += time.perf_counter() - t0

    def tick(self):
        """Enforce the current deadline; returns an ABORT to send if it fired."""
        if self.finished or self.deadline is None or self.clock() < self.deadline:
            return []
        code = AbortCode.ConfirmTimeout if self.phase is Phase.CONFIRMING else AbortCode.Timeout
        return self._abort(code)

    def outcome(self):
        return Outcome(self.key, self.reason, self.timings())

    def timings(self):
        """Phase durations in seconds from this side's clock."""
        m = self.marks
        out = {}
        if "start" in m and "amplified" in m:
            out["amplification"] = m["amplified"] - m["start"]
        if "amplified" in m and "committed" in m:
            out["commitment"] = m["committed"] - m["amplified"]
        if "committed" in m and "end" in m:
            out["confirmation"] = m["end"] - m["committed"]
        if "start" in m and "end" in m:
            out["total"] = m["end"] - m["start"]
        out["compute"] = self.compute_time
        return out

    # -- transitions --------------------------------------------------------

    def _expected(self):
        a = self.role is Role.INITIATOR
        table = {
            Phase.INIT: {MsgType.HELLO: self._on_hello},
            Phase.AMPLIFYING: {(MsgType.PAKE_B if a else MsgType.PAKE_A): self._on_pake},
            Phase.COMMITTING: {} if a else {MsgType.COMMIT: self._on_commit},
            Phase.CONFIRMING: {(MsgType.CONFIRM_B if a else MsgType.CONFIRM_A): self._on_confirm},
        }
        return table.get(self.phase, {})

    def _on_hello(self, msg):
        peer = Hello.decode(msg)
        mine = self.cfg.hello(self._nonce_local)
        if self.role is Role.INITIATOR:
            agreed = negotiate(mine, peer)
        else:
            agreed = negotiate(peer, mine)
        if isinstance(agreed, AbortCode):
            return self._abort(agreed)
        self.nonce = agreed
        self.phase = Phase.AMPLIFYING
        self._pake = BitPake(self._bits, self._random)
        self._arm()
        if self.role is Role.INITIATOR:
            return [Message(MsgType.PAKE_A, self._pake.message)]
        return [mine.encode()]

    def _on_pake(self, msg):
        shared = self._pake.shared(msg.payload)
        if self.role is Role.INITIATOR:
            msg_a, msg_b = self._pake.message, msg.payload
        else:
            msg_a, msg_b = msg.payload, self._pake.message
        own = self._pake.message
        self._pake.wipe()
        self._pake = None
        self._keys = derive_keys(self.nonce, msg_a, msg_b, shared, self.cfg.blocks)
        self.marks["amplified"] = self.clock()
        self.phase = Phase.COMMITTING
        if self.role is Role.INITIATOR:
            return self._send_commit()
        self._arm()
        return [Message(MsgType.PAKE_B, own)]

    def _send_commit(self):
        cfg = self.cfg
        self._secret = int.from_bytes(self._random((cfg.secret_bits + 7) // 8), "big")
        self._secret &= (1 << cfg.secret_bits) - 1
        payload = bytearray()
        p = self._codec.p
        for blk, part in enumerate(self._split(self._secret)):
            shares = self._codec.encode(part, cfg.n, cfg.d)
            for c, k in zip(shares, self._keys[blk]):
                payload += ((c + k) % p).to_bytes(ELEMENT_BYTES, "big")
        h = confirm_tag(self.nonce, self._secret_bytes(), 0)
        self.marks["committed"] = self.clock()
        self.phase = Phase.CONFIRMING
        self._arm()
        return [Message(MsgType.COMMIT, bytes(payload)), Message(MsgType.CONFIRM_A, h)]

    def _on_commit(self, msg):
        cfg = self.cfg
        expect = cfg.blocks * cfg.n * ELEMENT_BYTES
        if len(msg.payload) != expect:
            raise ProtocolViolation(f"COMMIT payload is {len(msg.payload)} bytes, expected {expect}")
        p = self._codec.p
        parts = []
        for blk in range(cfg.blocks):
            base = blk * cfg.n * ELEMENT_BYTES
            shares = []
            for i in range(cfg.n):
                off = base + i * ELEMENT_BYTES
                com = int.from_bytes(msg.payload[off:off + ELEMENT_BYTES], "big")
                # out-of-range values are folded into the field, not rejected,
                # so a corrupted share is just one more error to correct
                shares.append((com - self._keys[blk][i]) % p)
            part = self._codec.decode(shares, cfg.d)
            if part is None or part >= 1 << BLOCK_BITS[cfg.secret_bits][blk]:
                return self._abort(AbortCode.DecodeFailure)
            parts.append(part)
        self._secret = self._join(parts)
        self.marks["committed"] = self.clock()
        self.phase = Phase.CONFIRMING
        self._arm()
        return []

    def _on_confirm(self, msg):
        if len(msg.payload) != 32:
            raise ProtocolViolation("confirmation tag must be 32 bytes")
        sb = self._secret_bytes()
        if self.role is Role.INITIATOR:
            if not hmac.compare_digest(msg.payload, confirm_tag(self.nonce, sb, 1)):
                return self._abort(AbortCode.HashMismatch)
            self._finish(sb)
            return []
        if not hmac.compare_digest(msg.payload, confirm_tag(self.nonce, sb, 0)):
            return self._abort(AbortCode.HashMismatch)
        reply = Message(MsgType.CONFIRM_B, confirm_tag(self.nonce, sb, 1))
        self._finish(sb)
        return [reply]

    # -- helpers ------------------------------------------------------------

    def _split(self, secret):
        widths = BLOCK_BITS[self.cfg.secret_bits]
        parts, shift = [], sum(widths)
        for w in widths:
            shift -= w
            parts.append((secret >> shift) & ((1 << w) - 1))
        return parts

    def _join(self, parts):
        out = 0
        for w, part in zip(BLOCK_BITS[self.cfg.secret_bits], parts):
            out = (out << w) | part
        return out

    def _secret_bytes(self):
        return self._secret.to_bytes((self.cfg.secret_bits + 7) // 8, "big")

    def _arm(self):
        self.deadline = self.clock() + self.cfg.confirm_timeout

    def _finish(self, secret_bytes):
        self.key = session_key(self.nonce, secret_bytes, self.cfg.secret_bits)
        self.phase = Phase.DONE
        self.marks["end"] = self.clock()
        self._zeroize()

    def _abort(self, code, detail=""):
        self._fail(code.name)
        return [Message.abort(code)]

    def _fail(self, reason):
        self.reason = reason
        self.key = None
        self.phase = Phase.ABORTED
        self.marks["end"] = self.clock()
        self._zeroize()

    def _zeroize(self):
        if self._pake is not None:
            self._pake.wipe()
        self._pake = None
        self._keys = None
        self._secret = None
        self._bits = None
        self.deadline = None

    def secret_fields(self):
        """Names of secret-bearing attributes that are currently populated."""
        names = ("_pake", "_keys", "_secret", "_bits")
        return [n for n in names if getattr(self, n) is not None]


def _reason_name(payload):
    if len(payload) == 1:
        try:
            return AbortCode(payload[0]).name
        except ValueError:
            pass
    return "ProtocolViolation"


def run_session(cfg, bits, channel, role, clock=time.monotonic, random_bytes=os.urandom):
    """Drive one session over a blocking channel until it finishes."""
    s = Session(role, bits, cfg, clock=clock, random_bytes=random_bytes)
    for m in s.start():
        channel.send(m)
    while not s.finished:
        wait = max(0.0, s.deadline - clock())
        msg = channel.recv(timeout=wait)
        out = s.receive(msg) if msg is not None else s.tick()
        for m in out:
            channel.send(m)
    return s.outcome()
