"""Per-bit password-authenticated Diffie-Hellman over Curve25519.

Every fingerprint position runs its own small PAKE whose "password" is the
single bit at that position.  The bit selects a hashed-to-curve generator
``G[i, bit]``; each side sends ``x * G[i, bit]`` and multiplies the peer's
value by its own ephemeral scalar.  Equal bits give equal shared points,
unequal bits give values neither side (nor an eavesdropper) can link.

Any 32-byte string is a valid X25519 input, so a wrong-bit value never
fails a validity check and cannot act as a bit oracle.  The only rejected
case is a low-order input, which is replaced by a value derived from the
local ephemeral secret.
"""

import hashlib
import hmac
import os
from functools import lru_cache

from nacl.bindings import (
    crypto_core_ed25519_from_uniform,
    crypto_scalarmult,
    crypto_sign_ed25519_pk_to_curve25519,
)

from ..errors import ProtocolViolation
from .field import P130

ELEMENT_BYTES = 32
GEN_LABEL = b"fastzip/pake-generator/v1"
KEY_LABEL = b"pake-key"


@lru_cache(maxsize=None)
def generator(index, bit):
    """Montgomery u-coordinate of the generator for position ``index``.

    Generators do not depend on the session, so they are cached; session
    binding happens in the key derivation.
    """
    seed = hashlib.sha256(GEN_LABEL + index.to_bytes(4, "big") + bytes([bit])).digest()
    point = crypto_core_ed25519_from_uniform(seed)
    return crypto_sign_ed25519_pk_to_curve25519(point)


class BitPake:
    """The local half of ``n`` parallel one-bit PAKEs."""

    def __init__(self, bits, random_bytes=os.urandom):
        self.n = len(bits)
        raw = random_bytes(ELEMENT_BYTES * self.n)
        self._scalars = [raw[i * 32:(i + 1) * 32] for i in range(self.n)]
        self.message = b"".join(
            crypto_scalarmult(x, generator(i, int(b)))
            for i, (x, b) in enumerate(zip(self._scalars, bits))
        )

    def shared(self, peer_message):
        """Shared elements, one per position."""
        if self._scalars is None:
            raise RuntimeError("PAKE state already consumed")
        if len(peer_message) != ELEMENT_BYTES * self.n:
            raise ProtocolViolation(
                f"PAKE payload is {len(peer_message)} bytes, expected {ELEMENT_BYTES * self.n}"
            )
        out = []
        for i, x in enumerate(self._scalars):
            y = peer_message[i * 32:(i + 1) * 32]
            try:
                z = crypto_scalarmult(x, y)
            except RuntimeError:
                # low-order input: substitute something only we can compute
                z = hmac.digest(x, b"remap" + y, "sha256")
            out.append(z)
        return out

    def wipe(self):
        self._scalars = None


def derive_keys(nonce, msg_a, msg_b, shared, blocks=1, prime=P130):
    """Key vectors ``k[block][i]`` as field elements.

    Each key is keyed BLAKE2b over the position, both transmitted group
    elements and the shared element, with the session nonce as the key.
    """
    vectors = []
    for blk in range(blocks):
        row = []
        for i, z in enumerate(shared):
            info = (KEY_LABEL + bytes([blk]) + i.to_bytes(4, "big")
                    + msg_a[i * 32:(i + 1) * 32] + msg_b[i * 32:(i + 1) * 32] + z)
            digest = hashlib.blake2b(info, key=nonce, digest_size=32).digest()
            row.append(int.from_bytes(digest, "big") % prime)
        vectors.append(row)
    return vectors
