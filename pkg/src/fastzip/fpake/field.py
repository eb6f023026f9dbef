"""Prime-field polynomials and a Reed-Solomon codec for Shamir shares.

Shares are evaluations of a degree ``d - 1`` polynomial at ``x = 1..n`` with
the secret as constant term.  Decoding uses Gao's algorithm: interpolate the
received word, run the extended Euclidean algorithm against
``prod (x - x_i)`` until the remainder degree drops below ``(n + d) / 2``,
then divide.  That corrects up to ``(n - d) // 2`` bad shares.
"""

import secrets
from functools import lru_cache
from operator import mul

from ..errors import InvalidCode

P130 = 2 ** 130 - 5
ELEMENT_BYTES = 17


def _trim(a):
    while a and a[-1] == 0:
        a.pop()
    return a


def poly_eval(coeffs, x, p):
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % p
    return acc


def poly_mul(a, b, p):
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] += ai * bj
    return _trim([c % p for c in out])


def poly_sub(a, b, p):
    n = max(len(a), len(b))
    out = [((a[i] if i < len(a) else 0) - (b[i] if i < len(b) else 0)) % p for i in range(n)]
    return _trim(out)


def poly_divmod(a, b, p):
    """Long division; coefficient lists are lowest degree first."""
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    rem = list(a)
    _trim(rem)
    db = len(b) - 1
    inv_lead = pow(b[-1], -1, p)
    if len(rem) <= db:
        return [], rem
    quot = [0] * (len(rem) - db)
    for k in range(len(rem) - 1, db - 1, -1):
        coef = rem[k] * inv_lead % p
        quot[k - db] = coef
        if coef:
            off = k - db
            for j in range(db + 1):
                rem[off + j] = (rem[off + j] - coef * b[j]) % p
    return _trim(quot), _trim(rem[:db])


@lru_cache(maxsize=64)
def _powers(n, d, p):
    """Rows (1, x, x^2, ..., x^(d-1)) mod p for x = 1..n."""
    return tuple(tuple(pow(x, k, p) for k in range(d)) for x in range(1, n + 1))


@lru_cache(maxsize=64)
def _vanishing(n, p):
    """prod_{x=1..n} (X - x)."""
    g0 = [1]
    for x in range(1, n + 1):
        g0 = poly_mul(g0, [(-x) % p, 1], p)
    return tuple(g0)


@lru_cache(maxsize=64)
def _lagrange_columns(n, p):
    """cols[k][i] = coefficient of X^k in the i-th Lagrange basis polynomial."""
    g0 = _vanishing(n, p)
    rows = []
    for i in range(1, n + 1):
        den = 1
        for j in range(1, n + 1):
            if j != i:
                den = den * (i - j) % p
        w = pow(den, -1, p)
        # synthetic division g0 / (X - i), highest coefficient first
        q = [0] * n
        carry = 0
        for k in range(n, 0, -1):
            carry = (g0[k] + carry * i) % p
            q[k - 1] = carry * w % p
        rows.append(q)
    return tuple(tuple(col) for col in zip(*rows))


def interpolate(ys, p):
    """Coefficients of the unique degree < n polynomial through (i, ys[i-1])."""
    cols = _lagrange_columns(len(ys), p)
    return _trim([sum(map(mul, ys, col)) % p for col in cols])


class ReedSolomon:
    """Shamir sharing with error correction over GF(prime)."""

    def __init__(self, prime=P130):
        self.p = prime

    def encode(self, secret, n, d, rng=None):
        if not 1 <= d <= n:
            raise InvalidCode(f"need 1 <= d <= n, got d={d}, n={n}")
        if n >= self.p:
            raise InvalidCode("field too small for that many shares")
        if not 0 <= secret < self.p:
            raise ValueError("secret does not fit the field")
        draw = rng.randrange if rng is not None else secrets.randbelow
        coeffs = [secret] + [draw(self.p) for _ in range(d - 1)]
        p = self.p
        return [sum(map(mul, coeffs, row)) % p for row in _powers(n, d, p)]

    def decode(self, shares, d):
        """Return the constant term, or ``None`` when no codeword is close enough."""
        n = len(shares)
        if not 1 <= d <= n:
            raise InvalidCode(f"need 1 <= d <= n, got d={d}, n={n}")
        p = self.p
        g0 = list(_vanishing(n, p))
        g1 = interpolate([s % p for s in shares], p)
        if len(g1) <= d:
            # already a codeword (degree < d)
            return g1[0] if g1 else 0
        # partial extended Euclid, tracking only the g1 cofactor
        r0, r1 = g0, g1
        v0, v1 = [], [1]
        limit = (n + d) / 2
        while r1 and len(r1) - 1 >= limit:
            q, r = poly_divmod(r0, r1, p)
            r0, r1 = r1, r
            v0, v1 = v1, poly_sub(v0, poly_mul(q, v1, p), p)
        f, rem = poly_divmod(r1, v1, p)
        if rem or len(f) > d:
            return None
        return f[0] if f else 0

    def max_errors(self, n, d):
        return (n - d) // 2


_default = ReedSolomon()


def ecc_encode(secret, n, d, rng=None):
    return _default.encode(secret, n, d, rng)


def ecc_decode(shares, d):
    return _default.decode(shares, d)


def to_bytes(x):
    return int(x).to_bytes(ELEMENT_BYTES, "big")


def from_bytes(b):
    return int.from_bytes(b, "big")
