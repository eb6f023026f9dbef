import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastzip.errors import InvalidCode
from fastzip.fpake.field import (
    P130,
    ReedSolomon,
    ecc_decode,
    ecc_encode,
    from_bytes,
    interpolate,
    poly_divmod,
    poly_eval,
    poly_mul,
    to_bytes,
)

from oracles import constant_term, majority_decode_batch, subset_predictors

SMALL_P = 31
TOY_P = 2**31 - 1


def corrupt(shares, positions, rng, p):
    out = list(shares)
    for i in positions:
        out[i] = (out[i] + rng.randrange(1, p)) % p
    return out


def test_polynomial_helpers():
    p = 97
    a, b = [1, 2, 3], [5, 0, 1]
    q, r = poly_divmod(poly_mul(a, b, p), b, p)
    assert q == a and r == []
    assert poly_eval([1, 2, 3], 2, p) == 17
    ys = [poly_eval([4, 0, 7], x, p) for x in range(1, 6)]
    assert interpolate(ys, p) == [4, 0, 7]


def test_degree_zero_shares_equal_secret():
    assert ecc_encode(1234, 7, 1) == [1234] * 7


def test_no_redundancy_interpolates():
    rng = random.Random(1)
    shares = ecc_encode(99, 6, 6, rng)
    assert ecc_decode(shares, 6) == 99
    assert constant_term(shares, range(6), P130) == 99


def test_clean_decode_n10_d6():
    rng = random.Random(2)
    for _ in range(20):
        s = rng.randrange(P130)
        assert ecc_decode(ecc_encode(s, 10, 6, rng), 6) == s


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 64), st.data())
def test_round_trip_within_budget(n, data):
    d = data.draw(st.integers(1, n))
    e = (n - d) // 2
    t = data.draw(st.integers(0, e))
    seed = data.draw(st.integers(0, 2**32))
    rng = random.Random(seed)
    s = rng.randrange(P130)
    shares = ecc_encode(s, n, d, rng)
    bad = rng.sample(range(n), t)
    assert ecc_decode(corrupt(shares, bad, rng, P130), d) == s


def test_every_error_count_at_n48():
    rng = random.Random(3)
    n, d = 48, 22
    for t in range((n - d) // 2 + 1):
        s = rng.randrange(P130)
        shares = corrupt(ecc_encode(s, n, d, rng), rng.sample(range(n), t), rng, P130)
        assert ecc_decode(shares, d) == s


def test_beyond_twice_budget_never_returns_secret():
    rng = random.Random(4)
    n, d = 20, 8
    for _ in range(200):
        s = rng.randrange(P130)
        shares = corrupt(ecc_encode(s, n, d, rng), rng.sample(range(n), 2 * ((n - d) // 2) + 1),
                         rng, P130)
        assert ecc_decode(shares, d) != s


def test_invalid_parameters():
    with pytest.raises(InvalidCode):
        ecc_encode(1, 4, 5)
    with pytest.raises(InvalidCode):
        ecc_decode([1, 2, 3], 0)
    with pytest.raises(InvalidCode):
        ReedSolomon(7).encode(1, 7, 3)
    with pytest.raises(ValueError):
        ecc_encode(P130, 4, 2)


def test_element_bytes_round_trip():
    for x in (0, 1, P130 - 1):
        b = to_bytes(x)
        assert len(b) == 17 and from_bytes(b) == x


@pytest.mark.parametrize("n,d", [(5, 1), (6, 3), (7, 2), (8, 4)])
def test_small_field_matches_oracle(n, d):
    rng = random.Random(n * 100 + d)
    codec = ReedSolomon(SMALL_P)
    preds = subset_predictors(n, d, SMALL_P)
    words = []
    for _ in range(100):
        s = rng.randrange(SMALL_P)
        shares = codec.encode(s, n, d, rng)
        t = rng.randint(0, n - d)
        words.append(corrupt(shares, rng.sample(range(n), t), rng, SMALL_P))
    expected = majority_decode_batch(words, d, SMALL_P, preds)
    assert [codec.decode(w, d) for w in words] == expected


def test_one_guess_toy_scale():
    """A guess below 2*thr - 1 similarity leaves fewer than d clean shares.

    Every d-subset then contains a share masked by an unknown key, so the
    candidate set hits the secret only by field collision.
    """
    rng = random.Random(5)
    n, thr = 10, 0.8
    d = math.ceil((2 * thr - 1) * n)
    codec = ReedSolomon(TOY_P)
    subsets = list(itertools.combinations(range(n), d))
    hits = 0
    trials = 100
    for _ in range(trials):
        s = rng.randrange(TOY_P)
        shares = codec.encode(s, n, d, rng)
        clean = rng.sample(range(n), d - 1)
        seen = [c if i in clean else rng.randrange(TOY_P) for i, c in enumerate(shares)]
        if any(constant_term(seen, sub, TOY_P) == s for sub in subsets):
            hits += 1
    # collision bound: trials * C(n, d) / p is about 1e-5
    assert hits == 0
