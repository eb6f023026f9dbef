"""Security sizing: offline guessing odds, brute-force cost, bit budgets.

All probabilities are exact :class:`fractions.Fraction` values built from
integer binomials; ``log2`` helpers convert them for display.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from scipy.stats import binom

from .errors import AttackImpossible, NoFiniteSize, ThresholdTooLow
from .quantizer import OUTPUT_BITS, SIMILARITY
from .signals import WINDOW_SECONDS

CONVENTIONS = ("inclusive", "exclusive")

TABLE1_ROWS = ((0.95, 40), (0.90, 60), (0.85, 80), (0.80, 100), (0.75, 120), (0.70, 140))

# Published per-sensor bit budgets for the fPAKE column; these come from the
# measured fingerprints and are not a closed-form function of the threshold.
FPAKE_BITS = {"Acv": 140, "Ach": 120, "Gyr": 50, "Bar": 60}


def _frac(x):
    # str() keeps 0.9 as 9/10 rather than its binary float expansion
    return x if isinstance(x, Fraction) else Fraction(str(x))


def guess_bits(n, thr):
    """m = ceil((2*thr - 1) * n), exact."""
    return math.ceil((2 * _frac(thr) - 1) * n)


def _check_thr(thr):
    t = _frac(thr)
    if t <= Fraction(1, 2):
        raise ThresholdTooLow(f"similarity threshold {thr} must exceed 0.5")
    if t > 1:
        raise ValueError("similarity threshold cannot exceed 1")
    return t


def tail_sum(n, m):
    """sum_{i=m}^{n} C(n, i) as an integer."""
    i = max(m, 0)
    if i > n:
        return 0
    c = math.comb(n, i)
    total = c
    # walk the row with the ratio C(n, i+1) / C(n, i) = (n - i) / (i + 1)
    for i in range(i, n):
        c = c * (n - i) // (i + 1)
        total += c
    return total


def offline_guess_probability(n, thr, convention="exclusive"):
    if n < 1:
        raise ValueError("n must be positive")
    _check_thr(thr)
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    m = guess_bits(n, thr)
    lo = m if convention == "inclusive" else m + 1
    return Fraction(tail_sum(n, lo), 2 ** n)


def log2_fraction(p):
    p = Fraction(p)
    if p <= 0:
        return -math.inf
    # math.log2 accepts arbitrarily large ints without overflow
    return math.log2(p.numerator) - math.log2(p.denominator)


def min_fingerprint_bits(thr, target_log2_p=-20, granularity=1,
                         convention="exclusive", limit=100_000):
    """Smallest multiple of ``granularity`` with offline probability < 2**target."""
    t = _check_thr(thr)
    if t <= Fraction(3, 4):
        raise NoFiniteSize("offline protection needs a threshold above 0.75")
    bound = Fraction(2) ** target_log2_p if isinstance(target_log2_p, int) else None
    n = granularity
    while n <= limit:
        if guess_bits(n, t) >= n:
            # no tolerance left at this size, so the exclusive sum is vacuous
            n += granularity
            continue
        lo = guess_bits(n, t) + (convention == "exclusive")
        # float screen only skips sizes that clearly miss the bound
        if binom.logsf(lo - 1, n, 0.5) / math.log(2) > target_log2_p + 0.01:
            n += granularity
            continue
        p = offline_guess_probability(n, t, convention)
        if (p < bound) if bound is not None else (log2_fraction(p) < target_log2_p):
            return n
        n += granularity
    raise NoFiniteSize(f"no size up to {limit} bits reaches 2^{target_log2_p}")


def falling(x, k):
    """Falling factorial x (x-1) ... (x-k+1)."""
    out = 1
    for j in range(k):
        out *= x - j
    return out


def brute_force_complexity(n, thr, i_correct):
    """log2 of n^(d) / i^(d): expected decode attempts, in units of T."""
    d = guess_bits(n, thr)
    if not 0 <= i_correct <= n:
        raise ValueError("i_correct must lie in [0, n]")
    if i_correct < d:
        raise AttackImpossible(f"{i_correct} correct parts < {d} needed to decode")
    return log2_fraction(Fraction(falling(n, d), falling(i_correct, d)))


def brute_force_literal(n, thr):
    """log2 of n^(m) / (n-m)^(m), or ``None`` where the denominator vanishes."""
    m = guess_bits(n, thr)
    den = falling(n - m, m)
    if den <= 0:
        return None
    return log2_fraction(Fraction(falling(n, m), den))


def complexity_floor(n, thr):
    """Minimum brute-force cost over the ambiguity interval i in [d, ceil(thr n))."""
    d = guess_bits(n, thr)
    hi = math.ceil(_frac(thr) * n)
    if hi <= d:
        return None
    return min(brute_force_complexity(n, thr, i) for i in range(d, hi))


def fuzzy_commitment_bits(thr, target=128):
    t = _check_thr(thr)
    return math.ceil(target + 2 * (1 - t) * target)


def pairing_time(required_bits, bits_per_window, window_length):
    if required_bits <= 0 or bits_per_window <= 0 or window_length <= 0:
        raise ValueError("all arguments must be positive")
    return -(-required_bits // bits_per_window) * window_length


def fused_pairing_time(required_bits, modalities, bits=None, lengths=None):
    bits = bits or OUTPUT_BITS
    lengths = lengths or WINDOW_SECONDS
    per_window = sum(bits[m] for m in modalities)
    return pairing_time(required_bits, per_window, max(lengths[m] for m in modalities))


@dataclass(frozen=True)
class SecurityProfile:
    thr: Fraction
    n: int
    m: int
    p_offline: Fraction
    p_offline_inclusive: Fraction
    log2_complexity: float
    log2_complexity_literal: float = None

    @property
    def log2_p(self):
        return log2_fraction(self.p_offline)

    @property
    def log2_p_inclusive(self):
        return log2_fraction(self.p_offline_inclusive)


def profile(thr, n):
    t = _check_thr(thr)
    return SecurityProfile(
        thr=t,
        n=n,
        m=guess_bits(n, t),
        p_offline=offline_guess_probability(n, t, "exclusive"),
        p_offline_inclusive=offline_guess_probability(n, t, "inclusive"),
        log2_complexity=complexity_floor(n, t),
        log2_complexity_literal=brute_force_literal(n, t),
    )


def table1():
    return [profile(thr, n) for thr, n in TABLE1_ROWS]


def format_table1(rows=None, csv=False):
    rows = rows or table1()
    lines = []
    if csv:
        lines.append("threshold,bits,m,log2_p_exclusive,log2_p_inclusive,log2_complexity_floor")
        for r in rows:
            lines.append(f"{float(r.thr):.2f},{r.n},{r.m},{r.log2_p:.3f},"
                         f"{r.log2_p_inclusive:.3f},{r.log2_complexity:.2f}")
        return "\n".join(lines) + "\n"
    lines.append(f"{'thr':>5} {'bits':>5} {'m':>4} {'log2 P (excl)':>14} "
                 f"{'log2 P (incl)':>14} {'log2 C/T floor':>15}")
    for r in rows:
        lines.append(f"{float(r.thr) * 100:4.0f}% {r.n:5d} {r.m:4d} {r.log2_p:14.2f} "
                     f"{r.log2_p_inclusive:14.2f} {r.log2_complexity:15.2f}")
    lines.append("")
    lines.append("* P sums C(n,i)/2^n from i=m+1 (excl) or i=m (incl). The 90% row is")
    lines.append("  below 2^-20 only under the exclusive sum.")
    lines.append("* C/T floor: min over i in [m, ceil(thr*n)) of log2(n^(m)/i^(m)).")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Table2Row:
    sensors: tuple
    threshold: Fraction
    fpake_bits: int
    fcom_bits: int
    fpake_time: float
    fcom_time: float


def table2_row(modalities, fpake_bits=None):
    modalities = tuple(modalities)
    thr = fused_threshold_for(modalities)
    if fpake_bits is None:
        if len(modalities) != 1:
            raise ValueError("fused rows need an explicit fPAKE bit budget")
        fpake_bits = FPAKE_BITS[modalities[0]]
    fcom = fuzzy_commitment_bits(published_percent(thr))
    return Table2Row(modalities, thr, fpake_bits, fcom,
                     fused_pairing_time(fpake_bits, modalities),
                     fused_pairing_time(fcom, modalities))


def published_percent(thr):
    """Truncate a threshold to one decimal of a percent, as thresholds are quoted.

    The entropy-loss sizing is sensitive to this: 15/16 gives 144 bits while
    the quoted 93.7% gives 145.
    """
    return Fraction(math.floor(Fraction(thr) * 1000), 1000)


def fused_threshold_for(modalities):
    total = sum(OUTPUT_BITS[m] for m in modalities)
    return sum(OUTPUT_BITS[m] * SIMILARITY[m] for m in modalities) / total


def table2():
    return [table2_row((m,)) for m in ("Acv", "Ach", "Gyr", "Bar")]


def format_table2(rows=None, csv=False):
    rows = rows or table2()
    if csv:
        out = ["sensors,threshold,fpake_bits,fcom_bits,fpake_time_s,fcom_time_s"]
        out += [f"{'+'.join(r.sensors)},{float(r.threshold):.4f},{r.fpake_bits},"
                f"{r.fcom_bits},{r.fpake_time:g},{r.fcom_time:g}" for r in rows]
        return "\n".join(out) + "\n"
    out = [f"{'sensors':<16}{'thr':>7}{'fPAKE':>7}{'F.com':>7}{'t_fPAKE':>9}{'t_F.com':>9}"]
    out += [f"{'+'.join(r.sensors):<16}{float(published_percent(r.threshold)) * 100:6.1f}%{r.fpake_bits:7d}"
            f"{r.fcom_bits:7d}{r.fpake_time:9g}{r.fcom_time:9g}" for r in rows]
    return "\n".join(out) + "\n"
