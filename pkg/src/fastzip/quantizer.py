"""Median-threshold quantization and multi-sensor fingerprint fusion."""

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DataError, IncompatibleFingerprints, NoSensors
from .signals import CHANNEL_RATE, CHANNELS, WINDOW_SECONDS

OUTPUT_BITS = {"Acv": 24, "Ach": 24, "Gyr": 16, "Bar": 12}

SIMILARITY = {
    "Acv": Fraction(17, 24),
    "Ach": Fraction(18, 24),
    "Gyr": Fraction(15, 16),
    "Bar": Fraction(11, 12),
}

# Acv/Ach medians get a small noise margin proportional to the window's sigma.
MEDIAN_DELTA_SIGMA = {"Acv": 0.05, "Ach": 0.05, "Gyr": 0.0, "Bar": 0.0}

SHORT_NAMES = {"Acv": "V", "Ach": "H", "Gyr": "G", "Bar": "B"}


@dataclass(frozen=True)
class QuantizerParams:
    modality: str
    input_len: int
    output_bits: int
    delta_sigma: float = 0.0
    epsilon: int = None

    def __post_init__(self):
        if not 1 <= self.output_bits <= self.input_len:
            raise ValueError("need 1 <= output_bits <= input_len")

    @classmethod
    def default(cls, modality):
        n = int(round(CHANNEL_RATE[modality] * WINDOW_SECONDS[modality]))
        return cls(modality, n, OUTPUT_BITS[modality], MEDIAN_DELTA_SIGMA[modality])


def quantization_points(n, m, epsilon=None):
    """Sample indices for M bits out of N samples.

    By default the points sit at the centres of M equal slices.  With an
    explicit ``epsilon`` they are spaced ``ceil(N/M) + epsilon`` apart starting
    from index 0 and clamped to the last sample.
    """
    i = np.arange(1, m + 1)
    if epsilon is None:
        # ties round down so that M == N samples every index exactly once
        p = np.ceil((i - 0.5) * n / m - 0.5).astype(int)
    else:
        step = -(-n // m) + epsilon
        p = (i - 1) * step
    return np.clip(p, 0, n - 1)


def quantize(w, params):
    x = np.asarray(getattr(w, "samples", w), dtype=float)
    if len(x) != params.input_len:
        raise ValueError(f"expected {params.input_len} samples, got {len(x)}")
    if params.delta_sigma:
        thr = float(np.median(x)) + params.delta_sigma * float(np.std(x))
    else:
        # x > median is x > lower middle value; averaging two adjacent
        # floats can round onto one of them and break the balance
        k = (len(x) - 1) // 2
        thr = float(np.partition(x, k)[k])
    pts = quantization_points(params.input_len, params.output_bits, params.epsilon)
    return (x[pts] > thr).astype(np.uint8)


@dataclass(frozen=True)
class Segment:
    modality: str
    offset: int
    length: int
    threshold: Fraction


@dataclass(frozen=True)
class Fingerprint:
    bits: np.ndarray
    segments: tuple
    start_time: float = 0.0

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if np.any(bits > 1):
            raise ValueError("bits must be 0 or 1")
        if sum(s.length for s in self.segments) != len(bits):
            raise ValueError("segment lengths do not cover the bit string")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "segments", tuple(self.segments))

    def __len__(self):
        return len(self.bits)

    @property
    def modalities(self):
        return tuple(s.modality for s in self.segments)

    @property
    def fused_threshold(self):
        total = sum(s.length for s in self.segments)
        return sum(s.length * s.threshold for s in self.segments) / total

    @property
    def label(self):
        return "+".join(self.modalities)

    def bitstring(self):
        return "".join("1" if b else "0" for b in self.bits)

    def segment_bits(self, modality):
        for s in self.segments:
            if s.modality == modality:
                return self.bits[s.offset:s.offset + s.length]
        raise KeyError(modality)


def fuse(subs, thresholds=None, start_time=0.0):
    """Concatenate per-modality bits in canonical order.

    ``subs`` maps modality -> bit array (or is a sequence of pairs).
    """
    thresholds = thresholds or SIMILARITY
    items = dict(subs)
    if not items:
        raise NoSensors("nothing to fuse")
    unknown = set(items) - set(CHANNELS)
    if unknown:
        raise ValueError(f"unknown modalities {sorted(unknown)}")
    segments, chunks, offset = [], [], 0
    for ch in CHANNELS:
        if ch not in items:
            continue
        b = np.asarray(items[ch], dtype=np.uint8)
        segments.append(Segment(ch, offset, len(b), Fraction(thresholds[ch])))
        chunks.append(b)
        offset += len(b)
    return Fingerprint(np.concatenate(chunks), tuple(segments), start_time)


def fused_threshold(modalities, bits=None, thresholds=None):
    bits = bits or OUTPUT_BITS
    thresholds = thresholds or SIMILARITY
    total = sum(bits[m] for m in modalities)
    return sum(bits[m] * Fraction(thresholds[m]) for m in modalities) / total


def hamming_similarity(f, g):
    if len(f) != len(g) or (
        getattr(f, "segments", None) is not None
        and getattr(g, "segments", None) is not None
        and [(s.modality, s.length) for s in f.segments]
        != [(s.modality, s.length) for s in g.segments]
    ):
        raise IncompatibleFingerprints("fingerprints differ in length or layout")
    a = np.asarray(getattr(f, "bits", f))
    b = np.asarray(getattr(g, "bits", g))
    if len(a) == 0:
        raise IncompatibleFingerprints("empty fingerprints")
    return float(np.count_nonzero(a == b)) / len(a)


def accepted(f, g):
    """Pairing predicate: similarity at or above the fused threshold."""
    a, b = f.bits, g.bits
    matches = int(np.count_nonzero(a == b))
    return Fraction(matches, len(a)) >= f.fused_threshold


# --- dump format: "<start_time> <modalities> <bits>" ------------------------

def format_fingerprint(f):
    return f"{f.start_time:g} {f.label} {f.bitstring()}"


def parse_fingerprint(line, thresholds=None):
    thresholds = thresholds or SIMILARITY
    parts = line.split()
    if len(parts) != 3:
        raise DataError(f"expected '<start_time> <modalities> <bits>', got {line!r}")
    try:
        start = float(parts[0])
    except ValueError as exc:
        raise DataError(f"bad start time {parts[0]!r}") from exc
    mods = parts[1].split("+")
    bitstr = parts[2]
    if set(bitstr) - {"0", "1"}:
        raise DataError("bits must be a 0/1 string")
    if any(m not in OUTPUT_BITS for m in mods):
        raise DataError(f"unknown modality in {parts[1]!r}")
    expected = sum(OUTPUT_BITS[m] for m in mods)
    if len(mods) == 1 and len(bitstr) != expected:
        # single-modality dumps may carry concatenated windows
        lengths = {mods[0]: len(bitstr)}
    elif len(bitstr) != expected:
        raise DataError(f"{parts[1]} needs {expected} bits, got {len(bitstr)}")
    else:
        lengths = {m: OUTPUT_BITS[m] for m in mods}
    bits = np.frombuffer(bitstr.encode(), dtype=np.uint8) - ord("0")
    subs, off = {}, 0
    for m in CHANNELS:
        if m in lengths:
            subs[m] = bits[off:off + lengths[m]]
            off += lengths[m]
    if [m for m in CHANNELS if m in mods] != mods:
        raise DataError("modalities must be listed in canonical order Acv+Ach+Gyr+Bar")
    return fuse(subs, thresholds, start)


def write_fingerprints(fps, path):
    Path(path).write_text("".join(format_fingerprint(f) + "\n" for f in fps))


def read_fingerprints(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return [parse_fingerprint(line) for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")]
