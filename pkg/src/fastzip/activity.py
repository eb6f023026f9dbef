"""Entropy gate for sensor windows: average power, SNR and prominent peaks."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PowerUndefined, SnrUndefined
from .signals import WINDOW_SECONDS, PipelineConfig, cut_window

PEAK_CHANNELS = ("Acv", "Ach")

# A negative SNR floor disables the gate, since |SNR| >= 0 always exceeds it.
# Zero-mean channels (Acv after gravity removal, Gyr, mean-subtracted Bar)
# have a sign- and scale-meaningless mean, so only Ach is gated on SNR.
SNR_OFF = -1.0


@dataclass(frozen=True)
class ActivityMetrics:
    avg_power_db: float
    snr: float
    prominent_peaks: int = None


@dataclass(frozen=True)
class ActivityThresholds:
    min_power_db: dict = field(default_factory=lambda: {
        "Acv": -20.0, "Ach": -20.0, "Gyr": -35.0, "Bar": -30.0})
    min_snr: dict = field(default_factory=lambda: {
        "Acv": SNR_OFF, "Ach": 0.5, "Gyr": SNR_OFF, "Bar": SNR_OFF})
    min_peaks: dict = field(default_factory=lambda: {"Acv": 1, "Ach": 1})
    peak_height_ratio: float = 0.25
    peak_min_distance: int = 50

    def __post_init__(self):
        if not 0 < self.peak_height_ratio < 1:
            raise ValueError("peak_height_ratio must lie in (0, 1)")
        if self.peak_min_distance < 0:
            raise ValueError("peak_min_distance must be non-negative")
        for table in (self.min_power_db, self.min_snr, self.min_peaks):
            for k, v in table.items():
                if not math.isfinite(v):
                    raise ValueError(f"threshold for {k} must be finite")

    @classmethod
    def from_config(cls, values):
        """Build from flat ``key = value`` entries such as ``min_power_db.Gyr = -35``."""
        base = cls()
        tables = {}
        for name in ("min_power_db", "min_snr", "min_peaks"):
            t = dict(getattr(base, name))
            for k, v in values.items():
                if k.startswith(name + "."):
                    t[k.split(".", 1)[1]] = int(v) if name == "min_peaks" else float(v)
            tables[name] = t
        return cls(
            **tables,
            peak_height_ratio=float(values.get("peak_height_ratio", base.peak_height_ratio)),
            peak_min_distance=int(values.get("peak_min_distance", base.peak_min_distance)),
        )


@dataclass(frozen=True)
class WindowSchedule:
    window_length: dict = field(default_factory=lambda: dict(WINDOW_SECONDS))
    step: float = 5.0

    def __post_init__(self):
        for k, v in self.window_length.items():
            if not 0 < self.step <= v:
                raise ValueError(f"step must satisfy 0 < step <= window length ({k}: {v})")


def _x(w):
    return np.asarray(getattr(w, "samples", w), dtype=float)


def average_power_db(w):
    x = _x(w)
    if x.size == 0:
        raise ValueError("empty window")
    ms = float(np.mean(x * x))
    if ms == 0.0:
        raise PowerUndefined("mean square power is zero")
    return 10.0 * math.log10(ms)


def snr(w):
    """Mean over population standard deviation."""
    x = _x(w)
    if x.size < 2:
        raise ValueError("SNR needs at least 2 samples")
    sigma = float(np.std(x))
    # relative guard: floating noise on a constant window is not signal
    if sigma <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        raise SnrUndefined("zero variance")
    return float(np.mean(x)) / sigma


def prominent_peaks(w, rho, min_distance):
    """Count strict local maxima of height >= rho * max, spaced > min_distance apart.

    Candidates are accepted greedily from the tallest down (ties go to the
    lower index); a candidate within ``min_distance`` samples of an already
    accepted peak is dropped.
    """
    x = _x(w)
    if x.size < 3:
        raise ValueError("peak counting needs at least 3 samples")
    inner = x[1:-1]
    idx = np.nonzero((inner > x[:-2]) & (inner > x[2:]))[0] + 1
    if idx.size == 0:
        return 0
    floor = rho * float(np.max(x))
    idx = idx[x[idx] >= floor]
    order = sorted(idx.tolist(), key=lambda i: (-x[i], i))
    accepted = []
    for i in order:
        if all(abs(i - j) > min_distance for j in accepted):
            accepted.append(i)
    return len(accepted)


def measure(w, thr):
    """Compute the metrics; undefined ones come back as ``None``."""
    try:
        power = average_power_db(w)
    except PowerUndefined:
        power = None
    try:
        ratio = snr(w)
    except SnrUndefined:
        ratio = None
    peaks = None
    if w.channel in PEAK_CHANNELS:
        peaks = prominent_peaks(w, thr.peak_height_ratio, thr.peak_min_distance)
    return ActivityMetrics(power, ratio, peaks)


def passes(w, thr):
    """Return ``(accepted, metrics)``; every metric must strictly beat its floor."""
    m = measure(w, thr)
    ch = w.channel
    ok = (
        m.avg_power_db is not None
        and m.snr is not None
        and m.avg_power_db > thr.min_power_db[ch]
        and abs(m.snr) > thr.min_snr[ch]
    )
    if ok and ch in PEAK_CHANNELS and ch in thr.min_peaks:
        ok = m.prominent_peaks > thr.min_peaks[ch]
    return ok, m


def candidate_starts(stream, sched):
    length = sched.window_length[stream.channel]
    out = []
    k = 0
    while True:
        offset = k * sched.step
        if offset + length > stream.length + 1e-9:
            return out
        out.append(stream.start_time + offset)
        k += 1


def schedule_windows(stream, sched=None, thr=None, pipeline=None):
    """Slide over ``stream`` and keep the processed windows that pass the gate."""
    sched = sched or WindowSchedule()
    thr = thr or ActivityThresholds()
    accepted = []
    for start in candidate_starts(stream, sched):
        w = cut_window(stream, start, pipeline or PipelineConfig())
        if w is not None and passes(w, thr)[0]:
            accepted.append(w)
    return accepted
