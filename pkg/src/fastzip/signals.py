"""Raw sensor ingestion and the two-stage smoothing chain.

Raw accelerometer/gyroscope/barometer recordings are resampled to fixed
rates and converted into four context channels:

* ``Acv`` - vertical acceleration (gravity direction)
* ``Ach`` - horizontal acceleration magnitude
* ``Gyr`` - gyroscope axis perpendicular to the road
* ``Bar`` - barometric altitude in metres

Inputs are assumed to already be in world coordinates.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import lfilter, savgol_filter

from .errors import (
    DataError,
    EmptyRecording,
    GravityEstimateDegenerate,
    InvalidPressure,
    WindowTooShort,
)

SENSORS = ("accelerometer3d", "gyroscope3d", "barometer")
SENSOR_WIDTH = {"accelerometer3d": 3, "gyroscope3d": 3, "barometer": 1}
SENSOR_RATE = {"accelerometer3d": 100.0, "gyroscope3d": 100.0, "barometer": 10.0}

CHANNELS = ("Acv", "Ach", "Gyr", "Bar")
CHANNEL_RATE = {"Acv": 100.0, "Ach": 100.0, "Gyr": 100.0, "Bar": 10.0}
WINDOW_SECONDS = {"Acv": 10.0, "Ach": 10.0, "Gyr": 10.0, "Bar": 20.0}

GRAVITY_WINDOW_S = 5.0
MIN_GRAVITY = 1.0  # m/s^2

REFERENCE_PRESSURE_HPA = 1013.25


@dataclass(frozen=True)
class RawRecording:
    """Timestamped rows from one physical sensor.

    ``values`` has shape ``(len(t), width)`` where width is 3 for the
    inertial sensors and 1 for the barometer.
    """

    modality: str
    t: np.ndarray
    values: np.ndarray
    nominal_rate: float

    def __post_init__(self):
        if self.modality not in SENSOR_WIDTH:
            raise ValueError(f"unknown sensor modality {self.modality!r}")
        t = np.asarray(self.t, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape != (len(t), SENSOR_WIDTH[self.modality]):
            raise DataError(
                f"{self.modality} rows need {SENSOR_WIDTH[self.modality]} values, "
                f"got array of shape {values.shape} for {len(t)} timestamps"
            )
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise DataError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0


@dataclass(frozen=True)
class SensorWindow:
    """A uniformly sampled scalar signal for one context channel.

    Used both for whole processed streams and for the fixed-length windows
    cut from them (10 s for Acv/Ach/Gyr, 20 s for Bar).
    """

    channel: str
    samples: np.ndarray
    rate: float
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"{self.channel} window contains NaN or infinity")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def length(self):
        return len(self.samples) / self.rate

    @property
    def end_time(self):
        return self.start_time + self.length

    def with_samples(self, samples):
        return replace(self, samples=samples)

    def window(self, start, seconds):
        """Cut ``seconds`` of signal beginning at absolute time ``start``.

        Returns ``None`` when the stream does not cover the whole window.
        """
        i0 = int(round((start - self.start_time) * self.rate))
        count = int(round(seconds * self.rate))
        if i0 < 0 or i0 + count > len(self.samples):
            return None
        return SensorWindow(self.channel, self.samples[i0:i0 + count],
                            self.rate, self.start_time + i0 / self.rate)


@dataclass(frozen=True)
class FilterChainConfig:
    """Savitzky-Golay -> Gaussian -> optional EWMA -> optional mean removal.

    With ``mean_first`` the mean is removed before any filtering instead of
    after (used for altitude windows).
    """

    sg_window: int
    sg_degree: int
    gaussian_sigma: float
    ewma_alpha: float = None
    mean_subtract: bool = False
    mean_first: bool = False

    def __post_init__(self):
        if self.sg_window < 1 or self.sg_window % 2 == 0:
            raise ValueError("sg_window must be a positive odd integer")
        if not 0 <= self.sg_degree < self.sg_window:
            raise ValueError("sg_degree must satisfy 0 <= degree < window")
        if not self.gaussian_sigma > 0:
            raise ValueError("gaussian_sigma must be positive")
        if self.ewma_alpha is not None and not 0 < self.ewma_alpha <= 1:
            raise ValueError("ewma_alpha must lie in (0, 1]")


# SG(3, 2) fits every 3-point neighbourhood exactly and is therefore an
# identity; kept as published and overridable through the config.
WHOLE_DATA_CHAIN = FilterChainConfig(sg_window=3, sg_degree=2, gaussian_sigma=1.4)

WINDOW_CHAINS = {
    "Acv": FilterChainConfig(5, 3, 1.4, ewma_alpha=0.16),
    "Ach": FilterChainConfig(5, 3, 1.4, ewma_alpha=0.2),
    "Gyr": FilterChainConfig(5, 3, 1.4),
    "Bar": FilterChainConfig(5, 3, 1.4, mean_subtract=True, mean_first=True),
}


def resample(rec, target_rate):
    """Linearly interpolate ``rec`` onto a uniform grid of ``target_rate`` Hz.

    The grid starts at the first timestamp and stops at the last whole step
    that still lies inside the recording.
    """
    if len(rec) < 2:
        raise EmptyRecording(f"{rec.modality}: need at least 2 samples to resample")
    t0 = rec.t[0]
    steps = int(math.floor((rec.t[-1] - t0) * target_rate + 1e-9))
    grid = t0 + np.arange(steps + 1) / target_rate
    cols = [np.interp(grid, rec.t, rec.values[:, j]) for j in range(rec.values.shape[1])]
    return RawRecording(rec.modality, grid, np.column_stack(cols), float(target_rate))


def _gravity_estimates(values, win):
    n = len(values)
    if n < win:
        raise ValueError(
            f"need at least {win} samples ({GRAVITY_WINDOW_S:g} s) to estimate gravity"
        )
    gravity = np.empty_like(values)
    g = None
    for start in range(0, n, win):
        stop = min(start + win, n)
        if stop - start == win:
            g = values[start:stop].mean(axis=0)
            if np.linalg.norm(g) < MIN_GRAVITY:
                raise GravityEstimateDegenerate(
                    f"|g| = {np.linalg.norm(g):.3f} m/s^2 in window starting at sample {start}"
                )
        # a trailing partial window keeps the previous estimate
        gravity[start:stop] = g
    return gravity


def decompose_acceleration(rec):
    """Split 3-axis acceleration into (Acv, Ach) streams.

    Gravity is the per-axis mean over non-overlapping 5 s windows.  Acv is the
    signed projection of the gravity-free acceleration onto the gravity
    direction; Ach is the magnitude of what remains.
    """
    if rec.modality != "accelerometer3d":
        raise ValueError("decompose_acceleration needs accelerometer3d input")
    win = int(round(GRAVITY_WINDOW_S * rec.nominal_rate))
    gravity = _gravity_estimates(rec.values, win)
    unit = gravity / np.linalg.norm(gravity, axis=1, keepdims=True)
    linear = rec.values - gravity
    vertical = np.einsum("ij,ij->i", linear, unit)
    horizontal = np.linalg.norm(linear - vertical[:, None] * unit, axis=1)
    t0 = float(rec.t[0])
    return (SensorWindow("Acv", vertical, rec.nominal_rate, t0),
            SensorWindow("Ach", horizontal, rec.nominal_rate, t0))


def gyro_sky_axis(rec):
    if rec.modality != "gyroscope3d":
        raise ValueError("gyro_sky_axis needs gyroscope3d input")
    return SensorWindow("Gyr", rec.values[:, 2].copy(), rec.nominal_rate, float(rec.t[0]))


def pressure_to_altitude(p):
    """Standard pressure-height formula; ``p`` in hPa, result in metres.

    Accepts scalars or arrays.  Pressures above the reference give negative
    altitudes, which are returned as is.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0)):
        raise InvalidPressure(f"pressure must be positive, got {p!r}")
    alt = 44330.0 * (1.0 - (arr / REFERENCE_PRESSURE_HPA) ** (1.0 / 5.255))
    return float(alt) if alt.ndim == 0 else alt


def barometer_altitude(rec):
    if rec.modality != "barometer":
        raise ValueError("barometer_altitude needs barometer input")
    return SensorWindow("Bar", pressure_to_altitude(rec.values[:, 0]),
                        rec.nominal_rate, float(rec.t[0]))


def ewma(x, alpha):
    """y[0] = x[0]; y[t] = alpha * x[t] + (1 - alpha) * y[t-1]."""
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return x.copy()
    y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[(1.0 - alpha) * x[0]])
    return y


def apply_filter_chain(w, cfg):
    """Run the smoothing chain on a window (or a bare array); same shape out."""
    x = np.asarray(getattr(w, "samples", w), dtype=float)
    if len(x) < cfg.sg_window:
        raise WindowTooShort(f"{len(x)} samples < SG window {cfg.sg_window}")
    if cfg.mean_subtract and cfg.mean_first:
        x = x - x.mean()
    y = savgol_filter(x, cfg.sg_window, cfg.sg_degree, mode="mirror")
    # half-sample symmetric padding keeps an impulse's mass inside the window
    y = gaussian_filter1d(y, cfg.gaussian_sigma, mode="reflect", truncate=4.0)
    if cfg.ewma_alpha is not None:
        y = ewma(y, cfg.ewma_alpha)
    if cfg.mean_subtract and not cfg.mean_first:
        y = y - y.mean()
    return w.with_samples(y) if isinstance(w, SensorWindow) else y


@dataclass
class PipelineConfig:
    whole_data: FilterChainConfig = WHOLE_DATA_CHAIN
    windows: dict = field(default_factory=lambda: dict(WINDOW_CHAINS))


def context_streams(recordings, cfg=None):
    """Turn one device's raw recordings into smoothed Acv/Ach/Gyr/Bar streams.

    ``recordings`` maps sensor modality names to :class:`RawRecording`;
    missing sensors simply yield missing channels.
    """
    cfg = cfg or PipelineConfig()
    out = {}
    acc = recordings.get("accelerometer3d")
    if acc is not None:
        acv, ach = decompose_acceleration(resample(acc, CHANNEL_RATE["Acv"]))
        out["Acv"], out["Ach"] = acv, ach
    gyr = recordings.get("gyroscope3d")
    if gyr is not None:
        out["Gyr"] = gyro_sky_axis(resample(gyr, CHANNEL_RATE["Gyr"]))
    bar = recordings.get("barometer")
    if bar is not None:
        out["Bar"] = barometer_altitude(resample(bar, CHANNEL_RATE["Bar"]))
    return {ch: apply_filter_chain(s, cfg.whole_data) for ch, s in out.items()}


def cut_window(stream, start, cfg=None):
    """Cut the standard-length window at ``start`` and run the per-window chain."""
    cfg = cfg or PipelineConfig()
    w = stream.window(start, WINDOW_SECONDS[stream.channel])
    if w is None:
        return None
    return apply_filter_chain(w, cfg.windows[stream.channel])


# --- CSV input -------------------------------------------------------------

def parse_recording_name(path):
    """``<car>_<spot>_<modality>.csv`` -> (car, spot, modality)."""
    stem = Path(path).stem
    parts = stem.rsplit("_", 2)
    if len(parts) != 3 or parts[2] not in SENSOR_WIDTH:
        raise DataError(f"{Path(path).name}: expected <car>_<spot>_<modality>.csv")
    return tuple(parts)


def read_recording_csv(path, modality=None):
    path = Path(path)
    if modality is None:
        modality = parse_recording_name(path)[2]
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise DataError(f"{path}: missing 't,...' header")
    width = SENSOR_WIDTH.get(modality)
    if width is None:
        raise DataError(f"{path}: unknown modality {modality!r}")
    if len(rows[0]) != width + 1:
        raise DataError(f"{path}: header needs {width} value columns")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise EmptyRecording(f"{path}: no samples")
    if data.shape[1] != width + 1:
        raise DataError(f"{path}: ragged rows")
    return RawRecording(modality, data[:, 0], data[:, 1:], SENSOR_RATE[modality])


def write_recording_csv(rec, path):
    names = ["v1"] if rec.values.shape[1] == 1 else ["x", "y", "z"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *names])
        for t, row in zip(rec.t, rec.values):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
