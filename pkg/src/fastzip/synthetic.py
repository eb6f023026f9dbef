"""Synthetic in-car sensor recordings.

Every car owns one latent process per physical quantity: road bumps and
roughness (vertical), acceleration/braking ramps (longitudinal), turns
(yaw rate, plus the lateral acceleration they cause) and altitude.  Devices
in the same car observe that process through a per-spot gain plus their own
noise; devices in different cars see independent processes.

A second car can instead *follow* the first along the same route with a
time lag.  It then shares everything the road dictates (turns, altitude and
a fraction of the bumps) while its driver and engine stay independent.
That is the setting for similar-context attacks.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .signals import SENSOR_RATE, RawRecording, REFERENCE_PRESSURE_HPA

SCENARIOS = ("city", "country", "highway", "parking")

# events per minute and amplitudes; artifact-defined, tuned for plausibility
SCENARIO_PARAMS = {
    "city": dict(bump_rate=10.0, ramp_rate=4.0, turn_rate=2.0, altitude_amp=3.0, speed=9.0),
    "country": dict(bump_rate=6.0, ramp_rate=2.0, turn_rate=3.0, altitude_amp=8.0, speed=18.0),
    "highway": dict(bump_rate=3.0, ramp_rate=1.0, turn_rate=0.6, altitude_amp=6.0, speed=30.0),
    "parking": dict(bump_rate=4.0, ramp_rate=5.0, turn_rate=6.0, altitude_amp=1.0, speed=3.0),
}

SPOT_GAIN = {"dashboard": 1.0, "windshield": 0.95, "glovebox": 0.85,
             "door": 0.9, "console": 0.8, "seat": 0.75, "trunk": 0.7}
SPOTS = tuple(SPOT_GAIN)


@dataclass
class SyntheticConfig:
    """Knobs for :func:`generate_synthetic_context`; loadable from ``key = value`` files."""

    accel_noise: float = 0.04      # m/s^2 white noise per axis
    gyro_noise: float = 0.006      # rad/s
    baro_noise: float = 0.006      # hPa (about 5 cm)
    device_vibration: float = 0.03  # m/s^2, independent per device, low-pass
    roughness: float = 0.25        # m/s^2, shared road texture
    yaw_wiggle: float = 0.08       # rad/s, shared steering corrections
    lon_wiggle: float = 0.4        # m/s^2, shared throttle jitter
    yaw_wiggle_hz: float = 1.0
    lon_wiggle_hz: float = 1.2
    bump_amp: float = 1.5
    ramp_amp: float = 1.6
    turn_amp: float = 0.35
    timestamp_jitter: float = 0.0005  # s
    clock_offset: float = 0.003    # s, per-device sync error
    follow_lag: float = 8.0        # s, lag of a following car
    follow_bump_share: float = 0.6  # fraction of bump energy from the shared road
    base_altitude: float = 250.0   # m
    baro_bias: float = 0.3         # hPa, constant per-device offset (std)
    undulation: float = 0.8        # short-scale altitude std, fraction of altitude_amp
    undulation_hz: float = 0.3
    spot_attenuation: float = 1.0  # 0 ignores mounting spot, 1 uses SPOT_GAIN as is
    scenario_overrides: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, values):
        kwargs = {}
        names = {f.name for f in fields(cls)} - {"scenario_overrides"}
        overrides = {}
        for k, v in values.items():
            if k in names:
                kwargs[k] = float(v)
            elif "." in k and k.split(".", 1)[0] in SCENARIOS:
                scen, key = k.split(".", 1)
                overrides.setdefault(scen, {})[key] = float(v)
        return cls(**kwargs, scenario_overrides=overrides)

    def scenario(self, name):
        if name not in SCENARIO_PARAMS:
            raise ValueError(f"unknown scenario {name!r}; pick one of {SCENARIOS}")
        params = dict(SCENARIO_PARAMS[name])
        params.update(self.scenario_overrides.get(name, {}))
        return params


def _lowpass_noise(rng, n, rate, cutoff, sigma):
    """Gaussian noise with roughly ``cutoff`` Hz bandwidth and std ``sigma``."""
    if sigma == 0:
        return np.zeros(n)
    alpha = 1.0 - np.exp(-2 * np.pi * cutoff / rate)
    x = rng.standard_normal(n)
    from scipy.signal import lfilter
    y = lfilter([alpha], [1.0, alpha - 1.0], x)
    y = lfilter([alpha], [1.0, alpha - 1.0], y)
    std = y[n // 10:].std() if n > 20 else y.std()
    return y * (sigma / std) if std > 0 else y


def _events(rng, duration, per_minute):
    count = rng.poisson(per_minute * duration / 60.0)
    return np.sort(rng.uniform(0, duration, count))


def _raised_cosine(t, centre, width):
    u = (t - centre) / width
    out = np.zeros_like(t)
    inside = np.abs(u) < 0.5
    out[inside] = 0.5 * (1 + np.cos(2 * np.pi * u[inside]))
    return out


@dataclass
class CarLatent:
    """Latent per-car processes sampled on a common 100 Hz grid."""

    t: np.ndarray
    vertical: np.ndarray
    longitudinal: np.ndarray
    yaw: np.ndarray
    lateral: np.ndarray
    altitude: np.ndarray
    weather: float


def _route(rng, t, cfg, p):
    """Road-determined parts: turns, altitude, bump sites, road texture."""
    duration = t[-1] - t[0]
    yaw = _lowpass_noise(rng, len(t), 100.0, cfg.yaw_wiggle_hz, cfg.yaw_wiggle)
    for c in _events(rng, duration, p["turn_rate"]):
        amp = rng.choice([-1, 1]) * rng.uniform(0.4, 1.0) * cfg.turn_amp
        yaw += amp * _raised_cosine(t, c, rng.uniform(3.0, 8.0))
    altitude = np.zeros_like(t)
    for _ in range(6):
        period = rng.uniform(40, 400)
        altitude += rng.uniform(0.3, 1.0) * p["altitude_amp"] * np.sin(
            2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    # short crests and dips on top of the long grades
    altitude += _lowpass_noise(rng, len(t), 100.0, cfg.undulation_hz,
                               cfg.undulation * p["altitude_amp"])
    bumps = np.zeros_like(t)
    for c in _events(rng, duration, p["bump_rate"]):
        amp = rng.choice([-1, 1]) * rng.uniform(0.4, 1.0) * cfg.bump_amp
        f = rng.uniform(1.5, 4.0)
        tau = rng.uniform(0.2, 0.5)
        dt = t - c
        on = (dt >= 0) & (dt < 6 * tau)
        bumps[on] += amp * np.exp(-dt[on] / tau) * np.sin(2 * np.pi * f * dt[on])
    texture = _lowpass_noise(rng, len(t), 100.0, 3.0, cfg.roughness)
    return yaw, altitude, bumps + texture


def _driver(rng, t, cfg, p):
    duration = t[-1] - t[0]
    lon = _lowpass_noise(rng, len(t), 100.0, cfg.lon_wiggle_hz, cfg.lon_wiggle)
    for c in _events(rng, duration, p["ramp_rate"]):
        amp = rng.choice([-1, 1]) * rng.uniform(0.4, 1.0) * cfg.ramp_amp
        lon += amp * _raised_cosine(t, c, rng.uniform(2.0, 6.0))
    return lon


def car_latent(rng, duration, cfg, scenario, lead=None):
    """Sample a car's latent processes; ``lead`` makes this car follow another."""
    p = cfg.scenario(scenario)
    t = np.arange(int(round(duration * 100)) + 1) / 100.0
    if lead is None:
        yaw, altitude, road = _route(rng, t, cfg, p)
        weather = rng.normal(0.0, 3.0)
    else:
        lag = int(round(cfg.follow_lag * 100))
        # the follower sees the leader's road `lag` samples later
        yaw = np.concatenate([np.full(lag, lead.yaw[0]), lead.yaw[:len(t) - lag]])
        altitude = np.concatenate([np.full(lag, lead.altitude[0]), lead.altitude[:len(t) - lag]])
        shared = np.concatenate([np.zeros(lag), lead.vertical[:len(t) - lag]])
        _, _, own = _route(rng, t, cfg, p)
        w = cfg.follow_bump_share
        road = np.sqrt(w) * shared + np.sqrt(1 - w) * own
        weather = lead.weather
    lon = _driver(rng, t, cfg, p)
    lateral = p["speed"] * yaw * 0.15  # damped centripetal term
    return CarLatent(t, road, lon, yaw, lateral, altitude, weather)


def _sample_times(rng, start, duration, rate, cfg):
    n = int(np.floor(duration * rate)) + 1
    t = start + np.arange(n) / rate
    if cfg.timestamp_jitter:
        t = t + rng.uniform(-cfg.timestamp_jitter, cfg.timestamp_jitter, n)
        # keep strictly increasing
        t = np.maximum.accumulate(t + np.arange(n) * 1e-9)
    return t


def device_recordings(rng, latent, spot, cfg):
    """Observe a car's latent processes from one mounting spot."""
    gain = 1.0 - cfg.spot_attenuation * (1.0 - SPOT_GAIN[spot])
    duration = latent.t[-1]
    offset = rng.uniform(-cfg.clock_offset, cfg.clock_offset)
    out = {}
    # accelerometer
    t = _sample_times(rng, 0.0, duration, SENSOR_RATE["accelerometer3d"], cfg)
    tq = np.clip(t + offset, 0, duration)
    vib = _lowpass_noise(rng, len(latent.t), 100.0, 5.0, cfg.device_vibration)
    vertical = gain * latent.vertical + vib
    ax = np.interp(tq, latent.t, gain * latent.longitudinal)
    ay = np.interp(tq, latent.t, gain * latent.lateral)
    az = 9.81 + np.interp(tq, latent.t, vertical)
    acc = np.column_stack([ax, ay, az]) + rng.normal(0, cfg.accel_noise, (len(t), 3))
    out["accelerometer3d"] = RawRecording("accelerometer3d", t, acc, SENSOR_RATE["accelerometer3d"])
    # gyroscope: rigid-body rotation is the same everywhere in the cabin
    t = _sample_times(rng, 0.0, duration, SENSOR_RATE["gyroscope3d"], cfg)
    tq = np.clip(t + offset, 0, duration)
    gyr = rng.normal(0, cfg.gyro_noise, (len(t), 3))
    gyr[:, 2] += np.interp(tq, latent.t, latent.yaw)
    out["gyroscope3d"] = RawRecording("gyroscope3d", t, gyr, SENSOR_RATE["gyroscope3d"])
    # barometer
    t = _sample_times(rng, 0.0, duration, SENSOR_RATE["barometer"], cfg)
    tq = np.clip(t + offset, 0, duration)
    h = cfg.base_altitude + np.interp(tq, latent.t, latent.altitude)
    p = REFERENCE_PRESSURE_HPA * (1 - h / 44330.0) ** 5.255 + latent.weather
    p = p + rng.normal(0, cfg.baro_noise, len(t)) + rng.normal(0, cfg.baro_bias)
    out["barometer"] = RawRecording("barometer", t, p[:, None], SENSOR_RATE["barometer"])
    return out


@dataclass
class Dataset:
    """Raw recordings keyed by device id ``<car>_<spot>``."""

    recordings: dict
    car_of: dict
    scenario: str = "city"
    duration: float = 0.0

    @property
    def devices(self):
        return sorted(self.recordings)

    def colocated(self, a, b):
        return self.car_of[a] == self.car_of[b]


def generate_synthetic_context(seed, scenario="city", n_devices_car1=3, n_devices_car2=3,
                               duration=600.0, cfg=None, follow=False):
    """Recordings for two cars; car2 trails car1 on the same route if ``follow``."""
    if duration < 60:
        raise ValueError("duration must be at least 60 s")
    if n_devices_car1 + n_devices_car2 > 0 and max(n_devices_car1, n_devices_car2) > len(SPOTS):
        raise ValueError(f"at most {len(SPOTS)} devices per car")
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(seed)
    lat1 = car_latent(rng, duration, cfg, scenario)
    lat2 = car_latent(rng, duration, cfg, scenario, lead=lat1 if follow else None)
    recordings, car_of = {}, {}
    for car, latent, count in (("car1", lat1, n_devices_car1), ("car2", lat2, n_devices_car2)):
        for spot in SPOTS[:count]:
            dev = f"{car}_{spot}"
            recordings[dev] = device_recordings(rng, latent, spot, cfg)
            car_of[dev] = car
    return Dataset(recordings, car_of, scenario, duration)


def stationary_noise(seed, duration=600.0, cfg=None, engine_hz=28.0, engine_amp=0.05):
    """A device lying still with the engine idling: the injection attacker's source."""
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(duration * 100)) + 1) / 100.0
    quiet = replace(cfg, roughness=0.0, yaw_wiggle=0.0, lon_wiggle=0.0)
    latent = CarLatent(
        t,
        vertical=engine_amp * np.sin(2 * np.pi * engine_hz * t + rng.uniform(0, 6.3)),
        longitudinal=np.zeros_like(t),
        yaw=np.zeros_like(t),
        lateral=np.zeros_like(t),
        altitude=np.zeros_like(t),
        weather=rng.normal(0, 3.0),
    )
    return device_recordings(rng, latent, "dashboard", quiet)


def write_dataset(ds, directory):
    from pathlib import Path

    from .signals import write_recording_csv

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for dev, recs in ds.recordings.items():
        for modality, rec in recs.items():
            write_recording_csv(rec, d / f"{dev}_{modality}.csv")


def load_dataset(directory):
    """Read every ``<car>_<spot>_<modality>.csv`` in ``directory``."""
    from pathlib import Path

    from .errors import DataError
    from .signals import parse_recording_name, read_recording_csv

    recordings, car_of = {}, {}
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise DataError(f"no CSV recordings in {directory}")
    for path in files:
        car, spot, modality = parse_recording_name(path)
        dev = f"{car}_{spot}"
        recordings.setdefault(dev, {})[modality] = read_recording_csv(path, modality)
        car_of[dev] = car
    duration = max(r.t[-1] for recs in recordings.values() for r in recs.values())
    return Dataset(recordings, car_of, "recorded", float(duration))
