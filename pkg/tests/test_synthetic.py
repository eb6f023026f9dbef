import numpy as np
import pytest

from fastzip.evaluation import EvalParams, dataset_bits
from fastzip.quantizer import OUTPUT_BITS, SIMILARITY
from fastzip.signals import context_streams
from fastzip.synthetic import (
    SyntheticConfig,
    generate_synthetic_context,
    load_dataset,
    stationary_noise,
    write_dataset,
)


def test_same_seed_is_bitwise_identical():
    a = generate_synthetic_context(4, duration=90)
    b = generate_synthetic_context(4, duration=90)
    assert a.devices == b.devices
    for dev in a.devices:
        for kind, rec in a.recordings[dev].items():
            other = b.recordings[dev][kind]
            assert np.array_equal(rec.t, other.t) and np.array_equal(rec.values, other.values)


def test_different_seeds_differ():
    a = generate_synthetic_context(1, duration=90).recordings["car1_dashboard"]
    b = generate_synthetic_context(2, duration=90).recordings["car1_dashboard"]
    assert not np.array_equal(a["barometer"].values, b["barometer"].values)


def test_noiseless_devices_in_one_car_agree():
    cfg = SyntheticConfig(accel_noise=0.0, gyro_noise=0.0, baro_noise=0.0, device_vibration=0.0,
                          timestamp_jitter=0.0, clock_offset=0.0, baro_bias=0.0,
                          spot_attenuation=0.0)
    ds = generate_synthetic_context(7, n_devices_car1=2, n_devices_car2=0, duration=90, cfg=cfg)
    a, b = (context_streams(ds.recordings[d]) for d in ds.devices)
    for ch in ("Gyr", "Bar"):
        assert np.allclose(a[ch].samples, b[ch].samples, atol=1e-9)


def test_argument_validation():
    with pytest.raises(ValueError):
        generate_synthetic_context(0, duration=30)
    with pytest.raises(ValueError):
        generate_synthetic_context(0, n_devices_car1=99)


def test_dataset_round_trip(tmp_path):
    ds = generate_synthetic_context(3, n_devices_car1=1, n_devices_car2=1, duration=60)
    write_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.devices == ds.devices
    assert back.colocated("car1_dashboard", "car1_dashboard")
    rec, orig = back.recordings["car2_dashboard"]["barometer"], ds.recordings["car2_dashboard"]["barometer"]
    assert np.allclose(rec.values, orig.values) and np.allclose(rec.t, orig.t)


def test_stationary_noise_has_all_sensors():
    rec = stationary_noise(0, duration=60)
    assert set(context_streams(rec)) == {"Acv", "Ach", "Gyr", "Bar"}


def test_colocated_windows_match_more_often():
    ds = generate_synthetic_context(11, duration=1200)
    bits = dataset_bits(ds, EvalParams(use_filter=False))
    tar, far = {}, {}
    for i, a in enumerate(ds.devices):
        for b in ds.devices[i + 1:]:
            out = tar if ds.colocated(a, b) else far
            for ch in OUTPUT_BITS:
                ok = bits[a].ok[ch] & bits[b].ok[ch]
                sim = (bits[a].bits[ch][ok] == bits[b].bits[ch][ok]).mean(axis=1)
                out.setdefault(ch, []).extend(sim >= float(SIMILARITY[ch]))
    for ch in OUTPUT_BITS:
        assert len(tar[ch]) >= 200
        assert np.mean(tar[ch]) > np.mean(far[ch]), ch
