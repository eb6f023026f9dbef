import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fastzip.errors import (
    DataError,
    EmptyRecording,
    GravityEstimateDegenerate,
    InvalidPressure,
    WindowTooShort,
)
from fastzip.signals import (
    WHOLE_DATA_CHAIN,
    WINDOW_CHAINS,
    FilterChainConfig,
    RawRecording,
    SensorWindow,
    apply_filter_chain,
    context_streams,
    cut_window,
    decompose_acceleration,
    ewma,
    gyro_sky_axis,
    parse_recording_name,
    pressure_to_altitude,
    read_recording_csv,
    resample,
    write_recording_csv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def acc_recording(values, rate=100.0):
    t = np.arange(len(values)) / rate
    return RawRecording("accelerometer3d", t, np.asarray(values, dtype=float), rate)


def test_resample_midpoint():
    rec = RawRecording("barometer", np.array([0.0, 1.0]), np.array([[1.0], [3.0]]), 10.0)
    out = resample(rec, 2.0)
    assert np.allclose(out.t, [0.0, 0.5, 1.0])
    assert np.allclose(out.values[:, 0], [1.0, 2.0, 3.0])


def test_resample_hand_interpolation():
    rec = RawRecording("barometer", np.array([0.0, 0.5, 2.0]),
                       np.array([[0.0], [1.0], [4.0]]), 1.0)
    out = resample(rec, 1.0)
    assert np.allclose(out.values[:, 0], [0.0, 2.0, 4.0])


def test_resample_identity_on_uniform_input():
    rng = np.random.default_rng(0)
    rec = acc_recording(rng.normal(size=(500, 3)))
    out = resample(rec, 100.0)
    assert np.array_equal(out.values, rec.values)
    again = resample(out, 100.0)
    assert np.array_equal(again.values, out.values)


def test_resample_needs_two_samples():
    rec = RawRecording("barometer", np.array([0.0]), np.array([[1.0]]), 10.0)
    with pytest.raises(EmptyRecording):
        resample(rec, 10.0)


def test_gravity_only_input_gives_zero_channels():
    rec = acc_recording(np.tile([0.0, 0.0, 9.81], (1000, 1)))
    acv, ach = decompose_acceleration(rec)
    assert np.max(np.abs(acv.samples)) < 1e-9
    assert np.max(np.abs(ach.samples)) < 1e-9


def test_vertical_sine_projects_onto_acv():
    t = np.arange(1000) / 100.0
    wave = np.sin(2 * np.pi * t / 5.0)  # zero mean over every 5 s window
    vals = np.column_stack([np.zeros_like(t), np.zeros_like(t), 9.81 + wave])
    acv, ach = decompose_acceleration(acc_recording(vals))
    assert np.allclose(acv.samples, wave, atol=1e-9)
    assert np.max(ach.samples) < 1e-9


def test_horizontal_wiggle_goes_to_ach_magnitude():
    t = np.arange(1000) / 100.0
    wiggle = 0.1 * np.cos(2 * np.pi * t / 2.5)
    vals = np.column_stack([wiggle, np.zeros_like(t), np.full_like(t, 9.81)])
    acv, ach = decompose_acceleration(acc_recording(vals))
    assert np.allclose(acv.samples, 0.0, atol=1e-6)
    assert np.allclose(ach.samples, np.abs(wiggle), atol=1e-6)
    assert np.all(ach.samples >= 0)


def test_gravity_tail_reuses_previous_estimate():
    vals = np.tile([0.0, 0.0, 9.81], (750, 1))
    vals[500:, 2] += 1.0  # the partial tail window is not re-estimated
    acv, _ = decompose_acceleration(acc_recording(vals))
    assert np.allclose(acv.samples[500:], 1.0)


def test_degenerate_gravity_rejected():
    with pytest.raises(GravityEstimateDegenerate):
        decompose_acceleration(acc_recording(np.zeros((600, 3))))


def test_gyro_selects_z_axis():
    rows = np.tile([1.0, 2.0, 3.0], (4, 1))
    rec = RawRecording("gyroscope3d", np.arange(4) / 100.0, rows, 100.0)
    assert np.array_equal(gyro_sky_axis(rec).samples, [3.0] * 4)
    rows = np.array([[0, 0, 0.1], [0, 0, -0.2]])
    rec = RawRecording("gyroscope3d", np.arange(2) / 100.0, rows, 100.0)
    assert np.array_equal(gyro_sky_axis(rec).samples, [0.1, -0.2])


def test_pressure_to_altitude_values():
    assert pressure_to_altitude(1013.25) == 0.0
    ref = 44330.0 * (1 - (900 / 1013.25) ** (1 / 5.255))
    assert abs(pressure_to_altitude(900.0) - ref) < 1e-9
    assert abs(pressure_to_altitude(900.0) - 988.6) < 0.1
    assert pressure_to_altitude(1100.0) < 0


def test_pressure_to_altitude_strictly_decreasing():
    p = np.linspace(300, 1100, 2001)
    assert np.all(np.diff(pressure_to_altitude(p)) < 0)


@pytest.mark.parametrize("bad", [0.0, -5.0, float("nan")])
def test_invalid_pressure(bad):
    with pytest.raises(InvalidPressure):
        pressure_to_altitude(bad)


def test_ewma_definition():
    x = np.array([1.0, 3.0, -2.0, 5.0])
    a = 0.3
    y = [x[0]]
    for v in x[1:]:
        y.append(a * v + (1 - a) * y[-1])
    assert np.allclose(ewma(x, a), y)


@pytest.mark.parametrize("cfg", [WHOLE_DATA_CHAIN, *WINDOW_CHAINS.values()],
                         ids=["whole", *WINDOW_CHAINS])
def test_chain_on_constants(cfg):
    out = apply_filter_chain(np.full(200, 5.0), cfg)
    expected = 0.0 if cfg.mean_subtract else 5.0
    assert np.allclose(out, expected, atol=1e-9)


def test_gaussian_impulse_is_symmetric_and_unit_mass():
    cfg = FilterChainConfig(1, 0, 1.4)
    out = apply_filter_chain(np.array([0, 0, 1, 0, 0], dtype=float), cfg)
    assert np.allclose(out, out[::-1])
    assert abs(out.sum() - 1.0) < 1e-6


def test_chain_too_short():
    with pytest.raises(WindowTooShort):
        apply_filter_chain(np.ones(4), WINDOW_CHAINS["Acv"])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(10, 300), elements=finite),
       st.floats(-50, 50, allow_nan=False).filter(lambda a: abs(a) > 1e-3),
       st.sampled_from(["Acv", "Ach", "Gyr"]))
def test_chain_is_linear(x, a, ch):
    cfg = WINDOW_CHAINS[ch]
    lhs = apply_filter_chain(a * x, cfg)
    rhs = a * apply_filter_chain(x, cfg)
    assert np.allclose(lhs, rhs, atol=1e-6 * (1 + np.abs(rhs).max()))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(10, 300), elements=finite), finite)
def test_bar_chain_ignores_offsets(x, c):
    # the altitude chain removes the mean before smoothing
    out = apply_filter_chain(x, WINDOW_CHAINS["Bar"])
    assert out.shape == x.shape
    shifted = apply_filter_chain(x + c, WINDOW_CHAINS["Bar"])
    assert np.allclose(out, shifted, atol=1e-6 * (1 + np.abs(x).max() + abs(c)))


def test_window_cut_and_bounds():
    s = SensorWindow("Gyr", np.arange(3000, dtype=float), 100.0, 0.0)
    w = s.window(5.0, 10.0)
    assert len(w) == 1000 and w.samples[0] == 500.0 and w.start_time == 5.0
    assert s.window(25.0, 10.0) is None
    assert cut_window(s, 20.0) is not None
    assert cut_window(s, 20.5) is None


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    rec = acc_recording(rng.normal(size=(50, 3)))
    path = tmp_path / "car1_dashboard_accelerometer3d.csv"
    write_recording_csv(rec, path)
    back = read_recording_csv(path)
    assert back.modality == "accelerometer3d"
    assert np.array_equal(back.t, rec.t) and np.array_equal(back.values, rec.values)


def test_csv_errors(tmp_path):
    with pytest.raises(DataError):
        parse_recording_name("car1_accelerometer.csv")
    bad = tmp_path / "car1_dash_barometer.csv"
    bad.write_text("time,v1\n0,1\n")
    with pytest.raises(DataError):
        read_recording_csv(bad)
    bad.write_text("t,v1\n0,abc\n")
    with pytest.raises(DataError):
        read_recording_csv(bad)
    bad.write_text("t,v1\n")
    with pytest.raises(EmptyRecording):
        read_recording_csv(bad)


def test_context_streams_channels_and_rates():
    from fastzip.synthetic import generate_synthetic_context

    ds = generate_synthetic_context(5, duration=120)
    streams = context_streams(ds.recordings["car1_dashboard"])
    assert set(streams) == {"Acv", "Ach", "Gyr", "Bar"}
    assert streams["Bar"].rate == 10.0 and streams["Acv"].rate == 100.0
    assert math.isclose(streams["Acv"].length, 120.0, abs_tol=0.05)
