import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwrepro import spectral, synth
from gwrepro.synth import InjectionSpec, NoiseModel, TimeSeries

FS = 4096


def _zeros(duration=16, fs=FS, det="H1", start=1000):
    return TimeSeries(det, start, 0, 1.0 / fs, np.zeros(int(duration * fs)))


def _oracle_snr(samples, dt, psd_values, f_lo, f_hi):
    # Independent evaluation straight from the injected samples.
    htilde = np.fft.rfft(samples) * dt
    df = 1.0 / (len(samples) * dt)
    f = np.arange(len(htilde)) * df
    band = (f >= f_lo) & (f <= f_hi)
    return math.sqrt(4 * df * np.sum(np.abs(htilde[band]) ** 2 / psd_values[band]))


# --- noise ------------------------------------------------------------------


def test_white_noise_moments():
    ts = synth.generate_noise(NoiseModel("white", 1.0), "H1", 0, 64, FS, seed=7)
    n = len(ts)
    assert n == 64 * FS
    assert abs(ts.samples.mean()) < 4 / math.sqrt(n)
    assert abs(ts.samples.var() - 1.0) < 0.05


def test_zero_sigma_rejected():
    with pytest.raises(ValueError, match="sigma must be positive"):
        NoiseModel("white", 0.0)


@pytest.mark.parametrize("kind", ["white", "power-law"])
def test_noise_is_deterministic(kind):
    a = synth.generate_noise(NoiseModel(kind), "L1", 5, 8, FS, seed=99)
    b = synth.generate_noise(NoiseModel(kind), "L1", 5, 8, FS, seed=99)
    assert a.samples.tobytes() == b.samples.tobytes()


def test_detectors_get_independent_streams():
    h = synth.generate_noise(NoiseModel(), "H1", 0, 16, FS, seed=3).samples
    l = synth.generate_noise(NoiseModel(), "L1", 0, 16, FS, seed=3).samples
    r = np.corrcoef(h, l)[0, 1]
    assert abs(r) < 4 / math.sqrt(len(h))


@pytest.mark.parametrize("duration, fs", [(0.5, 3), (0, FS), (-1, FS)])
def test_bad_sample_counts(duration, fs):
    with pytest.raises(ValueError):
        synth.generate_noise(NoiseModel(), "H1", 0, duration, fs, seed=0)


def test_power_law_noise_matches_model_psd():
    model = NoiseModel("power-law")
    ts = synth.generate_noise(model, "H1", 0, 256, FS, seed=11)
    est = spectral.estimate_psd(ts, 4, 0.5, "hann", "median")
    f = est.frequencies
    band = (f >= 20) & (f <= 1000)
    ratio = est.values[band] / model.psd(f[band], FS)
    assert abs(np.median(ratio) - 1) < 0.05


def test_seed_substreams_differ_by_component_and_part():
    seeds = {synth.derive_seed(1, c, d, p) for c in ("noise", "memory") for d in ("H1", "L1") for p in (0, 1)}
    assert len(seeds) == 8
    with pytest.raises(ValueError):
        synth.derive_seed(2**64, "noise")


# --- injections -------------------------------------------------------------


@pytest.mark.parametrize("mc, tc, phase, snr", [(10, 9.3, 0.0, 18), (25, 12.0, 1.3, 10), (38, 14.51, 5.9, 7.5)])
def test_injection_hits_target_snr(mc, tc, phase, snr):
    ts = _zeros()
    psd = synth.model_psd(NoiseModel("power-law"), len(ts), FS)
    out = synth.inject(ts, InjectionSpec(mc, ts.start_s + tc, phase, snr), psd, 20.0)
    rho = _oracle_snr(out.samples, ts.dt, psd.values, 20.0, synth.isco_frequency(mc))
    assert rho == pytest.approx(snr, rel=1e-6)


def test_inject_leaves_input_untouched():
    ts = _zeros()
    before = ts.samples.copy()
    psd = synth.model_psd(NoiseModel(), len(ts), FS)
    synth.inject(ts, InjectionSpec(20, ts.start_s + 8, 0.5, 12), psd, 20.0)
    assert np.array_equal(ts.samples, before)


def test_target_snr_must_be_positive():
    with pytest.raises(ValueError):
        InjectionSpec(20, 100.0, 0.0, 0.0)


@pytest.mark.parametrize("tc", [999.0, 1016.0, 2000.0])
def test_coalescence_outside_segment(tc):
    ts = _zeros()
    psd = synth.model_psd(NoiseModel(), len(ts), FS)
    with pytest.raises(ValueError, match="coalescence time outside segment"):
        synth.inject(ts, InjectionSpec(20, tc, 0.0, 10), psd, 20.0)


def test_inject_rejects_psd_grid_mismatch():
    ts = _zeros()
    psd = synth.model_psd(NoiseModel(), len(ts) // 2, FS)
    with pytest.raises(synth.PsdGridMismatch):
        synth.inject(ts, InjectionSpec(20, ts.start_s + 8, 0.0, 10), psd, 20.0)


def test_delay_must_respect_light_travel_time():
    InjectionSpec(20, 0.0, inter_detector_delay_s=0.01).check_delay(0.01)
    with pytest.raises(ValueError):
        InjectionSpec(20, 0.0, inter_detector_delay_s=0.011).check_delay(0.01)


def test_injection_delay_shifts_signal():
    ts = _zeros(det="L1")
    psd = synth.model_psd(NoiseModel(), len(ts), FS)
    spec = InjectionSpec(20, ts.start_s + 8, 0.0, 10, inter_detector_delay_s=8 / FS)
    plain = synth.inject(ts, spec, psd, 20.0).samples
    delayed = synth.inject(ts, spec, psd, 20.0, apply_delay=True).samples
    np.testing.assert_allclose(np.roll(plain, 8), delayed, atol=1e-12 * np.abs(plain).max())


@given(
    a=st.tuples(st.floats(10, 40), st.floats(4, 12), st.floats(0, 6.28), st.floats(5, 20)),
    b=st.tuples(st.floats(10, 40), st.floats(4, 12), st.floats(0, 6.28), st.floats(5, 20)),
)
def test_injection_linearity(a, b):
    ts = _zeros(duration=16, fs=1024)
    psd = synth.model_psd(NoiseModel(), len(ts), 1024)
    sa = InjectionSpec(a[0], ts.start_s + a[1], a[2], a[3])
    sb = InjectionSpec(b[0], ts.start_s + b[1], b[2], b[3])
    ab = synth.inject(synth.inject(ts, sa, psd, 20.0), sb, psd, 20.0).samples
    ba = synth.inject(synth.inject(ts, sb, psd, 20.0), sa, psd, 20.0).samples
    scale = np.abs(ab).max()
    np.testing.assert_allclose(ab, ba, rtol=0, atol=1e-12 * scale)


def test_chirp_band_edges():
    f = np.arange(0, 2049, 1.0)
    h = synth.chirp_fd(30, f, 20.0)
    nz = np.nonzero(h)[0]
    assert f[nz[0]] == 20.0
    assert f[nz[-1]] <= synth.isco_frequency(30) < f[nz[-1]] + 1


def test_isco_and_duration_oracle():
    # f_isco = c^3 / (6^1.5 pi G M), M = 2^(6/5) Mc; tau = 5/256 (G Mc/c^3)^(-5/3) (pi f)^(-8/3)
    G, c, msun = 6.67430e-11, 299792458.0, 1.988409870698051e30
    m = 2 ** 1.2 * 30 * msun
    assert synth.isco_frequency(30) == pytest.approx(c**3 / (6**1.5 * math.pi * G * m), rel=1e-4)
    mc = 30 * msun * G / c**3
    assert synth.chirp_duration(30, 20) == pytest.approx(5 / 256 * mc ** (-5 / 3) * (math.pi * 20) ** (-8 / 3), rel=1e-4)


# --- strain file ------------------------------------------------------------


def _series():
    rng = np.random.default_rng(4)
    return TimeSeries("L1", 1126259462, 391_000_000, 1 / 512, rng.standard_normal(2048))


def test_strain_round_trip(tmp_path):
    ts = _series()
    sha = synth.write_strain(ts, tmp_path / "x.gwsd")
    back = synth.read_strain(tmp_path / "x.gwsd")
    assert (back.detector, back.start_s, back.start_ns, back.dt) == (ts.detector, ts.start_s, ts.start_ns, ts.dt)
    assert back.samples.tobytes() == ts.samples.tobytes()
    assert synth.strain_checksum(tmp_path / "x.gwsd") == sha


def test_strain_header_layout(tmp_path):
    ts = _series()
    synth.write_strain(ts, tmp_path / "x.gwsd")
    raw = (tmp_path / "x.gwsd").read_bytes()
    assert raw[:4] == b"GWSD"
    assert int.from_bytes(raw[4:6], "little") == 1
    assert raw[6:8] == b"L1"
    assert int.from_bytes(raw[8:16], "little", signed=True) == ts.start_s
    assert int.from_bytes(raw[16:20], "little") == ts.start_ns
    assert np.frombuffer(raw[20:28], "<f8")[0] == 512.0
    assert int.from_bytes(raw[28:36], "little") == 2048
    assert len(raw) == 68 + 8 * 2048


@pytest.mark.parametrize(
    "offset, error, message",
    [
        (0, synth.BadMagicError, "bad magic"),
        (4, synth.VersionMismatchError, "version mismatch"),
        (68 + 100, synth.ChecksumMismatchError, "checksum mismatch"),
    ],
)
def test_strain_corruption_errors(tmp_path, offset, error, message):
    p = tmp_path / "x.gwsd"
    synth.write_strain(_series(), p)
    raw = bytearray(p.read_bytes())
    raw[offset] ^= 0x01
    p.write_bytes(bytes(raw))
    with pytest.raises(error, match=message):
        synth.read_strain(p)


def test_empty_series_cannot_be_written():
    with pytest.raises(ValueError):
        TimeSeries("H1", 0, 0, 1 / 16, [])


@pytest.mark.parametrize("dt", [0.0, -1.0, 1 / 3.5])
def test_timeseries_rejects_bad_dt(dt):
    with pytest.raises(ValueError):
        TimeSeries("H1", 0, 0, dt, [1.0, 2.0])


def test_timeseries_rejects_nonfinite():
    with pytest.raises(ValueError):
        TimeSeries("H1", 0, 0, 1 / 16, [1.0, float("nan")])


def test_slice_moves_epoch():
    ts = TimeSeries("H1", 10, 500_000_000, 0.25, np.arange(16.0))
    sub = ts.slice(6, 10)
    assert (sub.start_s, sub.start_ns) == (12, 0)
    assert list(sub.samples) == [6.0, 7.0, 8.0, 9.0]
