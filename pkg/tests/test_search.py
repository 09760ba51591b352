import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from gwrepro import search, spectral, synth
from gwrepro.search import SnrSeries, Template, Trigger
from gwrepro.spectral import PowerSpectrum
from gwrepro.synth import InjectionSpec, NoiseModel, TimeSeries

FS = 4096
SEG = 64
F_LOW = 20.0


def _white_psd(n=SEG * FS, fs=FS):
    # 2 sigma^2 / fs with sigma = 1: whitening is then the identity
    return PowerSpectrum(fs / n, np.full(n // 2 + 1, 2.0 / fs))


def _noiseless(mc, tc, phase, snr, n=SEG * FS, fs=FS, psd=None):
    ts = TimeSeries("H1", 1000, 0, 1 / fs, np.zeros(n))
    psd = psd or _white_psd(n, fs)
    out = synth.inject(ts, InjectionSpec(mc, 1000 + tc, phase, snr), psd, F_LOW)
    return spectral.whiten(out, psd), psd


def _template(mc):
    return Template(0, mc, synth.chirp_duration(mc, F_LOW))


# --- bank -------------------------------------------------------------------


def test_bank_single_template():
    bank = search.build_bank(10, 40, 1)
    assert [t.chirp_mass for t in bank] == [10.0]


def test_bank_geometric():
    bank = search.build_bank(10, 40, 3)
    assert [t.id for t in bank] == [0, 1, 2]
    assert [t.chirp_mass for t in bank] == pytest.approx([10, 20, 40], rel=1e-15)


@pytest.mark.parametrize("lo, hi, n", [(0, 40, 3), (-1, 40, 3), (40, 10, 3), (10, 40, 0)])
def test_bank_rejects_bad_ranges(lo, hi, n):
    with pytest.raises(ValueError):
        search.build_bank(lo, hi, n)


def test_bank_durations_decrease_with_mass():
    d = [t.duration_s for t in search.build_bank(10, 40, 8)]
    assert all(a > b for a, b in zip(d, d[1:]))


# --- matched filter ---------------------------------------------------------


def test_zero_input_gives_zero_snr():
    ts = TimeSeries("H1", 0, 0, 1 / FS, np.zeros(SEG * FS))
    snr = search.matched_filter(ts, _template(20), _white_psd(), F_LOW)
    assert not np.any(snr.samples)
    assert snr.sigma > 0


def test_noiseless_peak_matches_target():
    w, psd = _noiseless(25.0, 30.25, 0.7, 18.0)
    snr = search.matched_filter(w, _template(25.0), psd, F_LOW)
    peak = int(np.argmax(np.abs(snr.samples)))
    assert 17.82 <= abs(snr.samples[peak]) <= 18.18
    assert abs(peak - 30.25 * FS) <= 1


def test_noiseless_peak_with_coloured_psd():
    n = SEG * FS
    psd = synth.model_psd(NoiseModel("power-law"), n, FS)
    w, _ = _noiseless(12.0, 40.0, 2.0, 10.0, psd=psd)
    snr = search.matched_filter(w, _template(12.0), psd, F_LOW)
    peak = int(np.argmax(np.abs(snr.samples)))
    assert abs(snr.samples[peak]) == pytest.approx(10.0, rel=0.01)
    assert abs(peak - 40.0 * FS) <= 1


def test_noise_snr_normalization():
    ts = synth.generate_noise(NoiseModel(), "L1", 0, SEG, FS, seed=21)
    psd = _white_psd()
    snr = search.matched_filter(spectral.whiten(ts, psd), _template(15), psd, F_LOW)
    assert snr.samples.size >= 1e5
    assert 1.9 <= np.mean(np.abs(snr.samples) ** 2) <= 2.1


@given(mc=st.floats(10, 40), tc=st.floats(8, 56), phase=st.floats(0, 6.283), target=st.floats(10, 50))
def test_peak_localization(mc, tc, phase, target):
    n, fs = 16 * 1024 * 4, 1024  # 64 s at 1024 Hz keeps hypothesis quick
    w, psd = _noiseless(mc, tc, phase, target, n=n, fs=fs)
    snr = search.matched_filter(w, _template(mc), psd, F_LOW)
    peak = int(np.argmax(np.abs(snr.samples)))
    assert abs(peak - tc * fs) <= 1


def test_filter_rejects_non_power_of_two():
    n = 3 * 4096
    ts = TimeSeries("H1", 0, 0, 1 / FS, np.zeros(n))
    with pytest.raises(ValueError, match="power of two"):
        search.matched_filter(ts, _template(20), _white_psd(n), F_LOW)


def test_filter_rejects_grid_mismatch():
    ts = TimeSeries("H1", 0, 0, 1 / FS, np.zeros(SEG * FS))
    with pytest.raises(ValueError, match="mismatch"):
        search.matched_filter(ts, _template(20), _white_psd(SEG * FS // 2), F_LOW)


def test_filter_rejects_band_above_nyquist():
    ts = TimeSeries("H1", 0, 0, 1 / 32, np.zeros(1024))
    with pytest.raises(ValueError, match="Nyquist"):
        search.matched_filter(ts, _template(20), _white_psd(1024, 32), F_LOW)


# --- chi-squared ------------------------------------------------------------


def _chisq_oracle(data, mc, peak, p, fs):
    """Per-band SNRs by direct DFT sums against a white PSD (whitening is the identity)."""
    n = len(data)
    df = fs / n
    f = np.arange(n // 2 + 1) * df
    h = synth.chirp_fd(mc, f, F_LOW)
    s = 2.0 / fs
    dtilde = np.fft.rfft(data) / fs
    k = np.nonzero(h)[0]
    w = np.abs(h[k]) ** 2 / s
    sigma = math.sqrt(4 * df * w.sum())
    cum = np.cumsum(w)
    # first bin whose cumulative power reaches l/p of the total starts band l
    edges = [int(np.searchsorted(cum, cum[-1] * l / p)) for l in range(1, p)]
    band_of = np.searchsorted(edges, np.arange(k.size), side="right")
    terms = 4 * df / sigma * dtilde[k] * np.conj(h[k]) / s * np.exp(2j * np.pi * k * peak / n)
    bands = np.array([terms[band_of == l].sum() for l in range(p)])
    rho = bands.sum()
    return p * np.sum(np.abs(bands - rho / p) ** 2) / (2 * p - 2)


def test_chisq_matching_injection_is_small():
    w, psd = _noiseless(20.0, 32.0, 1.1, 18.0)
    peak = int(np.argmax(np.abs(search.matched_filter(w, _template(20.0), psd, F_LOW).samples)))
    assert search.chisq_veto(w, _template(20.0), psd, peak, 16, F_LOW) < 0.2


def test_chisq_delta_glitch_is_large():
    n = SEG * FS
    data = np.zeros(n)
    data[n // 2] = 200.0  # loud enough to cross the 5.5 threshold
    ts = TimeSeries("H1", 0, 0, 1 / FS, data)
    psd = _white_psd()
    tmpl = _template(20.0)
    snr = search.matched_filter(ts, tmpl, psd, F_LOW)
    peak = int(np.argmax(np.abs(snr.samples)))
    assert abs(snr.samples[peak]) > 5.5
    chisq = search.chisq_veto(ts, tmpl, psd, peak, 16, F_LOW)
    assert chisq > 3
    assert chisq == pytest.approx(_chisq_oracle(data, 20.0, peak, 16, FS), rel=1e-6)


@pytest.mark.parametrize("p", [2, 4, 16])
def test_chisq_matches_band_oracle_on_noise(p):
    ts = synth.generate_noise(NoiseModel(), "H1", 0, 16, 1024, seed=p)
    psd = _white_psd(16 * 1024, 1024)
    got = search.chisq_veto(ts, _template(30.0), psd, 5000, p, F_LOW)
    assert got == pytest.approx(_chisq_oracle(ts.samples, 30.0, 5000, p, 1024), rel=1e-6)


def test_chisq_needs_two_bins():
    ts = TimeSeries("H1", 0, 0, 1 / FS, np.zeros(SEG * FS))
    with pytest.raises(ValueError, match="need >= 2 bins"):
        search.chisq_veto(ts, _template(20), _white_psd(), 0, 1, F_LOW)


def test_chisq_expectation_on_noise():
    ts = synth.generate_noise(NoiseModel(), "L1", 0, SEG, FS, seed=5)
    psd = _white_psd()
    vals = [search.chisq_veto(ts, _template(20.0), psd, i, 16, F_LOW) for i in range(1000, 260000, 6400)]
    assert 0.85 < np.mean(vals) < 1.15


# --- reweighting ------------------------------------------------------------


@pytest.mark.parametrize("snr, chisq, expected", [(8, 1, 8.0), (8, 2, 8 * 4.5 ** (-1 / 6)), (0, 5, 0.0), (8, 0.3, 8.0)])
def test_reweight_examples(snr, chisq, expected):
    assert search.reweight(snr, chisq) == pytest.approx(expected, rel=1e-12)


def test_reweight_known_value():
    # 4.5 ** (1/6) = 1.284898..., so 8 / 1.284898 = 6.22617
    assert round(search.reweight(8, 2), 4) == 6.2262


@given(a=st.floats(0, 100), b=st.floats(0, 100), chisq=st.floats(0, 50))
def test_reweight_increasing_in_snr(a, b, chisq):
    assume(b > a * (1 + 1e-9) + 1e-12)
    assert search.reweight(a, chisq) < search.reweight(b, chisq)


@given(snr=st.floats(0, 100), c1=st.floats(0, 50), c2=st.floats(0, 50))
def test_reweight_nonincreasing_in_chisq(snr, c1, c2):
    lo, hi = sorted((c1, c2))
    assert search.reweight(snr, hi) <= search.reweight(snr, lo)


@given(snr=st.floats(0, 100), chisq=st.floats(0, 50))
def test_stat_never_exceeds_snr(snr, chisq):
    assert search.reweight(snr, chisq) <= snr


# --- clustering -------------------------------------------------------------


def _brute_cluster(a, threshold, window):
    keep = []
    for i in range(len(a)):
        if a[i] < threshold:
            continue
        ok = True
        for j in range(len(a)):
            if j == i or abs(j - i) > window or a[j] < threshold:
                continue
            if a[j] > a[i] or (a[j] == a[i] and j < i):
                ok = False
                break
        if ok:
            keep.append(i)
    return keep


@given(
    values=st.lists(st.integers(0, 6), min_size=0, max_size=120),
    threshold=st.integers(0, 7),
    window=st.integers(0, 10),
)
def test_cluster_matches_brute_force_with_ties(values, threshold, window):
    assert list(search.cluster_peaks(values, threshold, window)) == _brute_cluster(values, threshold, window)


@pytest.mark.parametrize("seed, window", [(0, 5), (1, 40), (2, 1)])
def test_cluster_matches_brute_force_large(seed, window):
    a = np.random.default_rng(seed).rayleigh(1.0, 10_000)
    got = search.cluster_peaks(a, 2.5, window)
    # windowed brute force: same rule as the O(N^2) scan, only |i - j| <= window can matter
    want = []
    for i in np.nonzero(a >= 2.5)[0]:
        lo, hi = max(0, i - window), min(len(a), i + window + 1)
        nb = a[lo:hi]
        idx = np.arange(lo, hi)
        if not np.any((nb > a[i]) | ((nb == a[i]) & (idx < i))):
            want.append(i)
    assert list(got) == want


def _series(mag, dt=0.01):
    return SnrSeries(3, np.asarray(mag, dtype=complex), 1.0, 100.0, dt)


def test_cluster_nothing_above_threshold():
    assert search.cluster(_series(np.ones(500)), 5.5, 1.0, "H1") == []


def test_cluster_close_peaks_keep_louder():
    mag = np.zeros(1000)
    mag[300], mag[310] = 7.0, 9.0  # 0.1 s apart
    trigs = search.cluster(_series(mag), 5.5, 1.0, "H1")
    assert [(t.end_time_s, t.snr) for t in trigs] == [(pytest.approx(103.1), 9.0)]


def test_cluster_equal_peaks_far_apart():
    mag = np.zeros(1000)
    mag[300] = mag[500] = 8.0  # 2 s apart
    trigs = search.cluster(_series(mag), 5.5, 1.0, "H1")
    assert [t.end_time_s for t in trigs] == [pytest.approx(103.0), pytest.approx(105.0)]


def test_cluster_equal_peaks_close_earlier_wins():
    mag = np.zeros(1000)
    mag[300] = mag[350] = 8.0
    trigs = search.cluster(_series(mag), 5.5, 1.0, "H1")
    assert [t.end_time_s for t in trigs] == [pytest.approx(103.0)]


def test_cluster_valid_range_and_chisq():
    mag = np.zeros(1000)
    mag[50], mag[500] = 20.0, 8.0
    trigs = search.cluster(_series(mag), 5.5, 0.5, "L1", chisq=lambda i: 2.0, valid=(100, 900))
    assert len(trigs) == 1
    t = trigs[0]
    assert (t.detector, t.template_id, t.snr, t.chisq_r) == ("L1", 3, 8.0, 2.0)
    assert t.stat == pytest.approx(search.reweight(8.0, 2.0))


def test_find_triggers_recovers_injection():
    w, psd = _noiseless(25.0, 30.0, 0.0, 18.0)
    trigs = search.find_triggers(w, _template(25.0), psd, F_LOW, 5.5, 1.0)
    assert len(trigs) >= 1
    top = max(trigs, key=lambda t: t.snr)
    assert top.end_time_s == pytest.approx(1030.0, abs=1 / FS)
    assert top.chisq_r < 0.2
    assert top.stat == top.snr


# --- trigger files ----------------------------------------------------------


def _trig(t, tid=0, snr=6.0, det="H1"):
    return Trigger(det, tid, t, snr, 1.5, search.reweight(snr, 1.5))


def test_trigger_file_format(tmp_path):
    p = tmp_path / "t.csv"
    search.write_triggers([_trig(1126259462.4213867, 4, 12.3456789012)], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "detector,template_id,end_time_s,snr,chisq_r,stat"
    assert lines[1].startswith("H1,4,1126259462.421386719,12.3456789,1.5,")


def test_trigger_file_round_trip(tmp_path):
    trigs = [_trig(10.0 + i / 7, i % 3, 6 + i) for i in range(5)]
    search.write_triggers(trigs, tmp_path / "t.csv")
    back = search.read_triggers(tmp_path / "t.csv")
    assert [t.template_id for t in back] == [t.template_id for t in trigs]
    assert [t.end_time_s for t in back] == pytest.approx([t.end_time_s for t in trigs], abs=1e-9)


def test_merge_single_file_identity(tmp_path):
    trigs = [_trig(1.0), _trig(2.0, 1), _trig(2.0, 3)]
    search.write_triggers(trigs, tmp_path / "a.csv")
    merged, sums = search.merge_triggers([tmp_path / "a.csv"])
    search.write_triggers(merged, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_bytes() == (tmp_path / "a.csv").read_bytes()
    assert sums == {str(tmp_path / "a.csv"): search.file_sha256(tmp_path / "a.csv")}


def test_merge_disjoint_files_sorted(tmp_path):
    search.write_triggers([_trig(5.0), _trig(6.0)], tmp_path / "b.csv")
    search.write_triggers([_trig(1.0, 2), _trig(2.0)], tmp_path / "a.csv")
    merged, _ = search.merge_triggers([tmp_path / "b.csv", tmp_path / "a.csv"])
    assert [(t.end_time_s, t.template_id) for t in merged] == [(1.0, 2), (2.0, 0), (5.0, 0), (6.0, 0)]


def test_merge_keeps_duplicates(tmp_path):
    search.write_triggers([_trig(1.0)], tmp_path / "a.csv")
    search.write_triggers([_trig(1.0)], tmp_path / "b.csv")
    merged, _ = search.merge_triggers([tmp_path / "a.csv", tmp_path / "b.csv"])
    assert len(merged) == 2


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 4)), max_size=30))
def test_merge_idempotent(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("m")
    search.write_triggers([_trig(t / 4, tid) for t, tid in rows], d / "a.csv")
    once, _ = search.merge_triggers([d / "a.csv"])
    search.write_triggers(once, d / "once.csv")
    twice, _ = search.merge_triggers([d / "once.csv"])
    search.write_triggers(twice, d / "twice.csv")
    assert (d / "once.csv").read_bytes() == (d / "twice.csv").read_bytes()
