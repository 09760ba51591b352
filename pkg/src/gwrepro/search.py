"""Template bank, FFT matched filter, chi-squared veto and trigger handling."""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d

from .spectral import PowerSpectrum
from .synth import TimeSeries, chirp_duration, chirp_fd, check_detector


@dataclass(frozen=True)
class Template:
    id: int
    chirp_mass: float
    duration_s: float


def build_bank(mc_min: float, mc_max: float, n_templates: int, f_low: float = 20.0) -> list[Template]:
    """Geometrically spaced chirp masses from ``mc_min`` to ``mc_max``."""
    if not 0 < mc_min < mc_max:
        raise ValueError("need 0 < mc_min < mc_max")
    if n_templates < 1:
        raise ValueError("need at least one template")
    if n_templates == 1:
        masses = [float(mc_min)]
    else:
        ratio = mc_max / mc_min
        masses = [mc_min * ratio ** (k / (n_templates - 1)) for k in range(n_templates)]
        masses[-1] = float(mc_max)
    return [Template(k, mc, chirp_duration(mc, f_low)) for k, mc in enumerate(masses)]


@dataclass(frozen=True)
class SnrSeries:
    template_id: int
    samples: np.ndarray = field(repr=False)
    sigma: float
    epoch: float
    dt: float

    def time_of(self, index: int) -> float:
        return self.epoch + index * self.dt


class _Filter:
    """Whitened data spectrum and whitened template on one segment grid."""

    def __init__(self, whitened: TimeSeries, template: Template, psd: PowerSpectrum, f_low: float):
        n = len(whitened)
        if n & (n - 1):
            raise ValueError("segment length must be a power of two in samples")
        if not psd.matches(n, whitened.dt):
            raise ValueError("PSD grid mismatch")
        if f_low >= psd.nyquist:
            raise ValueError("template band outside Nyquist")
        self.n = n
        self.df = psd.df
        fs = whitened.sample_rate
        htilde = chirp_fd(template.chirp_mass, psd.frequencies, f_low)
        band = np.nonzero(htilde)[0]
        if band.size == 0:
            raise ValueError("template band outside Nyquist")
        if np.any(psd.values[band] <= 0):
            raise ValueError("PSD must be positive on the template band")
        self.kmin, self.kmax = int(band[0]), int(band[-1]) + 1
        h = htilde[self.kmin:self.kmax]
        s = psd.values[self.kmin:self.kmax]
        self.power = np.abs(h) ** 2 / s
        self.sigma = math.sqrt(4.0 * self.df * float(np.sum(self.power)))
        data = np.fft.rfft(whitened.samples)[self.kmin:self.kmax]
        # d(f) conj(h(f)) / S(f) written in terms of the whitened spectrum
        self.q = whitened.dt * math.sqrt(fs / 2.0) * data * np.conj(h) / np.sqrt(s)

    def snr(self) -> np.ndarray:
        full = np.zeros(self.n, dtype=complex)
        full[self.kmin:self.kmax] = self.q
        return np.fft.ifft(full) * (self.n * 4.0 * self.df / self.sigma)

    def band_snrs(self, index: int, n_bins: int) -> np.ndarray:
        """Per-band SNR contributions at one sample; they sum to the full SNR there."""
        cum = np.cumsum(self.power)
        edges = np.searchsorted(cum, cum[-1] * np.arange(1, n_bins) / n_bins)
        k = np.arange(self.kmin, self.kmax, dtype=np.int64)
        phase = np.exp(2j * np.pi * ((k * index) % self.n) / self.n)
        terms = self.q * phase * (4.0 * self.df / self.sigma)
        return np.array([chunk.sum() for chunk in np.split(terms, edges)])


def matched_filter(whitened: TimeSeries, template: Template, psd: PowerSpectrum, f_low: float) -> SnrSeries:
    """Complex SNR time series of ``template`` against a whitened segment.

    Normalized so Gaussian noise gives ``E|rho|^2 = 2``; sample ``j`` is the
    coalescence time ``epoch + j dt``.
    """
    flt = _Filter(whitened, template, psd, f_low)
    return SnrSeries(template.id, flt.snr(), flt.sigma, whitened.epoch, whitened.dt)


def chisq_veto(whitened: TimeSeries, template: Template, psd: PowerSpectrum, peak_index: int, n_bins: int = 16, f_low: float = 20.0) -> float:
    """Reduced chi-squared over ``n_bins`` equal-power frequency bands.

    ``chisq = p * sum_l |rho_l - rho / p|^2`` with ``2p - 2`` degrees of
    freedom, evaluated at sample ``peak_index``.
    """
    if n_bins < 2:
        raise ValueError("need >= 2 bins")
    if not 0 <= peak_index < len(whitened):
        raise ValueError("peak outside segment")
    flt = _Filter(whitened, template, psd, f_low)
    return _chisq_from_bands(flt.band_snrs(peak_index, n_bins))


def _chisq_from_bands(bands: np.ndarray) -> float:
    p = len(bands)
    rho = bands.sum()
    return float(p * np.sum(np.abs(bands - rho / p) ** 2) / (2 * p - 2))


def reweight(snr: float, chisq_r: float) -> float:
    if snr < 0 or chisq_r < 0:
        raise ValueError("snr and chisq_r must be non-negative")
    if chisq_r <= 1:
        return float(snr)
    return float(snr * ((1.0 + chisq_r**3) / 2.0) ** (-1.0 / 6.0))


@dataclass(frozen=True)
class Trigger:
    detector: str
    template_id: int
    end_time_s: float
    snr: float
    chisq_r: float
    stat: float

    def __post_init__(self):
        check_detector(self.detector)


def cluster_peaks(values, threshold: float, window: int) -> np.ndarray:
    """Indices of samples that are the maximum within ``+-window`` samples.

    Only samples ``>= threshold`` count. Among equal values inside a window
    the earliest wins.
    """
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return np.array([], dtype=int)
    masked = np.where(a >= threshold, a, -np.inf)
    local_max = maximum_filter1d(masked, size=2 * window + 1, mode="constant", cval=-np.inf)
    candidates = np.nonzero((masked == local_max) & np.isfinite(masked))[0]
    keep = [i for i in candidates if window == 0 or i == 0 or masked[max(0, i - window):i].max() < masked[i]]
    return np.array(keep, dtype=int)


def cluster(snr: SnrSeries, threshold: float, window_s: float, detector: str, chisq=None, valid=None) -> list[Trigger]:
    """Turn an SNR series into triggers, one per clustered peak of ``|rho|``.

    ``chisq`` maps a sample index to a reduced chi-squared (zero when
    omitted); ``valid`` is an optional ``(start, stop)`` index range that
    peaks must fall in.
    """
    window = int(round(window_s / snr.dt))
    mag = np.abs(snr.samples)
    if valid is not None:
        lo, hi = valid
        mag = mag.copy()
        mag[:lo] = 0.0
        mag[hi:] = 0.0
    out = []
    for i in cluster_peaks(mag, threshold, window):
        rho = float(mag[i])
        chisq_r = float(chisq(int(i))) if chisq is not None else 0.0
        out.append(Trigger(detector, snr.template_id, snr.time_of(int(i)), rho, chisq_r, reweight(rho, chisq_r)))
    return out


def find_triggers(whitened: TimeSeries, template: Template, psd: PowerSpectrum, f_low: float, threshold: float,
                  window_s: float, n_bins: int = 16, valid=None) -> list[Trigger]:
    """Filter, cluster and chi-squared-veto one template on one segment."""
    flt = _Filter(whitened, template, psd, f_low)
    series = SnrSeries(template.id, flt.snr(), flt.sigma, whitened.epoch, whitened.dt)
    return cluster(series, threshold, window_s, whitened.detector,
                   chisq=lambda i: _chisq_from_bands(flt.band_snrs(i, n_bins)), valid=valid)


# --- trigger files ----------------------------------------------------------

TRIGGER_HEADER = "detector,template_id,end_time_s,snr,chisq_r,stat"


def format_trigger(t: Trigger) -> str:
    return f"{t.detector},{t.template_id},{t.end_time_s:.9f},{t.snr:.9g},{t.chisq_r:.9g},{t.stat:.9g}"


def write_triggers(triggers, path) -> str:
    """Write a trigger CSV; returns its SHA-256 (hex)."""
    buf = io.StringIO()
    buf.write(TRIGGER_HEADER + "\n")
    for t in triggers:
        buf.write(format_trigger(t) + "\n")
    data = buf.getvalue().encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_triggers(path) -> list[Trigger]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != TRIGGER_HEADER:
        raise ValueError(f"{path}: bad trigger header")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        det, tid, t, snr, chisq, stat = line.split(",")
        out.append(Trigger(det, int(tid), float(t), float(snr), float(chisq), float(stat)))
    return out


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def merge_triggers(paths) -> tuple[list[Trigger], dict[str, str]]:
    """Concatenate trigger files sorted by (end_time, template_id).

    Returns the merged list and the SHA-256 of every input, taken before
    reading. The sort is stable and duplicates are kept.
    """
    checksums = {}
    merged = []
    for p in paths:
        checksums[str(p)] = file_sha256(p)
        merged.extend(read_triggers(p))
    merged.sort(key=lambda t: (t.end_time_s, t.template_id))
    return merged, checksums
