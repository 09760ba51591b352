"""Power spectral density estimation, interpolation and whitening."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal

from .synth import TimeSeries, check_detector


class ZeroVarianceError(ValueError):
    pass


@dataclass(frozen=True)
class PowerSpectrum:
    df: float
    values: np.ndarray = field(repr=False)
    detector: str = "H1"
    n_averages: int = 0

    def __post_init__(self):
        check_detector(self.detector)
        if not self.df > 0:
            raise ValueError("df must be positive")
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("PSD needs at least two bins")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.df

    @property
    def nyquist(self) -> float:
        return (len(self.values) - 1) * self.df

    def matches(self, n_samples: int, dt: float) -> bool:
        return len(self.values) == n_samples // 2 + 1 and math.isclose(self.df, 1.0 / (n_samples * dt), rel_tol=1e-12)

    def check_positive(self, f_low: float, f_high: float | None = None):
        f = self.frequencies
        band = f >= f_low
        if f_high is not None:
            band &= f <= f_high
        if np.any(self.values[band] <= 0) or not np.all(np.isfinite(self.values[band])):
            raise ValueError(f"PSD is not positive on [{f_low}, {f_high or self.nyquist}] Hz")


def estimate_psd(ts: TimeSeries, seg_len_s=4.0, overlap_fraction=0.5, window="hann", average="median") -> PowerSpectrum:
    """Welch estimate of the one-sided PSD.

    Median averaging is divided by the median-of-exponentials bias factor
    so the estimate is unbiased for Gaussian noise. ``window="boxcar"`` is
    accepted as a diagnostic mode (Parseval checks).
    """
    if not 0 <= overlap_fraction <= 0.9:
        raise ValueError("overlap out of range")
    if window not in ("hann", "boxcar"):
        raise ValueError(f"unsupported window {window!r}")
    if average not in ("median", "mean"):
        raise ValueError(f"unsupported average {average!r}")
    fs = ts.sample_rate
    nperseg = int(round(seg_len_s * fs))
    if nperseg < 2 or len(ts) < 2 * nperseg:
        raise ValueError("series too short for the requested segment length")
    x = ts.samples
    if np.ptp(x) == 0:
        raise ZeroVarianceError("zero-variance input, PSD would be zero")
    noverlap = int(round(overlap_fraction * nperseg))
    step = nperseg - noverlap
    n_avg = (len(x) - nperseg) // step + 1
    _, pxx = signal.welch(
        x, fs=fs, window=window, nperseg=nperseg, noverlap=noverlap,
        detrend=False, return_onesided=True, scaling="density", average=average,
    )
    return PowerSpectrum(fs / nperseg, pxx, ts.detector, n_avg)


def whiten(ts: TimeSeries, psd: PowerSpectrum) -> TimeSeries:
    """Divide by sqrt(S(f) fs / 2) in the frequency domain.

    White noise of PSD ``S = 2 sigma^2 / fs`` comes out with unit variance.
    """
    n = len(ts)
    if not psd.matches(n, ts.dt):
        raise ValueError("PSD grid mismatch; interpolate the PSD to the segment first")
    if np.any(psd.values <= 0):
        raise ValueError("PSD must be positive to whiten")
    spec = np.fft.rfft(ts.samples) / np.sqrt(psd.values * ts.sample_rate / 2.0)
    return ts.with_samples(np.fft.irfft(spec, n=n))


def _grid_ratio(a: float, b: float) -> Fraction:
    ratio = Fraction(a / b).limit_denominator(10_000)
    if not math.isclose(float(ratio), a / b, rel_tol=1e-9):
        raise ValueError("incompatible frequency grids")
    return ratio


def interpolate_psd(psd: PowerSpectrum, df_target: float) -> PowerSpectrum:
    """Resample onto a ``df_target`` grid, linear in log PSD.

    The target grid must share the source's DC and Nyquist endpoints.
    """
    if not df_target > 0:
        raise ValueError("df_target must be positive")
    _grid_ratio(psd.df, df_target)
    n_bins = psd.nyquist / df_target
    if abs(n_bins - round(n_bins)) > 1e-6:
        raise ValueError("incompatible grids: Nyquist is not on the target grid")
    n_bins = int(round(n_bins))
    if math.isclose(df_target, psd.df, rel_tol=1e-12):
        return psd
    if np.any(psd.values <= 0):
        raise ValueError("log interpolation needs a positive PSD")
    f_new = np.arange(n_bins + 1) * df_target
    f_new[-1] = psd.nyquist
    logv = np.interp(f_new, psd.frequencies, np.log(psd.values))
    values = np.exp(logv)
    values[0], values[-1] = psd.values[0], psd.values[-1]
    return PowerSpectrum(df_target, values, psd.detector, psd.n_averages)


def write_psd(psd: PowerSpectrum, path):
    buf = io.StringIO()
    buf.write(f"# detector={psd.detector} df={float(psd.df)!r} n_averages={psd.n_averages}\n")
    buf.write("f_hz,psd\n")
    for f, v in zip(psd.frequencies.tolist(), psd.values.tolist()):
        buf.write(f"{f!r},{v!r}\n")
    Path(path).write_text(buf.getvalue())


def read_psd(path) -> PowerSpectrum:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing PSD metadata line")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    if lines[1].strip() != "f_hz,psd":
        raise ValueError(f"{path}: bad PSD header")
    values = [float(line.split(",")[1]) for line in lines[2:] if line.strip()]
    return PowerSpectrum(float(meta["df"]), values, meta["detector"], int(meta["n_averages"]))
