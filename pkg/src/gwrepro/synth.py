"""Synthetic two-detector strain: colored Gaussian noise, chirp injections,
and the binary strain file format.

All randomness is derived from a single 64-bit master seed through
:func:`derive_seed`, so identical configurations reproduce identical
files byte for byte.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# G * M_sun / c^3 in seconds
MTSUN_SI = 4.925490947641267e-06

DETECTORS = ("H1", "L1")

_MASK64 = (1 << 64) - 1


class StrainFormatError(ValueError):
    pass


class BadMagicError(StrainFormatError):
    pass


class VersionMismatchError(StrainFormatError):
    pass


class ChecksumMismatchError(StrainFormatError):
    pass


class PsdGridMismatch(ValueError):
    pass


def derive_seed(master_seed: int, component: str, detector: str = "", part: int | str = 0) -> int:
    """Substream seed: ``master_seed XOR sha256(component/detector/part)[:8]``."""
    if not 0 <= int(master_seed) <= _MASK64:
        raise ValueError("seed must be a 64-bit unsigned value")
    digest = hashlib.sha256(f"{component}/{detector}/{part}".encode()).digest()
    return (int(master_seed) ^ int.from_bytes(digest[:8], "little")) & _MASK64


def rng_for(master_seed: int, component: str, detector: str = "", part: int | str = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, component, detector, part)))


def check_detector(tag: str) -> str:
    if not (isinstance(tag, str) and len(tag) == 2 and tag.isascii()):
        raise ValueError(f"detector tag must be 2 ASCII characters, got {tag!r}")
    return tag


@dataclass(frozen=True)
class TimeSeries:
    detector: str
    start_s: int
    start_ns: int
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_detector(self.detector)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        rate = 1.0 / self.dt
        if abs(rate - round(rate)) > 1e-9 * rate or round(rate) < 1:
            raise ValueError("sample rate must be a whole number of Hz")
        if not 0 <= self.start_ns < 1_000_000_000:
            raise ValueError("start_ns must be in [0, 1e9)")
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "start_s", int(self.start_s))
        object.__setattr__(self, "start_ns", int(self.start_ns))

    @property
    def sample_rate(self) -> int:
        return int(round(1.0 / self.dt))

    @property
    def epoch(self) -> float:
        return self.start_s + self.start_ns * 1e-9

    @property
    def duration(self) -> float:
        return len(self.samples) * self.dt

    def __len__(self):
        return len(self.samples)

    def with_samples(self, samples) -> "TimeSeries":
        return TimeSeries(self.detector, self.start_s, self.start_ns, self.dt, samples)

    def slice(self, start_index: int, stop_index: int) -> "TimeSeries":
        """Sub-series of samples ``[start_index, stop_index)`` with the epoch moved accordingly."""
        if not 0 <= start_index < stop_index <= len(self.samples):
            raise ValueError("slice out of range")
        offset_ns = self.start_ns + int(round(start_index * self.dt * 1e9))
        return TimeSeries(
            self.detector,
            self.start_s + offset_ns // 1_000_000_000,
            offset_ns % 1_000_000_000,
            self.dt,
            self.samples[start_index:stop_index],
        )


@dataclass(frozen=True)
class NoiseModel:
    """Noise model for :func:`generate_noise`.

    ``white`` noise has one-sided PSD ``2 sigma^2 / fs``.  The
    ``power-law`` model multiplies that level by
    ``floor + (f / f_ref) ** exponent``, with ``f`` clipped below at
    ``f_min`` so the PSD stays finite at DC.
    """

    kind: str = "white"
    sigma: float = 1.0
    f_ref: float = 40.0
    exponent: float = -4.0
    floor: float = 1.0
    f_min: float = 10.0

    def __post_init__(self):
        if self.kind not in ("white", "power-law"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == "power-law":
            if not (self.f_ref > 0 and self.f_min > 0 and self.floor >= 0):
                raise ValueError("power-law parameters must be positive")

    def psd(self, freqs, sample_rate: float) -> np.ndarray:
        freqs = np.asarray(freqs, dtype=float)
        level = 2.0 * self.sigma**2 / sample_rate
        if self.kind == "white":
            return np.full(freqs.shape, level)
        f = np.maximum(freqs, self.f_min)
        return level * (self.floor + (f / self.f_ref) ** self.exponent)


@dataclass(frozen=True)
class InjectionSpec:
    chirp_mass: float
    coalescence_time_s: float
    phase: float = 0.0
    target_snr: float = 10.0
    inter_detector_delay_s: float = 0.0

    def __post_init__(self):
        if not self.chirp_mass > 0:
            raise ValueError("chirp_mass must be positive")
        if not self.target_snr > 0:
            raise ValueError("target_snr must be positive")
        if not 0 <= self.phase < 2 * math.pi:
            raise ValueError("phase must be in [0, 2*pi)")

    def check_delay(self, light_travel_time_s: float):
        if abs(self.inter_detector_delay_s) > light_travel_time_s:
            raise ValueError("inter-detector delay exceeds the light travel time")


def sample_count(duration_s, sample_rate_hz) -> int:
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    n = duration_s * sample_rate_hz
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ValueError("duration x sample rate must be a positive integer")
    return int(round(n))


def generate_noise(model: NoiseModel, detector: str, start_s: int, duration_s, sample_rate_hz, seed: int) -> TimeSeries:
    """Gaussian noise whose one-sided PSD matches ``model`` in expectation.

    The stream for each detector comes from its own substream of ``seed``.
    """
    n = sample_count(duration_s, sample_rate_hz)
    rng = rng_for(seed, "noise", detector)
    if model.kind == "white":
        samples = model.sigma * rng.standard_normal(n)
    else:
        # Frequency-domain coloring: E|X_k|^2 = S_k * N * fs / 2 for
        # the one-sided PSD S, real DC and Nyquist bins.
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
        amp = np.sqrt(model.psd(freqs, sample_rate_hz) * n * sample_rate_hz / 4.0)
        spec = amp * (rng.standard_normal(len(freqs)) + 1j * rng.standard_normal(len(freqs)))
        spec[0] = amp[0] * math.sqrt(2.0) * rng.standard_normal()
        if n % 2 == 0:
            spec[-1] = amp[-1] * math.sqrt(2.0) * rng.standard_normal()
        samples = np.fft.irfft(spec, n=n)
    return TimeSeries(check_detector(detector), int(start_s), 0, 1.0 / sample_rate_hz, samples)


def model_psd(model: NoiseModel, n_samples: int, sample_rate_hz: float, detector: str = "H1"):
    """The model PSD tabulated on the rfft grid of an ``n_samples`` series."""
    from .spectral import PowerSpectrum

    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate_hz)
    return PowerSpectrum(sample_rate_hz / n_samples, model.psd(freqs, sample_rate_hz), detector, 0)


# --- waveform ---------------------------------------------------------------


def isco_frequency(chirp_mass: float) -> float:
    """ISCO gravitational-wave frequency for an equal-mass binary of this chirp mass."""
    total_mass = 2 ** 1.2 * chirp_mass
    return 1.0 / (6**1.5 * math.pi * total_mass * MTSUN_SI)


def chirp_duration(chirp_mass: float, f_low: float) -> float:
    """Newtonian time to coalescence from ``f_low``."""
    mc = chirp_mass * MTSUN_SI
    return 5.0 / 256.0 * mc ** (-5.0 / 3.0) * (math.pi * f_low) ** (-8.0 / 3.0)


def chirp_fd(chirp_mass: float, freqs, f_low: float, tc: float = 0.0, phase: float = 0.0) -> np.ndarray:
    """Stationary-phase Newtonian inspiral, unnormalized.

    Returns ``f^(-7/6) exp(-i Psi(f))`` on ``[f_low, f_isco]`` and zero
    elsewhere, with ``Psi = 2 pi f tc - phase - pi/4 + 3/128 (pi Mc f)^(-5/3)``.
    The ``exp(-i Psi)`` sign matches numpy's forward FFT, so the signal
    coalesces at ``tc`` after an inverse transform.
    """
    freqs = np.asarray(freqs, dtype=float)
    out = np.zeros(freqs.shape, dtype=complex)
    band = (freqs >= f_low) & (freqs <= isco_frequency(chirp_mass))
    f = freqs[band]
    if f.size == 0:
        return out
    mc = chirp_mass * MTSUN_SI
    psi = 2 * np.pi * f * tc - phase - np.pi / 4 + 3.0 / 128.0 * (np.pi * mc * f) ** (-5.0 / 3.0)
    out[band] = f ** (-7.0 / 6.0) * np.exp(-1j * psi)
    return out


def optimal_snr(htilde, psd_values, df: float) -> float:
    """sqrt(4 sum |h(f)|^2 / S(f) df) for a continuous-normalized ``htilde``."""
    htilde = np.asarray(htilde)
    psd_values = np.asarray(psd_values)
    nz = htilde != 0
    return math.sqrt(4.0 * df * float(np.sum(np.abs(htilde[nz]) ** 2 / psd_values[nz])))


def inject(ts: TimeSeries, spec: InjectionSpec, psd, f_low: float, apply_delay: bool = False) -> TimeSeries:
    """Return ``ts`` plus a chirp scaled to ``spec.target_snr`` against ``psd``.

    ``psd`` must be tabulated on the rfft grid of ``ts``. The coalescence
    time is ``spec.coalescence_time_s`` (plus the inter-detector delay when
    ``apply_delay`` is set) and must lie inside the series.
    """
    n = len(ts)
    df = 1.0 / (n * ts.dt)
    if len(psd.values) != n // 2 + 1 or not math.isclose(psd.df, df, rel_tol=1e-12):
        raise PsdGridMismatch("PSD grid does not match the series")
    tc = spec.coalescence_time_s + (spec.inter_detector_delay_s if apply_delay else 0.0)
    rel_tc = (tc - ts.start_s) - ts.start_ns * 1e-9
    if not 0 <= rel_tc < ts.duration:
        raise ValueError("coalescence time outside segment")
    freqs = np.arange(n // 2 + 1) * df
    htilde = chirp_fd(spec.chirp_mass, freqs, f_low, rel_tc, spec.phase)
    if not np.any(htilde):
        raise ValueError("waveform band is empty between f_low and Nyquist")
    if np.any(psd.values[htilde != 0] <= 0):
        raise ValueError("PSD must be positive over the waveform band")
    htilde *= spec.target_snr / optimal_snr(htilde, psd.values, df)
    signal = np.fft.irfft(htilde / ts.dt, n=n)
    return ts.with_samples(ts.samples + signal)


# --- strain file ------------------------------------------------------------

STRAIN_MAGIC = b"GWSD"
STRAIN_VERSION = 1
_HEADER = struct.Struct("<4sH2sqIdQ32s")


def write_strain(ts: TimeSeries, path) -> str:
    """Write ``ts`` in the GWSD format; returns the payload SHA-256 (hex)."""
    if len(ts.samples) == 0:
        raise ValueError("cannot write an empty series")
    payload = np.ascontiguousarray(ts.samples, dtype="<f8").tobytes()
    digest = hashlib.sha256(payload).digest()
    header = _HEADER.pack(
        STRAIN_MAGIC,
        STRAIN_VERSION,
        ts.detector.encode("ascii"),
        ts.start_s,
        ts.start_ns,
        float(ts.sample_rate),
        len(ts.samples),
        digest,
    )
    Path(path).write_bytes(header + payload)
    return digest.hex()


def read_strain(path) -> TimeSeries:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != STRAIN_MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    magic, version, tag, start_s, start_ns, rate, n, digest = _HEADER.unpack_from(raw)
    if version != STRAIN_VERSION:
        raise VersionMismatchError(f"{path}: version mismatch ({version} != {STRAIN_VERSION})")
    payload = raw[_HEADER.size:]
    if len(payload) != 8 * n:
        raise StrainFormatError(f"{path}: truncated payload")
    if hashlib.sha256(payload).digest() != digest:
        raise ChecksumMismatchError(f"{path}: checksum mismatch")
    samples = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return TimeSeries(tag.decode("ascii"), start_s, start_ns, 1.0 / rate, samples)


def strain_checksum(path) -> str:
    """The checksum stored in a strain file's header."""
    raw = Path(path).read_bytes()[: _HEADER.size]
    return _HEADER.unpack(raw)[-1].hex()
