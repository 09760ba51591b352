"""INI run configuration.

Sections: ``[detectors] [noise] [injections] [bank] [search] [coinc]
[workflow]``. Unknown sections and keys are rejected, and every module
precondition that can be checked without data is checked at parse time.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .coinc import SlideConfig
from .synth import InjectionSpec, NoiseModel, check_detector, sample_count
from .wfengine.dag import DEFAULT_MEMORY_MB, PlanConfig
from .wfengine.matchmaking import Policy


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    names: tuple = ("H1", "L1")
    sample_rate: int = 4096
    duration: float = 256.0
    start_s: int = 1126259446
    light_travel_time: float = 0.010


@dataclass(frozen=True)
class BankConfig:
    mc_min: float = 10.0
    mc_max: float = 40.0
    n_templates: int = 32
    parts: int = 1


@dataclass(frozen=True)
class SearchConfig:
    f_low: float = 20.0
    snr_threshold: float = 5.5
    chisq_bins: int = 16
    cluster_window: float = 1.0
    segment_length: float = 64.0
    segment_guard: float = 8.0
    psd_segment: float = 4.0
    psd_overlap: float = 0.5
    psd_average: str = "median"
    psd_parts: int = 2


@dataclass(frozen=True)
class CoincConfig:
    timing_slack: float = 0.005
    n_slides: int = 200
    slide_step: float = 0.1
    remove_loudest: bool = True
    background_bins: int = 1
    bin_width: float = 0.2


@dataclass(frozen=True)
class WorkflowConfig:
    seed: int = 0
    nodes: str = ""
    max_retries: int = 5
    escalation_factor: float = 2.0
    memory_sigma: float = 0.3
    workers: int = 1
    inspiral_features: tuple = ("fma4",)
    hidden_features: tuple = ()  # (transformation, feature) pairs
    corrupt: tuple = ()
    request_mem_mb: dict = field(default_factory=lambda: dict(DEFAULT_MEMORY_MB))


@dataclass(frozen=True)
class Segment:
    index: int
    start: int  # sample offsets into the full series
    stop: int
    valid_start: int
    valid_stop: int


@dataclass(frozen=True)
class RunConfig:
    detectors: DetectorConfig = DetectorConfig()
    noise: NoiseModel = NoiseModel()
    injections: tuple = ()
    bank: BankConfig = BankConfig()
    search: SearchConfig = SearchConfig()
    coinc: CoincConfig = CoincConfig()
    workflow: WorkflowConfig = WorkflowConfig()

    @property
    def n_samples(self) -> int:
        return sample_count(self.detectors.duration, self.detectors.sample_rate)

    @property
    def coinc_window(self) -> float:
        return self.detectors.light_travel_time + self.coinc.timing_slack

    def segments(self) -> list[Segment]:
        """Filtering segments whose guarded interiors tile the analyzed span without overlap."""
        fs = self.detectors.sample_rate
        n = self.n_samples
        seg = int(round(self.search.segment_length * fs))
        guard = int(round(self.search.segment_guard * fs))
        if n < seg:
            return []
        stride = seg - 2 * guard
        out = []
        k = 0
        valid_start = guard
        while valid_start < n - guard:
            valid_stop = min(valid_start + stride, n - guard)
            start = min(valid_start - guard, n - seg)
            out.append(Segment(k, start, start + seg, valid_start, valid_stop))
            valid_start = valid_stop
            k += 1
        return out

    @property
    def analyzed_time_s(self) -> float:
        segs = self.segments()
        if not segs:
            return 0.0
        return (segs[-1].valid_stop - segs[0].valid_start) / self.detectors.sample_rate

    @property
    def analyzed_start(self) -> float:
        segs = self.segments()
        guard = segs[0].valid_start if segs else 0
        return self.detectors.start_s + guard / self.detectors.sample_rate

    def slide_config(self) -> SlideConfig:
        return SlideConfig(self.coinc.n_slides, self.coinc.slide_step, self.analyzed_time_s)

    def plan_config(self) -> PlanConfig:
        return PlanConfig(
            detectors=self.detectors.names,
            psd_parts=self.search.psd_parts,
            n_segments=len(self.segments()),
            bank_parts=self.bank.parts,
            background_bins=self.coinc.background_bins,
            inspiral_features=frozenset(self.workflow.inspiral_features),
            request_mem_mb=dict(self.workflow.request_mem_mb),
            max_retries=self.workflow.max_retries,
        )

    def policy(self) -> Policy:
        hidden = {}
        for transformation, feature in self.workflow.hidden_features:
            hidden.setdefault(transformation, set()).add(feature)
        return Policy(
            escalation_factor=self.workflow.escalation_factor,
            memory_sigma=self.workflow.memory_sigma,
            hidden_features={k: frozenset(v) for k, v in hidden.items()},
            corrupt_outputs=frozenset(self.workflow.corrupt),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        from dataclasses import replace

        return replace(self, workflow=replace(self.workflow, seed=int(seed)))


_SECTIONS = ("detectors", "noise", "injections", "bank", "search", "coinc", "workflow")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _parse_section(parser, section, converters, extra=None) -> dict:
    values = {}
    if not parser.has_section(section):
        return values
    for key, raw in parser.items(section):
        if extra is not None and extra(key, raw, values):
            continue
        if key not in converters:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        try:
            values[key] = converters[key](raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] bad value for {key!r}: {exc}") from None
    return values


def _parse_injection(value: str, start_s: int) -> InjectionSpec:
    fields_ = {}
    for item in value.split():
        k, sep, v = item.partition("=")
        if not sep or k not in ("chirp_mass", "tc", "phase", "snr", "delay"):
            raise ValueError(f"bad injection field {item!r}")
        fields_[k] = float(v)
    if "chirp_mass" not in fields_ or "tc" not in fields_:
        raise ValueError("injection needs chirp_mass and tc")
    return InjectionSpec(
        chirp_mass=fields_["chirp_mass"],
        coalescence_time_s=start_s + fields_["tc"],
        phase=fields_.get("phase", 0.0),
        target_snr=fields_.get("snr", 10.0),
        inter_detector_delay_s=fields_.get("delay", 0.0),
    )


def loads_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")

    d = _parse_section(parser, "detectors", {
        "names": _list, "sample_rate": int, "duration": float, "start_s": int, "light_travel_time": float})
    try:
        detectors = DetectorConfig(**d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    n = _parse_section(parser, "noise", {
        "kind": str, "sigma": float, "f_ref": float, "exponent": float, "floor": float, "f_min": float})
    b = _parse_section(parser, "bank", {
        "mc_min": float, "mc_max": float, "n_templates": int, "parts": int})
    s = _parse_section(parser, "search", {
        "f_low": float, "snr_threshold": float, "chisq_bins": int, "cluster_window": float,
        "segment_length": float, "segment_guard": float, "psd_segment": float, "psd_overlap": float,
        "psd_average": str, "psd_parts": int})
    c = _parse_section(parser, "coinc", {
        "timing_slack": float, "n_slides": int, "slide_step": float, "remove_loudest": _bool,
        "background_bins": int, "bin_width": float})

    mem = dict(DEFAULT_MEMORY_MB)

    def mem_key(key, raw, values):
        if key.startswith("mem_"):
            name = key[4:]
            if name not in DEFAULT_MEMORY_MB:
                raise ConfigError(f"[workflow] unknown key {key!r}")
            try:
                mem[name] = int(raw)
            except ValueError:
                raise ConfigError(f"[workflow] bad value for {key!r}") from None
            return True
        return False

    def pairs(raw):
        out = []
        for item in _list(raw):
            t, sep, f = item.partition(":")
            if not sep:
                raise ValueError(f"expected transformation:feature, got {item!r}")
            out.append((t, f))
        return tuple(out)

    w = _parse_section(parser, "workflow", {
        "seed": int, "nodes": str, "max_retries": int, "escalation_factor": float, "memory_sigma": float,
        "workers": int, "inspiral_features": _list, "hidden_features": pairs, "corrupt": _list}, extra=mem_key)

    injections = []
    if parser.has_section("injections"):
        for key, raw in parser.items("injections"):
            if not (key.startswith("inj") and key[3:].isdigit()):
                raise ConfigError(f"[injections] unknown key {key!r}")
            try:
                injections.append(_parse_injection(raw, detectors.start_s))
            except ValueError as exc:
                raise ConfigError(f"[injections] bad value for {key!r}: {exc}") from None

    try:
        cfg = RunConfig(
            detectors=detectors,
            noise=NoiseModel(**n),
            injections=tuple(injections),
            bank=BankConfig(**b),
            search=SearchConfig(**s),
            coinc=CoincConfig(**c),
            workflow=WorkflowConfig(**w, request_mem_mb=mem),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    return loads_config(Path(path).read_text())


def validate(cfg: RunConfig):
    d, s, c, b, w = cfg.detectors, cfg.search, cfg.coinc, cfg.bank, cfg.workflow

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    need(len(d.names) == 2 and len(set(d.names)) == 2, "[detectors] names", "exactly two distinct detectors")
    for name in d.names:
        try:
            check_detector(name)
        except ValueError as exc:
            raise ConfigError(f"[detectors] names: {exc}") from None
    need(d.sample_rate > 0, "[detectors] sample_rate", "must be a positive integer")
    try:
        sample_count(d.duration, d.sample_rate)
    except ValueError as exc:
        raise ConfigError(f"[detectors] duration: {exc}") from None
    need(d.light_travel_time > 0, "[detectors] light_travel_time", "must be positive")
    need(0 < s.f_low < d.sample_rate / 2, "[search] f_low", "must lie below Nyquist")
    need(s.snr_threshold > 0, "[search] snr_threshold", "must be positive")
    need(s.chisq_bins >= 2, "[search] chisq_bins", "need >= 2 bins")
    need(s.cluster_window > 0, "[search] cluster_window", "must be positive")
    seg = s.segment_length * d.sample_rate
    need(seg == int(seg) and int(seg) & (int(seg) - 1) == 0, "[search] segment_length",
         "segment length in samples must be a power of two")
    need(0 <= s.segment_guard and 2 * s.segment_guard < s.segment_length, "[search] segment_guard",
         "must be less than half the segment")
    need(0 <= s.psd_overlap <= 0.9, "[search] psd_overlap", "overlap out of range")
    need(s.psd_average in ("median", "mean"), "[search] psd_average", "must be median or mean")
    need(s.psd_parts >= 1, "[search] psd_parts", "must be >= 1")
    need(d.duration / s.psd_parts >= 2 * s.psd_segment, "[search] psd_parts",
         "each PSD part needs at least two Welch segments")
    need(0 < b.mc_min < b.mc_max, "[bank] mc_min", "need 0 < mc_min < mc_max")
    need(b.n_templates >= 1 and 1 <= b.parts <= b.n_templates, "[bank] parts", "need 1 <= parts <= n_templates")
    need(c.background_bins >= 1, "[coinc] background_bins", "must be >= 1")
    need(c.bin_width > 0, "[coinc] bin_width", "must be positive")
    need(c.timing_slack >= 0, "[coinc] timing_slack", "must be >= 0")
    need(w.max_retries >= 0, "[workflow] max_retries", "must be >= 0")
    need(w.escalation_factor >= 1, "[workflow] escalation_factor", "must be >= 1")
    need(w.workers >= 1, "[workflow] workers", "must be >= 1")
    need(0 <= w.seed < 2**64, "[workflow] seed", "must be a 64-bit unsigned value")
    for inj in cfg.injections:
        rel = inj.coalescence_time_s - d.start_s
        need(0 <= rel < d.duration, "[injections]", "coalescence time outside the data")
        try:
            inj.check_delay(d.light_travel_time)
        except ValueError as exc:
            raise ConfigError(f"[injections]: {exc}") from None
        need(0 <= rel + inj.inter_detector_delay_s < d.duration, "[injections]",
             "delayed coalescence time outside the data")
    if cfg.segments():
        try:
            slides = cfg.slide_config()
            slides.check_window(cfg.coinc_window)
        except ValueError as exc:
            raise ConfigError(f"[coinc] n_slides/slide_step: {exc}") from None
