"""Two-detector coincidence, time-slide background and significance."""

from __future__ import annotations

import bisect
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .search import Trigger


@dataclass(frozen=True)
class CoincEvent:
    trigger_h: Trigger
    trigger_l: Trigger
    dt_s: float
    combined_stat: float
    slide_index: int = 0

    @property
    def template_id(self) -> int:
        return self.trigger_h.template_id


@dataclass(frozen=True)
class SlideConfig:
    n_slides: int = 200
    step_s: float = 0.1
    analyzed_time_s: float = 240.0

    def __post_init__(self):
        if self.n_slides < 1:
            raise ValueError("n_slides must be >= 1")
        if not self.step_s > 0 or not self.analyzed_time_s > 0:
            raise ValueError("step and analyzed time must be positive")
        if self.n_slides * self.step_s > self.analyzed_time_s:
            raise ValueError("n_slides x step exceeds the analyzed time")

    def check_window(self, window_s: float):
        if self.step_s <= 2 * window_s:
            raise ValueError("slides not independent: step must exceed twice the window")


@dataclass(frozen=True)
class SignificanceResult:
    combined_stat: float
    far_per_s: float
    p_value: float
    sigma: float
    is_lower_bound: bool
    event: CoincEvent | None = field(default=None, compare=False)

    def sigma_text(self) -> str:
        return f"> {self.sigma:.2f}σ" if self.is_lower_bound else f"{self.sigma:.2f}σ"


def combine(stat_h: float, stat_l: float) -> float:
    return math.sqrt(stat_h * stat_h + stat_l * stat_l)


def _check_sorted(trigs, name):
    times = [t.end_time_s for t in trigs]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError(f"{name} triggers are not time-sorted")


def _wrap(t: float, shift: float, interval) -> float:
    if interval is None:
        return t + shift
    start, length = interval
    return start + (t + shift - start) % length


def find_coincidences(trigs_h, trigs_l, window_s: float, shift_s: float = 0.0, interval=None, slide_index: int = 0) -> list[CoincEvent]:
    """Pair triggers with equal template ids and ``|t_h - wrap(t_l + shift)| <= window``.

    ``interval = (start, length)`` makes the shift circular. Each trigger
    joins at most one coincidence: candidate pairs are accepted loudest
    first, ties broken by time and then template id.
    """
    if not window_s > 0:
        raise ValueError("window must be positive")
    _check_sorted(trigs_h, "first detector")
    _check_sorted(trigs_l, "second detector")
    shifted = defaultdict(list)
    for j, t in enumerate(trigs_l):
        shifted[t.template_id].append((_wrap(t.end_time_s, shift_s, interval), j))
    for rows in shifted.values():
        rows.sort()
    candidates = []
    for i, th in enumerate(trigs_h):
        rows = shifted.get(th.template_id)
        if not rows:
            continue
        lo = bisect.bisect_left(rows, (th.end_time_s - window_s - 1e-9, -1))
        for tl_shift, j in rows[lo:]:
            if tl_shift > th.end_time_s + window_s + 1e-9:
                break
            dt = th.end_time_s - tl_shift
            if abs(dt) <= window_s + 1e-9:  # same slack as the bisect bounds
                c = combine(th.stat, trigs_l[j].stat)
                candidates.append((-c, th.end_time_s, tl_shift, th.template_id, i, j, dt))
    candidates.sort()
    used_h, used_l, out = set(), set(), []
    for neg_c, _, _, _, i, j, dt in candidates:
        if i in used_h or j in used_l:
            continue
        used_h.add(i)
        used_l.add(j)
        out.append(CoincEvent(trigs_h[i], trigs_l[j], dt, -neg_c, slide_index))
    return out


@dataclass(frozen=True)
class Background:
    events: tuple
    total_time_s: float
    n_slides: int

    @property
    def stats(self) -> np.ndarray:
        return np.array([e.combined_stat for e in self.events], dtype=float)


def _canonical(events):
    return tuple(sorted(events, key=lambda e: (e.combined_stat, e.slide_index, e.trigger_h.end_time_s, e.template_id)))


def estimate_background(trigs_h, trigs_l, window_s: float, slides: SlideConfig, interval_start: float = 0.0, slide_order=None) -> Background:
    """Coincidences at shifts ``k * step`` for ``k = 1..n_slides``, zero lag excluded.

    Shifts are circular on ``[interval_start, interval_start + analyzed_time)``.
    The result does not depend on ``slide_order``.
    """
    slides.check_window(window_s)
    ks = list(range(1, slides.n_slides + 1)) if slide_order is None else list(slide_order)
    if sorted(ks) != list(range(1, slides.n_slides + 1)):
        raise ValueError("slide_order must be a permutation of 1..n_slides")
    interval = (interval_start, slides.analyzed_time_s)
    events = []
    for k in ks:
        events.extend(find_coincidences(trigs_h, trigs_l, window_s, k * slides.step_s, interval, k))
    return Background(_canonical(events), slides.n_slides * slides.analyzed_time_s, slides.n_slides)


def far_of(stat: float, background_stats, total_background_time_s: float) -> tuple[float, bool]:
    """``(1 + n_louder) / T`` where louder means ``>= stat``; flags a bound when none are louder."""
    if not total_background_time_s > 0:
        raise ValueError("background time must be positive")
    bg = np.sort(np.asarray(background_stats, dtype=float))
    n_louder = int(bg.size - np.searchsorted(bg, stat, side="left"))
    return (1 + n_louder) / total_background_time_s, n_louder == 0


def significance(far_per_s: float, foreground_time_s: float, p_floor: float | None = None) -> tuple[float, float]:
    """p-value ``1 - exp(-far T)`` and its one-sided Gaussian sigma.

    With ``p_floor`` the p-value is not allowed below the floor.
    """
    if far_per_s < 0 or not foreground_time_s > 0:
        raise ValueError("far must be >= 0 and foreground time positive")
    p = -math.expm1(-far_per_s * foreground_time_s)
    if p_floor is not None:
        p = max(p, p_floor)
    if p <= 0:
        return 0.0, math.inf
    return p, float(norm.isf(p))


def p_value_floor(foreground_time_s: float, total_background_time_s: float) -> float:
    """One tenth of the smallest p-value the slides can resolve."""
    return foreground_time_s / (10.0 * total_background_time_s)


def _result(event, bg_stats, total_time, foreground_time, trials=1) -> SignificanceResult:
    far, bound = far_of(event.combined_stat, bg_stats, total_time)
    far *= trials
    floor = p_value_floor(foreground_time, total_time)
    p_raw = -math.expm1(-far * foreground_time)
    p, sigma = significance(far, foreground_time, floor)
    return SignificanceResult(event.combined_stat, far, p, sigma, bound or p_raw < floor, event)


def loudest(events):
    return min(events, key=lambda e: (-e.combined_stat, e.trigger_h.end_time_s, e.template_id)) if events else None


def statmap(foreground, background: Background, foreground_time_s: float, remove_loudest: bool = False, template_bins=None) -> list[SignificanceResult]:
    """FAR, p-value and sigma for every foreground event, loudest first.

    With ``remove_loudest`` the loudest event is ranked against a background
    without coincidences that reuse either of its triggers. ``template_bins``
    maps template id to a background bin; each event is then ranked only
    against its own bin, with the FAR multiplied by the number of bins.
    """
    fg = sorted(foreground, key=lambda e: (-e.combined_stat, e.trigger_h.end_time_s, e.template_id))
    bin_of = (lambda e: template_bins[e.template_id]) if template_bins else (lambda e: 0)
    n_bins = len(set(template_bins.values())) if template_bins else 1
    by_bin = defaultdict(list)
    for e in background.events:
        by_bin[bin_of(e)].append(e)
    top = fg[0] if fg else None
    results = []
    for e in fg:
        pool = by_bin[bin_of(e)]
        if remove_loudest and e is top:
            pool = [b for b in pool if b.trigger_h != top.trigger_h and b.trigger_l != top.trigger_l]
        stats = [b.combined_stat for b in pool]
        results.append(_result(e, stats, background.total_time_s, foreground_time_s, n_bins))
    return results


@dataclass(frozen=True)
class HistogramData:
    bin_width: float
    bins: tuple  # (left_edge, foreground_count, mean_background_per_trial)
    loudest: SignificanceResult | None = None

    @property
    def edges(self) -> np.ndarray:
        return np.array([b[0] for b in self.bins] + ([self.bins[-1][0] + self.bin_width] if self.bins else []))


def histogram_range(stats, bin_width: float = 0.2) -> tuple[float, float]:
    stats = list(stats)
    if not stats:
        return 0.0, bin_width
    lo = math.floor(min(stats) / bin_width) * bin_width
    hi = (math.floor(max(stats) / bin_width) + 1) * bin_width
    return round(lo, 10), round(hi, 10)


def make_histogram(foreground_stats, background_stats, n_slides: int, bin_width: float = 0.2, range=None, loudest=None) -> HistogramData:
    """Left-closed, right-open bins of foreground counts and background per slide."""
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    if n_slides < 1:
        raise ValueError("n_slides must be >= 1")
    fg = np.asarray(list(foreground_stats), dtype=float)
    bg = np.asarray(list(background_stats), dtype=float)
    if range is None:
        range = histogram_range(np.concatenate([fg, bg]), bin_width)
    lo, hi = range
    n = max(1, int(round((hi - lo) / bin_width)))
    edges = np.round(lo + bin_width * np.arange(n + 1), 10)

    def counts(x):
        idx = np.searchsorted(edges, x, side="right") - 1
        idx = idx[(idx >= 0) & (idx < n) & (x < edges[-1])]
        return np.bincount(idx, minlength=n)

    fg_counts, bg_counts = counts(fg), counts(bg)
    bins = tuple((float(edges[k]), int(fg_counts[k]), bg_counts[k] / n_slides) for k in np.arange(n))
    return HistogramData(bin_width, bins, loudest)


def write_histogram_csv(hist: HistogramData, path):
    lines = ["bin_left,fg_count,mean_bg_per_trial"]
    lines += [f"{left:.10g},{fg},{bg:.10g}" for left, fg, bg in hist.bins]
    Path(path).write_text("\n".join(lines) + "\n")


def read_histogram_csv(path) -> list[tuple[float, int, float]]:
    lines = Path(path).read_text().splitlines()
    if lines[0] != "bin_left,fg_count,mean_bg_per_trial":
        raise ValueError(f"{path}: bad histogram header")
    rows = []
    for line in lines[1:]:
        left, fg, bg = line.split(",")
        rows.append((float(left), int(fg), float(bg)))
    return rows


# --- results file -----------------------------------------------------------

FOREGROUND_HEADER = ("template_id,end_time_h,end_time_l,snr_h,snr_l,chisq_h,chisq_l,stat_h,stat_l,"
                     "dt_s,combined_stat,far,p,sigma,is_lower_bound")
BACKGROUND_HEADER = "combined_stat,slide_index"


@dataclass
class Results:
    meta: dict
    foreground: list  # dict rows
    background: list  # (combined_stat, slide_index)

    @property
    def n_slides(self) -> int:
        return int(self.meta["n_slides"])

    @property
    def foreground_time_s(self) -> float:
        return float(self.meta["foreground_time_s"])

    @property
    def background_time_s(self) -> float:
        return float(self.meta["background_time_s"])

    def foreground_stats(self):
        return [row["combined_stat"] for row in self.foreground]

    def background_stats(self):
        return [s for s, _ in self.background]

    def loudest_result(self) -> SignificanceResult | None:
        if not self.foreground:
            return None
        row = max(self.foreground, key=lambda r: r["combined_stat"])
        return SignificanceResult(row["combined_stat"], row["far"], row["p"], row["sigma"], row["is_lower_bound"])


def write_results(path, results: list[SignificanceResult], background: Background, meta: dict) -> None:
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    buf.write("[foreground]\n" + FOREGROUND_HEADER + "\n")
    for r in results:
        e = r.event
        h, l = e.trigger_h, e.trigger_l
        buf.write(
            f"{e.template_id},{h.end_time_s:.9f},{l.end_time_s:.9f},{h.snr:.9g},{l.snr:.9g},"
            f"{h.chisq_r:.9g},{l.chisq_r:.9g},{h.stat:.9g},{l.stat:.9g},{e.dt_s:.9g},"
            f"{r.combined_stat:.9g},{r.far_per_s:.9g},{r.p_value:.9g},{r.sigma:.9g},{int(r.is_lower_bound)}\n"
        )
    buf.write("[background]\n" + BACKGROUND_HEADER + "\n")
    for e in background.events:
        buf.write(f"{e.combined_stat:.9g},{e.slide_index}\n")
    Path(path).write_text(buf.getvalue())


def read_results(path) -> Results:
    meta, fg, bg = {}, [], []
    section = None
    fg_keys = FOREGROUND_HEADER.split(",")
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line in ("[foreground]", "[background]"):
            section = line
        elif line in (FOREGROUND_HEADER, BACKGROUND_HEADER):
            continue
        elif section == "[foreground]":
            row = dict(zip(fg_keys, line.split(",")))
            parsed = {k: float(v) for k, v in row.items()}
            parsed["template_id"] = int(row["template_id"])
            parsed["is_lower_bound"] = row["is_lower_bound"] == "1"
            fg.append(parsed)
        elif section == "[background]":
            stat, k = line.split(",")
            bg.append((float(stat), int(k)))
        else:
            raise ValueError(f"{path}: unexpected line {line!r}")
    if "n_slides" not in meta:
        raise ValueError(f"{path}: missing n_slides metadata")
    return Results(meta, fg, bg)
