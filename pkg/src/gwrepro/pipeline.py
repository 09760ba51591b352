"""Science stages run by the workflow: data generation and one function per DAG transformation."""

from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np

from . import coinc, search, spectral, synth
from .config import RunConfig
from .plotting import render_histogram_svg
from .wfengine import dag as dagmod

log = logging.getLogger(__name__)

MANIFEST_HEADER = "detector,path,sha256"


def gen_data(cfg: RunConfig, out_dir, seed: int | None = None) -> list[tuple[str, str, str]]:
    """Write one strain file per detector plus ``manifest.csv``; returns the manifest rows."""
    seed = cfg.workflow.seed if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    d = cfg.detectors
    rows = []
    for i, det in enumerate(d.names):
        ts = synth.generate_noise(cfg.noise, det, d.start_s, d.duration, d.sample_rate, seed)
        if cfg.injections:
            psd = synth.model_psd(cfg.noise, len(ts), d.sample_rate, det)
            for inj in cfg.injections:
                ts = synth.inject(ts, inj, psd, cfg.search.f_low, apply_delay=i == 1)
        name = f"{det}.gwsd"
        rows.append((det, name, synth.write_strain(ts, out_dir / name)))
    text = MANIFEST_HEADER + "\n" + "".join(f"{det},{path},{sha}\n" for det, path, sha in rows)
    (out_dir / "manifest.csv").write_text(text)
    return rows


def read_manifest(path) -> list[tuple[str, str, str]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        raise ValueError(f"{path}: bad manifest header")
    return [tuple(line.split(",")) for line in lines[1:] if line]


def bank(cfg: RunConfig) -> list[search.Template]:
    b = cfg.bank
    return search.build_bank(b.mc_min, b.mc_max, b.n_templates, cfg.search.f_low)


def bank_part(cfg: RunConfig, part: int) -> list[search.Template]:
    templates = bank(cfg)
    return [templates[i] for i in np.array_split(np.arange(len(templates)), cfg.bank.parts)[part]]


def template_bins(cfg: RunConfig) -> dict[int, int] | None:
    """Background bins by template duration, equal template counts per bin."""
    n = cfg.coinc.background_bins
    if n <= 1:
        return None
    templates = sorted(bank(cfg), key=lambda t: (t.duration_s, t.id))
    out = {}
    for k, chunk in enumerate(np.array_split(np.arange(len(templates)), n)):
        for i in chunk:
            out[templates[i].id] = k
    return out


# --- stages -----------------------------------------------------------------

_PSD_RE = re.compile(r"calculate_psd-PART(\d+)-(\w{2})_ID\d+$")
_INSPIRAL_RE = re.compile(r"inspiral-FULL_DATA-SEG(\d+)-BANK(\d+)-(\w{2})_ID\d+$")


def calculate_psd(cfg: RunConfig, task, workdir: Path):
    part, det = _PSD_RE.match(task.id).groups()
    part = int(part)
    ts = synth.read_strain(workdir / dagmod.strain_path(det))
    edges = np.linspace(0, len(ts), cfg.search.psd_parts + 1).astype(int)
    chunk = ts.slice(edges[part], edges[part + 1])
    s = cfg.search
    psd = spectral.estimate_psd(chunk, s.psd_segment, s.psd_overlap, "hann", s.psd_average)
    out = workdir / dagmod.psd_path(det, part)
    out.parent.mkdir(parents=True, exist_ok=True)
    spectral.write_psd(psd, out)


def inspiral(cfg: RunConfig, task, workdir: Path):
    seg_i, part, det = _INSPIRAL_RE.match(task.id).groups()
    seg = cfg.segments()[int(seg_i)]
    s = cfg.search
    ts = synth.read_strain(workdir / dagmod.strain_path(det))
    psd_file = next(p for p in task.inputs if p.startswith("psd/"))
    psd = spectral.interpolate_psd(spectral.read_psd(workdir / psd_file), 1.0 / s.segment_length)
    data = ts.slice(seg.start, seg.stop)
    whitened = spectral.whiten(data, psd)
    valid = (seg.valid_start - seg.start, seg.valid_stop - seg.start)
    triggers = []
    for template in bank_part(cfg, int(part)):
        triggers += search.find_triggers(whitened, template, psd, s.f_low, s.snr_threshold, s.cluster_window,
                                         s.chisq_bins, valid)
    triggers.sort(key=lambda t: (t.end_time_s, t.template_id))
    out = workdir / task.outputs[0]
    out.parent.mkdir(parents=True, exist_ok=True)
    search.write_triggers(triggers, out)
    log.info("%s: %d triggers", task.id, len(triggers))


def hdf_trigger_merge(cfg: RunConfig, task, workdir: Path):
    merged, _ = search.merge_triggers([workdir / p for p in task.inputs])
    search.write_triggers(merged, workdir / task.outputs[0])


def run_statmap(cfg: RunConfig, trigs_h, trigs_l):
    """Foreground, background and per-event significance for two merged trigger lists."""
    window = cfg.coinc_window
    interval = (cfg.analyzed_start, cfg.analyzed_time_s)
    foreground = coinc.find_coincidences(trigs_h, trigs_l, window, 0.0, interval, 0)
    background = coinc.estimate_background(trigs_h, trigs_l, window, cfg.slide_config(), cfg.analyzed_start)
    results = coinc.statmap(foreground, background, cfg.analyzed_time_s, cfg.coinc.remove_loudest,
                            template_bins(cfg))
    meta = {
        "n_slides": cfg.coinc.n_slides,
        "slide_step_s": cfg.coinc.slide_step,
        "window_s": round(window, 9),
        "foreground_time_s": cfg.analyzed_time_s,
        "background_time_s": background.total_time_s,
        "remove_loudest": int(cfg.coinc.remove_loudest),
        "background_bins": cfg.coinc.background_bins,
    }
    return results, background, meta


def statmap(cfg: RunConfig, task, workdir: Path):
    h_path, l_path = task.inputs
    results, background, meta = run_statmap(cfg, search.read_triggers(workdir / h_path),
                                            search.read_triggers(workdir / l_path))
    out = workdir / task.outputs[0]
    out.parent.mkdir(parents=True, exist_ok=True)
    coinc.write_results(out, results, background, meta)


def distribute_background_bins(cfg: RunConfig, task, workdir: Path):
    """Per-bin summary of the foreground ranked in each template-duration bin."""
    res = coinc.read_results(workdir / task.inputs[0])
    bins = template_bins(cfg) or {t.id: 0 for t in bank(cfg)}
    durations = {t.id: t.duration_s for t in bank(cfg)}
    lines = ["bin,duration_lo_s,duration_hi_s,n_foreground,loudest_stat,loudest_far"]
    for k in sorted(set(bins.values())):
        ids = [tid for tid, b in bins.items() if b == k]
        rows = [r for r in res.foreground if bins.get(r["template_id"]) == k]
        top = max(rows, key=lambda r: r["combined_stat"]) if rows else None
        lines.append(
            f"{k},{min(durations[i] for i in ids):.6g},{max(durations[i] for i in ids):.6g},{len(rows)},"
            + (f"{top['combined_stat']:.9g},{top['far']:.9g}" if top else ",")
        )
    (workdir / task.outputs[0]).write_text("\n".join(lines) + "\n")


def plot_snrifar(cfg: RunConfig, task, workdir: Path):
    res = coinc.read_results(workdir / task.inputs[0])
    hist = coinc.make_histogram(res.foreground_stats(), res.background_stats(), res.n_slides,
                                cfg.coinc.bin_width, loudest=res.loudest_result())
    csv_path, svg_path = (workdir / p for p in task.outputs)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    coinc.write_histogram_csv(hist, csv_path)
    svg_path.write_text(render_histogram_svg(hist, res))


STAGES = {
    "calculate_psd": calculate_psd,
    "inspiral": inspiral,
    "hdf_trigger_merge": hdf_trigger_merge,
    "statmap": statmap,
    "distribute_background_bins": distribute_background_bins,
    "plot_snrifar": plot_snrifar,
}


def make_runner(cfg: RunConfig):
    def runner(task, workdir):
        fn = STAGES.get(task.transformation)
        if fn is None:
            raise ValueError(f"no stage for transformation {task.transformation!r}")
        fn(cfg, task, Path(workdir))

    return runner
