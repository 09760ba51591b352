"""Command-line entry points: gen-data, plan, run, hist, stats.

Exit codes: 0 success, 1 usage error, 2 missing or invalid input,
3 execution failure.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from . import coinc, pipeline, synth
from .config import ConfigError, load_config
from .plotting import render_histogram_svg
from .wfengine import dag as dagmod
from .wfengine import ProvenanceLog, execute, read_nodes, render_report, report, summarize_transformations
from .wfengine.stats import render_transformation_table

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_FAILED = 0, 1, 2, 3

log = logging.getLogger("gwrepro")


class InputError(Exception):
    """Missing or invalid input; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args):
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        raise InputError(f"config file not found: {args.config}") from None
    except ConfigError as exc:
        raise InputError(f"invalid config {args.config}: {exc}") from None
    return cfg if args.seed is None else cfg.with_seed(args.seed)


def _fresh_dir(path: Path, force: bool):
    if path.exists() and any(path.iterdir()):
        if not force:
            raise InputError(f"output directory {path} exists and is not empty (use --force)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    _fresh_dir(out, args.force)
    rows = pipeline.gen_data(cfg, out, cfg.workflow.seed)
    for det, path, sha in rows:
        print(f"{det}  {out / path}  sha256={sha}")
    print(f"manifest: {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _config(args)
    try:
        dag = dagmod.plan(cfg.plan_config())
    except dagmod.DagError as exc:
        raise InputError(str(exc)) from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    dagmod.write_dag(dag, args.out)
    print(f"{len(dag.tasks)} tasks written to {args.out}")
    return EXIT_OK


def _stage_data(cfg, data_dir: Path, out: Path):
    """Verify the strain files against the manifest and copy them into the run directory."""
    manifest = data_dir / "manifest.csv"
    if not manifest.exists():
        raise InputError(f"no manifest.csv in {data_dir}")
    try:
        rows = {det: (path, sha) for det, path, sha in pipeline.read_manifest(manifest)}
    except ValueError as exc:
        raise InputError(str(exc)) from None
    for det in cfg.detectors.names:
        if det not in rows:
            raise InputError(f"manifest has no entry for {det}")
        src = data_dir / rows[det][0]
        try:
            synth.read_strain(src)
        except (OSError, synth.StrainFormatError) as exc:
            raise InputError(f"{src}: {exc}") from None
        sha = synth.strain_checksum(src)
        if sha != rows[det][1]:
            raise InputError(f"{src}: checksum does not match manifest")
        dest = out / dagmod.strain_path(det)
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src, dest)


def cmd_run(args) -> int:
    cfg = _config(args)
    nodes_path = args.nodes
    if not nodes_path and cfg.workflow.nodes:
        nodes_path = Path(args.config).parent / cfg.workflow.nodes
    if not nodes_path:
        raise InputError("no node pool given (--nodes or [workflow] nodes)")
    try:
        nodes = read_nodes(nodes_path)
    except FileNotFoundError:
        raise InputError(f"node pool not found: {nodes_path}") from None
    except ValueError as exc:
        raise InputError(f"invalid node pool {nodes_path}: {exc}") from None
    out = Path(args.out)
    _fresh_dir(out, args.force)
    _stage_data(cfg, Path(args.data), out)

    dag = dagmod.plan(cfg.plan_config())
    dagmod.write_dag(dag, out / "dag.txt")
    workers = args.workers or cfg.workflow.workers
    rep, prov, _ = execute(dag, nodes, cfg.policy(), cfg.workflow.seed, pipeline.make_runner(cfg), out, workers)
    prov.write(out / "provenance.tsv")
    text = render_report(rep)
    (out / "report.txt").write_text(text)
    print(text, end="")

    for line in prov.diagnostics:
        print(line, file=sys.stderr)
    if rep.tasks_failed or rep.tasks_incomplete:
        why = "no compatible resource" if any("no compatible resource" in d for d in prov.diagnostics) else \
            "tasks failed"
        print(f"workflow did not complete: {why}", file=sys.stderr)
        return EXIT_FAILED

    res = coinc.read_results(out / dagmod.STATMAP_PATH)
    top = res.loudest_result()
    if top is None:
        print("no foreground coincidences")
    else:
        print(f"loudest event: stat={top.combined_stat:.3f} far={top.far_per_s:.3g}/s "
              f"p={top.p_value:.4g} significance {top.sigma_text()}")
    return EXIT_OK


def cmd_hist(args) -> int:
    try:
        res = coinc.read_results(args.results)
    except FileNotFoundError:
        raise InputError(f"results file not found: {args.results}") from None
    except (ValueError, KeyError) as exc:
        raise InputError(f"invalid results file {args.results}: {exc}") from None
    if not args.bin_width > 0:
        raise InputError("--bin-width must be positive")
    hist = coinc.make_histogram(res.foreground_stats(), res.background_stats(), res.n_slides, args.bin_width,
                                loudest=res.loudest_result())
    coinc.write_histogram_csv(hist, args.csv)
    Path(args.svg).write_text(render_histogram_svg(hist, res))
    print(f"{len(hist.bins)} bins written to {args.csv} and {args.svg}")
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        prov = ProvenanceLog.read(args.provenance)
    except FileNotFoundError:
        raise InputError(f"provenance log not found: {args.provenance}") from None
    except ValueError as exc:
        raise InputError(f"invalid provenance log {args.provenance}: {exc}") from None
    print(report(prov), end="")
    print()
    print(render_transformation_table(summarize_transformations(prov, args.by)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="gwrepro", description="Desk-scale compact-binary search workflow.", formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides [workflow] seed)")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "generate synthetic strain files and a manifest")
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="replace a non-empty output directory")

    p = command("plan", cmd_plan, "write the workflow DAG")
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--out", default="dag.txt", help="DAG file to write")

    p = command("run", cmd_run, "execute the workflow on a simulated node pool")
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--data", required=True, help="directory written by gen-data")
    p.add_argument("--nodes", default=None, help="node pool file (default: [workflow] nodes)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--workers", type=int, default=None, help="threads running stage code (default: config)")
    p.add_argument("--force", action="store_true", help="replace a non-empty run directory")

    p = command("hist", cmd_hist, "histogram a results file as CSV and SVG")
    p.add_argument("--results", required=True, help="results file from run")
    p.add_argument("--bin-width", type=float, default=0.2, help="histogram bin width")
    p.add_argument("--csv", default="hist.csv", help="CSV output")
    p.add_argument("--svg", default="hist.svg", help="SVG output")

    p = command("stats", cmd_stats, "summarize a provenance log")
    p.add_argument("--provenance", required=True, help="provenance log from run")
    p.add_argument("--by", choices=("memory", "runtime"), default="memory", help="transformation table ordering")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is an execution failure
        log.exception("execution failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
