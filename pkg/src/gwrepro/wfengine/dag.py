"""Workflow DAG: task specs, planning, validation and the DAG text file."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from pathlib import Path

STAGES = (
    "calculate_psd",
    "inspiral",
    "hdf_trigger_merge",
    "statmap",
    "distribute_background_bins",
    "plot_snrifar",
)


class DagError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    id: str
    transformation: str
    parents: tuple = ()
    inputs: tuple = ()
    outputs: tuple = ()
    request_mem_mb: int = 1024
    required_features: frozenset = frozenset()
    max_retries: int = 5

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "required_features", frozenset(self.required_features))
        if self.request_mem_mb <= 0:
            raise DagError(f"{self.id}: request_mem_mb must be positive")
        if self.max_retries < 0:
            raise DagError(f"{self.id}: max_retries must be >= 0")


class Dag:
    """Tasks in plan order, validated on construction."""

    def __init__(self, tasks):
        self.tasks: dict[str, TaskSpec] = {}
        for t in tasks:
            if t.id in self.tasks:
                raise DagError(f"duplicate task id {t.id}")
            self.tasks[t.id] = t
        self.producer: dict[str, str] = {}
        for t in self.tasks.values():
            for out in t.outputs:
                if out in self.producer:
                    raise DagError(f"{out} produced by both {self.producer[out]} and {t.id}")
                self.producer[out] = t.id
        self._validate()

    def _validate(self):
        sorter = graphlib.TopologicalSorter()
        for t in self.tasks.values():
            for p in t.parents:
                if p not in self.tasks:
                    raise DagError(f"{t.id}: unknown parent {p}")
            sorter.add(t.id, *t.parents)
            for path in t.inputs:
                src = self.producer.get(path)
                if src is not None and src not in t.parents:
                    raise DagError(f"{t.id}: input {path} comes from {src}, which is not a parent")
        try:
            self.order = tuple(sorter.static_order())
        except graphlib.CycleError as exc:
            raise DagError(f"DAG has a cycle: {exc.args[1]}") from None

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks.values())

    @property
    def initial_files(self) -> list[str]:
        seen = []
        for t in self.tasks.values():
            for path in t.inputs:
                if path not in self.producer and path not in seen:
                    seen.append(path)
        return seen

    def children(self) -> dict[str, list[str]]:
        out = {tid: [] for tid in self.tasks}
        for t in self.tasks.values():
            for p in t.parents:
                out[p].append(t.id)
        return out

    def descendants(self, task_id: str) -> set[str]:
        kids = self.children()
        seen, stack = set(), [task_id]
        while stack:
            for c in kids[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen


# --- planning ---------------------------------------------------------------

DEFAULT_MEMORY_MB = {
    "calculate_psd": 1024,
    "inspiral": 2048,
    "hdf_trigger_merge": 1024,
    "statmap": 16384,
    "distribute_background_bins": 8192,
    "plot_snrifar": 4096,
}


@dataclass(frozen=True)
class PlanConfig:
    detectors: tuple = ("H1", "L1")
    psd_parts: int = 2
    n_segments: int = 4
    bank_parts: int = 1
    background_bins: int = 1
    inspiral_features: frozenset = frozenset({"fma4"})
    request_mem_mb: dict = field(default_factory=lambda: dict(DEFAULT_MEMORY_MB))
    max_retries: int = 5


def strain_path(det):
    return f"data/{det}.gwsd"


def psd_path(det, part):
    return f"psd/{det}-PART{part}.csv"


def trigger_path(det, seg, bank):
    return f"triggers/{det}-SEG{seg}-BANK{bank}.csv"


def merged_path(det):
    return f"triggers/{det}-FULL_DATA.csv"


STATMAP_PATH = "results/statmap.txt"
BINS_PATH = "results/background_bins.csv"
HIST_CSV_PATH = "results/hist.csv"
HIST_SVG_PATH = "results/hist.svg"


def psd_part_for_segment(seg: int, n_segments: int, psd_parts: int) -> int:
    return seg * psd_parts // n_segments


def plan(cfg: PlanConfig) -> Dag:
    """Lay out the search as a DAG.

    Per detector: PSD parts, then one ``inspiral`` job per (segment, bank
    part), then a trigger merge. Both merges feed ``statmap``; with more than
    one background bin a ``distribute_background_bins`` job follows; the
    histogram job comes last.
    """
    if cfg.n_segments < 1:
        raise DagError("empty analysis: no segments to filter")
    if len(cfg.detectors) != 2:
        raise DagError("exactly two detectors are required")
    if cfg.psd_parts < 1 or cfg.bank_parts < 1:
        raise DagError("psd_parts and bank_parts must be >= 1")
    mem = {**DEFAULT_MEMORY_MB, **cfg.request_mem_mb}
    tasks = []

    def add(name, transformation, parents=(), inputs=(), outputs=(), features=()):
        tid = f"{name}_ID{len(tasks) + 1}"
        tasks.append(TaskSpec(tid, transformation, parents, inputs, outputs, mem[transformation],
                              frozenset(features), cfg.max_retries))
        return tid

    ifos = "".join(cfg.detectors)
    merges = []
    for det in cfg.detectors:
        psd_ids = [
            add(f"calculate_psd-PART{p}-{det}", "calculate_psd", inputs=[strain_path(det)], outputs=[psd_path(det, p)])
            for p in range(cfg.psd_parts)
        ]
        insp = []
        for s in range(cfg.n_segments):
            p = psd_part_for_segment(s, cfg.n_segments, cfg.psd_parts)
            for b in range(cfg.bank_parts):
                insp.append(add(
                    f"inspiral-FULL_DATA-SEG{s}-BANK{b}-{det}", "inspiral",
                    parents=[psd_ids[p]], inputs=[strain_path(det), psd_path(det, p)],
                    outputs=[trigger_path(det, s, b)], features=cfg.inspiral_features,
                ))
        inputs = [trigger_path(det, s, b) for s in range(cfg.n_segments) for b in range(cfg.bank_parts)]
        merges.append(add(f"hdf_trigger_merge-FULL_DATA-{det}", "hdf_trigger_merge", parents=insp,
                          inputs=inputs, outputs=[merged_path(det)]))
    stat = add(f"statmap-FULL_DATA-{ifos}", "statmap", parents=merges,
               inputs=[merged_path(d) for d in cfg.detectors], outputs=[STATMAP_PATH])
    last = [stat]
    if cfg.background_bins > 1:
        last.append(add(f"distribute_background_bins-FULL_DATA-{ifos}", "distribute_background_bins",
                        parents=[stat], inputs=[STATMAP_PATH], outputs=[BINS_PATH]))
    add(f"plot_snrifar-FULL_DATA-{ifos}", "plot_snrifar", parents=last, inputs=[STATMAP_PATH],
        outputs=[HIST_CSV_PATH, HIST_SVG_PATH])
    return Dag(tasks)


# --- text formats -----------------------------------------------------------


def _join(items):
    return ",".join(sorted(items)) if isinstance(items, (set, frozenset)) else ",".join(items)


def format_task(t: TaskSpec) -> str:
    return (f"TASK {t.id} {t.transformation} mem={t.request_mem_mb} features={_join(t.required_features)} "
            f"parents={_join(t.parents)} in={_join(t.inputs)} out={_join(t.outputs)} retries={t.max_retries}")


def dumps_dag(dag: Dag) -> str:
    return "".join(format_task(t) + "\n" for t in dag)


def _split(value):
    return tuple(v for v in value.split(",") if v)


def parse_task(line: str, default_retries: int = 5) -> TaskSpec:
    parts = line.split()
    if len(parts) < 3 or parts[0] != "TASK":
        raise DagError(f"bad DAG line: {line!r}")
    kv = {}
    for item in parts[3:]:
        key, sep, value = item.partition("=")
        if not sep or key not in ("mem", "features", "parents", "in", "out", "retries"):
            raise DagError(f"bad DAG field {item!r}")
        kv[key] = value
    return TaskSpec(
        parts[1], parts[2], _split(kv.get("parents", "")), _split(kv.get("in", "")), _split(kv.get("out", "")),
        int(kv.get("mem", 1024)), frozenset(_split(kv.get("features", ""))), int(kv.get("retries", default_retries)),
    )


def loads_dag(text: str) -> Dag:
    return Dag(parse_task(line) for line in text.splitlines() if line.strip() and not line.startswith("#"))


def write_dag(dag: Dag, path):
    Path(path).write_text(dumps_dag(dag))


def read_dag(path) -> Dag:
    return loads_dag(Path(path).read_text())
