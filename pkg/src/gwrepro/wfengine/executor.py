"""Virtual-clock DAG executor with simulated resource adjudication.

Stage code runs for real (in a thread pool); whether an attempt fits its
node, how long it takes and how much memory it needs are simulated from the
node pool, the policy and the run seed. Outcomes depend only on virtual
time, so the worker count never changes the provenance log.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..synth import rng_for
from .dag import Dag
from .matchmaking import Occupancy, Policy, could_ever_run, escalate, matchmake

log = logging.getLogger(__name__)

FAILURE_REASONS = ("none", "incompatible_node", "memory_eviction", "integrity_error", "task_error")


@dataclass(frozen=True)
class AttemptRecord:
    task_id: str
    transformation: str
    attempt_no: int
    node_id: str
    start: float
    duration_s: float
    request_mem_mb: int
    peak_mem_mb: float
    status: str
    failure_reason: str = "none"
    checksums_compared: int = 0
    compare_duration_s: float = 0.0
    checksums_generated: int = 0
    generate_duration_s: float = 0.0
    integrity_errors: int = 0

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("negative duration")
        if self.status not in ("success", "failed"):
            raise ValueError(f"bad status {self.status!r}")
        if self.failure_reason not in FAILURE_REASONS:
            raise ValueError(f"bad failure reason {self.failure_reason!r}")
        if (self.status == "success") != (self.failure_reason == "none"):
            raise ValueError("success must have failure_reason=none and failures must not")

    def to_line(self) -> str:
        vals = []
        for f in fields(self):
            v = getattr(self, f.name)
            vals.append(f"{float(v):.3f}" if f.type == "float" else str(v))
        return "\t".join(vals)

    @classmethod
    def from_line(cls, line: str) -> "AttemptRecord":
        parts = line.rstrip("\n").split("\t")
        fs = fields(cls)
        if len(parts) != len(fs):
            raise ValueError(f"provenance line has {len(parts)} fields, expected {len(fs)}")
        kwargs = {}
        for f, raw in zip(fs, parts):
            kwargs[f.name] = {"int": int, "float": float}.get(f.type, str)(raw)
        return cls(**kwargs)


PROVENANCE_HEADER = "#" + "\t".join(f.name for f in fields(AttemptRecord))


@dataclass
class ProvenanceLog:
    records: list
    statuses: dict  # task id -> succeeded | failed | incomplete
    transformations: dict  # task id -> transformation
    diagnostics: list

    def dumps(self) -> str:
        lines = [PROVENANCE_HEADER]
        lines += [r.to_line() for r in self.records]
        lines += [f"#STATUS\t{tid}\t{self.transformations[tid]}\t{st}" for tid, st in self.statuses.items()]
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "ProvenanceLog":
        records, statuses, trans = [], {}, {}
        lines = text.splitlines()
        if not lines or lines[0] != PROVENANCE_HEADER:
            raise ValueError("not a provenance log (bad header)")
        for line in lines[1:]:
            if not line:
                continue
            if line.startswith("#STATUS\t"):
                _, tid, tr, st = line.split("\t")
                statuses[tid], trans[tid] = st, tr
            elif not line.startswith("#"):
                records.append(AttemptRecord.from_line(line))
        return cls(records, statuses, trans, [])

    @classmethod
    def read(cls, path) -> "ProvenanceLog":
        return cls.loads(Path(path).read_text())


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _corrupt(path: Path):
    data = bytearray(path.read_bytes())
    if not data:
        data = bytearray(b"\0")
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))


def _placeholder_runner(task, workdir: Path):
    for out in task.outputs:
        p = workdir / out
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(f"{task.id} -> {out}\n")


@dataclass
class _TaskState:
    spec: object
    status: str = "waiting"  # waiting | running | succeeded | failed
    attempts: int = 0
    failures: int = 0
    last_reason: str = "none"


@dataclass
class _Attempt:
    task_id: str
    node: object
    record: AttemptRecord
    future: object = None
    corrupted_inputs: tuple = ()




def execute(dag: Dag, nodes, policy: Policy | None = None, seed: int = 0, runner=None, workdir=".",
            workers: int = 1, initial_checksums=None):
    """Run ``dag`` to completion on ``nodes``.

    ``runner(task, workdir)`` produces a task's outputs and raises on error;
    by default placeholder files are written. Returns ``(RunReport,
    ProvenanceLog, output checksums)``.
    """
    from .stats import build_report

    policy = policy or Policy()
    workdir = Path(workdir)
    runner = runner or _placeholder_runner
    catalog = {}
    for path in dag.initial_files:
        if initial_checksums and path in initial_checksums:
            catalog[path] = initial_checksums[path]
        elif (workdir / path).exists():
            catalog[path] = sha256_file(workdir / path)
        else:
            raise FileNotFoundError(f"initial file {path} is missing")

    states = {tid: _TaskState(spec) for tid, spec in dag.tasks.items()}
    occupancy = {n.id: Occupancy() for n in nodes}
    corrupted_once = set()
    records = []
    running = []  # heap of (end_time, seq, attempt)
    seq = 0
    clock = 0.0

    def input_bytes(task):
        return sum((workdir / p).stat().st_size for p in task.inputs if (workdir / p).exists())

    def memory_need(task, attempt_no, size_factor):
        pinned = policy.memory_need_mb.get(task.id)
        if pinned is not None:
            return float(pinned)
        z = rng_for(seed, "memory", task.id, attempt_no).standard_normal()
        base = policy.base_memory_mb.get(task.transformation, 1000.0)
        return base * size_factor * math.exp(policy.memory_sigma * z)

    def checksum_time(path):
        p = workdir / path
        size = p.stat().st_size if p.exists() else 0
        return policy.checksum_overhead_s + size / policy.checksum_rate_bytes_s

    def start(st: _TaskState, node, pool):
        nonlocal seq
        task = st.spec
        st.attempts += 1
        st.status = "running"
        occ = occupancy[node.id]
        occ.used_mem_mb += task.request_mem_mb
        occ.running += 1
        base = dict(task_id=task.id, transformation=task.transformation, attempt_no=st.attempts, node_id=node.id,
                    start=round(clock, 3), request_mem_mb=task.request_mem_mb)
        launch = policy.launch_overhead_s * node.speed_factor
        needed = task.required_features | frozenset(policy.hidden_features.get(task.transformation, ()))
        missing = needed - node.features
        att = None
        if missing:
            rec = AttemptRecord(**base, duration_s=round(launch, 3), peak_mem_mb=0.0, status="failed",
                                failure_reason="incompatible_node")
            att = _Attempt(task.id, node, rec, corrupted_inputs=tuple(sorted(missing)))
        else:
            bad = tuple(p for p in task.inputs if sha256_file(workdir / p) != catalog.get(p))
            cmp_time = round(sum(checksum_time(p) for p in task.inputs), 3)
            checks = dict(checksums_compared=len(task.inputs), compare_duration_s=cmp_time)
            if bad:
                rec = AttemptRecord(**base, duration_s=round(launch + cmp_time, 3), peak_mem_mb=0.0,
                                    status="failed", failure_reason="integrity_error", integrity_errors=len(bad),
                                    **checks)
                att = _Attempt(task.id, node, rec, corrupted_inputs=bad)
            else:
                size_factor = 1.0 + input_bytes(task) / policy.size_scale_bytes
                runtime = policy.runtime_s.get(task.transformation, 600.0) * node.speed_factor * size_factor
                need = memory_need(task, st.attempts, size_factor)
                if need > task.request_mem_mb:
                    elapsed = launch + cmp_time + runtime * task.request_mem_mb / need
                    rec = AttemptRecord(**base, duration_s=round(elapsed, 3), peak_mem_mb=float(task.request_mem_mb),
                                        status="failed", failure_reason="memory_eviction", **checks)
                    att = _Attempt(task.id, node, rec)
                else:
                    rec = AttemptRecord(**base, duration_s=round(launch + cmp_time + runtime, 3),
                                        peak_mem_mb=round(need, 3), status="success", **checks)
                    att = _Attempt(task.id, node, rec, future=pool.submit(runner, task, workdir))
        seq += 1
        heapq.heappush(running, (round(clock + att.record.duration_s, 3), seq, att))

    def finish(att: _Attempt):
        st = states[att.task_id]
        task = st.spec
        occ = occupancy[att.node.id]
        occ.used_mem_mb -= task.request_mem_mb
        occ.running -= 1
        rec = att.record
        if att.future is not None:
            try:
                att.future.result()
            except Exception as exc:  # stage code failed: a task error
                log.warning("%s attempt %d failed: %s", task.id, rec.attempt_no, exc)
                rec = replace(rec, status="failed", failure_reason="task_error")
            else:
                gen = 0.0
                for out in task.outputs:
                    catalog[out] = sha256_file(workdir / out)
                    gen += checksum_time(out)
                    if out in policy.corrupt_outputs and out not in corrupted_once:
                        corrupted_once.add(out)
                        _corrupt(workdir / out)
                rec = replace(rec, checksums_generated=len(task.outputs), generate_duration_s=round(gen, 3))
        records.append(rec)
        if rec.status == "success":
            st.status = "succeeded"
            return
        st.failures += 1
        st.last_reason = rec.failure_reason
        if rec.failure_reason == "integrity_error":
            for path in att.corrupted_inputs:
                producer = dag.producer.get(path)
                if producer is not None and states[producer].status == "succeeded":
                    states[producer].status = "waiting"
                    catalog.pop(path, None)
        if st.failures > task.max_retries:
            st.status = "failed"
            return
        missing = att.corrupted_inputs if rec.failure_reason == "incompatible_node" else ()
        mem, feats = escalate(policy, task.request_mem_mb, task.required_features, rec.failure_reason, missing)
        st.spec = replace(task, request_mem_mb=mem, required_features=feats)
        st.status = "waiting"

    def ready():
        for tid in dag.tasks:
            st = states[tid]
            if st.status == "waiting" and all(states[p].status == "succeeded" for p in st.spec.parents):
                yield st

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        while True:
            for st in list(ready()):
                node = matchmake(st.spec, nodes, occupancy)
                if node is not None:
                    start(st, node, pool)
            if not running:
                break
            end, _, att = heapq.heappop(running)
            clock = end
            finish(att)
            # completions at the same instant are processed before rescheduling
            while running and running[0][0] == clock:
                finish(heapq.heappop(running)[2])

    diagnostics = []
    final = {}
    for tid, st in states.items():
        if st.status in ("succeeded", "failed"):
            final[tid] = st.status
            continue
        final[tid] = "incomplete"
        if all(states[p].status == "succeeded" for p in st.spec.parents):
            why = "no compatible resource" if not could_ever_run(st.spec, nodes) else "held"
            diagnostics.append(f"{tid}: {why} (request_mem_mb={st.spec.request_mem_mb}, "
                               f"features={','.join(sorted(st.spec.required_features)) or '-'})")
    prov = ProvenanceLog(records, final, {tid: t.transformation for tid, t in dag.tasks.items()}, diagnostics)
    outputs = {p: catalog[p] for t in dag for p in t.outputs if final[t.id] == "succeeded" and p in catalog}
    return build_report(prov), prov, outputs
