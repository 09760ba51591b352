"""Run statistics in the pegasus-statistics layout, and per-transformation tables."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

RULE = "-" * 77


@dataclass(frozen=True)
class RunReport:
    tasks_succeeded: int = 0
    tasks_failed: int = 0
    tasks_incomplete: int = 0
    tasks_total: int = 0
    retries: int = 0
    attempts: int = 0
    workflow_wall_time_s: float = 0.0
    cumulative_job_wall_time_s: float = 0.0
    cumulative_badput_s: float = 0.0
    checksums_compared: int = 0
    compare_duration_s: float = 0.0
    checksums_generated: int = 0
    generate_duration_s: float = 0.0
    integrity_errors_total: int = 0
    failures_with_integrity_errors: int = 0


def build_report(prov) -> RunReport:
    records = prov.records
    statuses = prov.statuses
    per_task = defaultdict(list)
    for r in records:
        per_task[r.task_id].append(r)
    failed_last_integrity = sum(
        1 for tid, st in statuses.items()
        if st == "failed" and per_task[tid] and max(per_task[tid], key=lambda r: r.attempt_no).integrity_errors > 0
    )
    return RunReport(
        tasks_succeeded=sum(1 for s in statuses.values() if s == "succeeded"),
        tasks_failed=sum(1 for s in statuses.values() if s == "failed"),
        tasks_incomplete=sum(1 for s in statuses.values() if s == "incomplete"),
        tasks_total=len(statuses),
        retries=sum(len(v) - 1 for v in per_task.values()),
        attempts=len(records),
        workflow_wall_time_s=max((r.start + r.duration_s for r in records), default=0.0),
        cumulative_job_wall_time_s=math.fsum(r.duration_s for r in records),
        cumulative_badput_s=math.fsum(r.duration_s for r in records if r.status == "failed"),
        checksums_compared=sum(r.checksums_compared for r in records),
        compare_duration_s=math.fsum(r.compare_duration_s for r in records),
        checksums_generated=sum(r.checksums_generated for r in records),
        generate_duration_s=math.fsum(r.generate_duration_s for r in records),
        integrity_errors_total=sum(r.integrity_errors for r in records),
        failures_with_integrity_errors=failed_last_integrity,
    )


def format_duration(seconds: float) -> str:
    """Two-unit rendering: ``22 years, 54 days``, ``29 days, 0 hrs``, ``7 hrs, 55 mins``."""
    s = int(math.floor(seconds + 1e-9))
    minute, hour, day, year = 60, 3600, 86400, 365 * 86400
    if s >= year:
        return f"{s // year} years, {(s % year) // day} days"
    if s >= day:
        return f"{s // day} days, {(s % day) // hour} hrs"
    if s >= hour:
        return f"{s // hour} hrs, {(s % hour) // minute} mins"
    if s >= minute:
        return f"{s // minute} mins, {s % minute} secs"
    return f"{s} secs"


def _row(label, succeeded, failed, incomplete, total, retries):
    return f"{label:<15}{succeeded!s:<10}{failed!s:<8}{incomplete!s:<12}{total!s:<10}{retries}"


def render_report(rep: RunReport) -> str:
    lines = [
        RULE,
        _row("Type", "Succeeded", "Failed", "Incomplete", "Total", "Retries"),
        _row("Tasks", rep.tasks_succeeded, rep.tasks_failed, rep.tasks_incomplete, rep.tasks_total, rep.retries),
        _row("Jobs", rep.tasks_succeeded, rep.tasks_failed, rep.tasks_incomplete, rep.tasks_total, rep.retries),
        _row("Sub-Workflows", 0, 0, 0, 0, 0),
        RULE,
        "",
        f"{'Workflow wall time':<57}: {format_duration(rep.workflow_wall_time_s)}",
        f"{'Cumulative job wall time':<57}: {format_duration(rep.cumulative_job_wall_time_s)}",
        f"{'Cumulative job badput wall time':<57}: {format_duration(rep.cumulative_badput_s)}",
        "",
        "# Integrity Metrics",
        f"{rep.checksums_compared} files checksums compared with total duration of "
        f"{format_duration(rep.compare_duration_s)}",
        f"{rep.checksums_generated} files checksums generated with total duration of "
        f"{format_duration(rep.generate_duration_s)}",
        "",
        "# Integrity Errors",
        f"Total:    A total of {rep.integrity_errors_total} integrity errors encountered in the workflow",
        f"Failures: {rep.failures_with_integrity_errors} job failures had integrity errors",
    ]
    return "\n".join(lines) + "\n"


def report(prov) -> str:
    return render_report(build_report(prov))


@dataclass(frozen=True)
class TransformationStats:
    transformation: str
    count: int
    mean_runtime_s: float
    max_runtime_s: float
    min_mem_mb: float
    max_mem_mb: float
    mean_mem_mb: float


def summarize_transformations(prov, by: str = "memory") -> list[TransformationStats]:
    """Per-transformation attempt counts, runtime and peak memory, largest first."""
    if by not in ("memory", "runtime"):
        raise ValueError("by must be 'memory' or 'runtime'")
    groups = defaultdict(list)
    for r in prov.records:
        groups[r.transformation].append(r)
    rows = []
    for name, recs in groups.items():
        mems = [r.peak_mem_mb for r in recs]
        runs = [r.duration_s for r in recs]
        rows.append(TransformationStats(name, len(recs), math.fsum(runs) / len(runs), max(runs),
                                        min(mems), max(mems), math.fsum(mems) / len(mems)))
    if by == "memory":
        rows.sort(key=lambda s: (-s.max_mem_mb, s.transformation))
    else:
        rows.sort(key=lambda s: (-s.max_runtime_s, s.transformation))
    return rows


def render_transformation_table(rows) -> str:
    head = f"{'Transformation':<28}{'Count':>6}{'Mean (runtime) s':>18}{'Min (mem) MB':>14}{'Max (mem) MB':>14}{'Mean (mem) MB':>15}"
    lines = [head]
    for s in rows:
        lines.append(f"{s.transformation:<28}{s.count:>6}{s.mean_runtime_s:>18,.2f}{s.min_mem_mb:>14,.2f}"
                     f"{s.max_mem_mb:>14,.2f}{s.mean_mem_mb:>15,.2f}")
    return "\n".join(lines) + "\n"
