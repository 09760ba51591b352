"""Small scripted runs that exercise retry, matchmaking and integrity handling."""

from __future__ import annotations

from pathlib import Path

from .dag import Dag, PlanConfig, TaskSpec, plan, strain_path, trigger_path
from .executor import execute
from .matchmaking import NodeSpec, Policy


def memory_scenario(workdir, need_mb: int = 3072, request_mb: int = 2048, factor: float = 2.0, max_retries: int = 3):
    """One job whose true memory need exceeds its request until escalation catches up."""
    task = TaskSpec("statmap-FULL_DATA-H1L1_ID1", "statmap", outputs=("results/statmap.txt",),
                    request_mem_mb=request_mb, max_retries=max_retries)
    nodes = [NodeSpec("node01", 65536, frozenset())]
    policy = Policy(escalation_factor=factor, memory_need_mb={task.id: need_mb})
    return execute(Dag([task]), nodes, policy, workdir=workdir)


def fma4_scenario(workdir):
    """An inspiral job that needs FMA4 without declaring it, first matched to a node lacking it."""
    task = TaskSpec("inspiral-FULL_DATA-SEG0-BANK0-H1_ID1", "inspiral", outputs=(trigger_path("H1", 0, 0),),
                    request_mem_mb=2048)
    nodes = [NodeSpec("node01", 8192, frozenset({"avx2"})), NodeSpec("node02", 8192, frozenset({"avx2", "fma4"}))]
    policy = Policy(hidden_features={"inspiral": frozenset({"fma4"})}, memory_need_mb={task.id: 1500})
    return execute(Dag([task]), nodes, policy, workdir=workdir)


def integrity_scenario(workdir, corrupt=None, runner=None):
    """The standard 16-task plan with one intermediate trigger file damaged after it is written."""
    workdir = Path(workdir)
    dag = plan(PlanConfig(n_segments=4))
    for det in ("H1", "L1"):
        p = workdir / strain_path(det)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(det.encode() * 64)
    corrupt = corrupt or trigger_path("H1", 0, 0)
    nodes = [NodeSpec("node01", 32768, frozenset({"fma4"})), NodeSpec("node02", 32768, frozenset({"fma4"}))]
    policy = Policy(memory_sigma=0.0, corrupt_outputs=frozenset({corrupt}))
    return execute(dag, nodes, policy, runner=runner, workdir=workdir)
