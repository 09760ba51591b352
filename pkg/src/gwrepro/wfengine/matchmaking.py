"""Node pool, matchmaking and retry escalation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class NodeSpec:
    id: str
    mem_mb: int
    features: frozenset = frozenset()
    speed_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "features", frozenset(self.features))
        if self.mem_mb <= 0:
            raise ValueError(f"node {self.id}: mem_mb must be positive")
        if not self.speed_factor > 0:
            raise ValueError(f"node {self.id}: speed must be positive")


@dataclass
class Occupancy:
    used_mem_mb: int = 0
    running: int = 0


def eligible(request_mem_mb, required_features, node: NodeSpec, occ: Occupancy | None = None) -> bool:
    free = node.mem_mb - (occ.used_mem_mb if occ else 0)
    return set(required_features) <= node.features and free >= request_mem_mb


def matchmake(task, nodes, occupancy=None) -> NodeSpec | None:
    """Lowest-id node among the least loaded eligible ones, or None to hold the task."""
    occupancy = occupancy or {}
    best = None
    for node in nodes:
        occ = occupancy.get(node.id, Occupancy())
        if not eligible(task.request_mem_mb, task.required_features, node, occ):
            continue
        key = (occ.running, node.id)
        if best is None or key < best[0]:
            best = (key, node)
    return best[1] if best else None


def could_ever_run(task, nodes) -> bool:
    return any(eligible(task.request_mem_mb, task.required_features, n) for n in nodes)


def format_node(n: NodeSpec) -> str:
    return f"NODE {n.id} mem={n.mem_mb} features={','.join(sorted(n.features))} speed={n.speed_factor!r}"


def parse_nodes(text: str) -> list[NodeSpec]:
    nodes = []
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "NODE" or len(parts) < 2:
            raise ValueError(f"bad node line: {line!r}")
        kv = dict(item.split("=", 1) for item in parts[2:])
        unknown = set(kv) - {"mem", "features", "speed"}
        if unknown:
            raise ValueError(f"bad node field(s) {sorted(unknown)} in {line!r}")
        nodes.append(NodeSpec(parts[1], int(kv["mem"]), frozenset(f for f in kv.get("features", "").split(",") if f),
                              float(kv.get("speed", 1.0))))
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node ids")
    return nodes


def read_nodes(path) -> list[NodeSpec]:
    return parse_nodes(Path(path).read_text())


def write_nodes(nodes, path):
    Path(path).write_text("".join(format_node(n) + "\n" for n in nodes))


DEFAULT_RUNTIME_S = {
    "calculate_psd": 1800.0,
    "inspiral": 7200.0,
    "hdf_trigger_merge": 900.0,
    "statmap": 3600.0,
    "distribute_background_bins": 2400.0,
    "plot_snrifar": 600.0,
}

DEFAULT_BASE_MEMORY_MB = {
    "calculate_psd": 700.0,
    "inspiral": 1400.0,
    "hdf_trigger_merge": 600.0,
    "statmap": 9000.0,
    "distribute_background_bins": 5000.0,
    "plot_snrifar": 2500.0,
}


@dataclass(frozen=True)
class Policy:
    """Retry policy plus the simulated resource model.

    A task's true memory need is ``base_memory_mb[transformation] *
    (1 + input_bytes / size_scale_bytes) * exp(memory_sigma * z)`` with
    ``z`` drawn from the run seed; ``memory_need_mb`` pins it per task id.
    ``hidden_features`` lists features a transformation needs without
    declaring them. Files in ``corrupt_outputs`` are damaged once, right
    after their first checksum is recorded.
    """

    escalation_factor: float = 2.0
    memory_sigma: float = 0.3
    size_scale_bytes: float = 64e6
    base_memory_mb: dict = field(default_factory=lambda: dict(DEFAULT_BASE_MEMORY_MB))
    runtime_s: dict = field(default_factory=lambda: dict(DEFAULT_RUNTIME_S))
    memory_need_mb: dict = field(default_factory=dict)
    hidden_features: dict = field(default_factory=dict)
    corrupt_outputs: frozenset = frozenset()
    launch_overhead_s: float = 30.0
    checksum_rate_bytes_s: float = 50e6
    checksum_overhead_s: float = 0.5

    def __post_init__(self):
        if not self.escalation_factor >= 1:
            raise ValueError("escalation factor must be >= 1")


def escalate(policy: Policy, request_mem_mb: int, required_features, failure_reason: str, missing_features=()):
    """New (request_mem_mb, required_features) after a failed attempt."""
    features = frozenset(required_features)
    if failure_reason == "memory_eviction":
        return int(round(request_mem_mb * policy.escalation_factor)), features
    if failure_reason == "incompatible_node":
        return request_mem_mb, features | frozenset(missing_features)
    return request_mem_mb, features
