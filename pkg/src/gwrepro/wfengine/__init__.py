from .dag import Dag, DagError, PlanConfig, TaskSpec, plan, read_dag, write_dag, dumps_dag, loads_dag
from .executor import AttemptRecord, ProvenanceLog, execute
from .matchmaking import NodeSpec, Occupancy, Policy, escalate, matchmake, read_nodes, parse_nodes
from .stats import RunReport, build_report, format_duration, render_report, report, summarize_transformations

__all__ = [
    "AttemptRecord", "Dag", "DagError", "NodeSpec", "Occupancy", "PlanConfig", "Policy", "ProvenanceLog",
    "RunReport", "TaskSpec", "build_report", "dumps_dag", "escalate", "execute", "format_duration", "loads_dag",
    "matchmake", "parse_nodes", "plan", "read_dag", "read_nodes", "render_report", "report",
    "summarize_transformations", "write_dag",
]
