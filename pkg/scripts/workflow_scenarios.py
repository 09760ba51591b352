"""Print the run report and attempt log for the scripted workflow scenarios.

- memory: true need 3 GB, request 2 GB, requests doubled after an eviction
- fma4: undeclared FMA4 requirement, first matched to a node without it
- integrity: one intermediate trigger file damaged after it is written
"""

import argparse
import tempfile

from gwrepro.wfengine import render_report
from gwrepro.wfengine.scenarios import fma4_scenario, integrity_scenario, memory_scenario

SCENARIOS = {"memory": memory_scenario, "fma4": fma4_scenario, "integrity": integrity_scenario}


def show(name):
    with tempfile.TemporaryDirectory() as d:
        rep, prov, _ = SCENARIOS[name](d)
    print(f"=== {name} ===")
    print(render_report(rep))
    for r in prov.records:
        if name != "integrity" or r.status != "success" or r.attempt_no > 1:
            print(f"  {r.task_id} attempt {r.attempt_no} on {r.node_id}: {r.status} ({r.failure_reason}), "
                  f"{r.duration_s:.0f} s, request {r.request_mem_mb} MB")
    print()


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help=f"subset of {', '.join(SCENARIOS)} (default: all)")
    names = ap.parse_args().names or list(SCENARIOS)
    unknown = set(names) - set(SCENARIOS)
    if unknown:
        ap.error(f"unknown scenario(s): {', '.join(sorted(unknown))}")
    for name in names:
        show(name)
