"""Brute-force selectivities recomputed from the simulator's tuple logs.

Uses the same final arithmetic as the simulator (float ratios, exact sum,
one division), so equality is exact.
"""

from __future__ import annotations

import math
from typing import Optional

from streamcost.query import string_value
from streamcost.simulator import filter_predicate


def _mean(ratios: list[float]) -> Optional[float]:
    return math.fsum(ratios) / len(ratios) if ratios else None


def filter_selectivity(log: dict, function: str, literal) -> Optional[float]:
    values = log["values"]
    if not values:
        return None
    if log["type"] == "string":
        values = [string_value(int(v)) for v in values]
    else:
        literal = float(literal)
    passed = sum(1 for v in values if filter_predicate(function, v, literal))
    return passed / len(values)


def aggregation_selectivity(log: dict) -> Optional[float]:
    ratios = []
    for window in log["windows"]:
        if isinstance(window, int):
            # no group-by: one group per window
            if window > 0:
                ratios.append(1 / window)
        elif window:
            ratios.append(len(set(window)) / len(window))
    return _mean(ratios)


def join_selectivity(log: dict) -> Optional[float]:
    ratios = []
    for left, right in log["triggers"]:
        if not left or not right:
            continue
        matches = sum(1 for a in left for b in right if a == b)
        ratios.append(matches / (len(left) * len(right)))
    return _mean(ratios)


def recompute(query, trace: dict[int, dict]) -> dict[int, Optional[float]]:
    out = {}
    for nid, log in trace.items():
        node = query.graph.node(nid)
        if log["kind"] == "filter":
            out[nid] = filter_selectivity(log, node.params.function, node.params.literal)
        elif log["kind"] == "aggregation":
            out[nid] = aggregation_selectivity(log)
        elif log["kind"] == "join":
            out[nid] = join_selectivity(log)
    return out
