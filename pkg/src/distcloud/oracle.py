"""Exact reference for max-min fair allocation.

Water level rises uniformly for every unfrozen flow, in exact rational
arithmetic; at each breakpoint a flow freezes when it reaches its demand or
when a link it crosses fills up. This is independent of the float solver in
``flows`` and is what the ``oracle maxmin`` CLI command exposes.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Optional, Sequence


def water_fill_exact(flows: Mapping[str, tuple], capacities: Mapping[str, float]) -> dict:
    """Return ``{flow_id: Fraction}``.

    ``flows`` maps flow id to ``(path, demand)`` where ``demand`` is ``None``
    for an uncapped flow. Unconstrained uncapped flows map to ``None``.
    """
    cap = {lid: Fraction(c) for lid, c in capacities.items()}
    for fid, (path, _) in flows.items():
        for lid in path:
            if lid not in cap:
                raise KeyError(f"flow {fid} references unknown link {lid!r}")

    demand: dict = {fid: None if d is None else Fraction(d) for fid, (_, d) in flows.items()}
    paths: dict = {fid: tuple(p) for fid, (p, _) in flows.items()}
    rate: dict = {}
    unfrozen = set(flows)
    level = Fraction(0)

    for fid in list(unfrozen):
        if not paths[fid]:
            rate[fid] = demand[fid]
            unfrozen.discard(fid)

    while unfrozen:
        frozen_load = {lid: Fraction(0) for lid in cap}
        crossing = {lid: 0 for lid in cap}
        for fid in flows:
            for lid in paths[fid]:
                if fid in unfrozen:
                    crossing[lid] += 1
                else:
                    frozen_load[lid] += rate[fid]
        candidates = [(cap[lid] - frozen_load[lid]) / crossing[lid]
                      for lid in cap if crossing[lid]]
        candidates += [demand[fid] for fid in unfrozen if demand[fid] is not None]
        level = min(candidates)
        full = {lid for lid in cap
                if crossing[lid] and (cap[lid] - frozen_load[lid]) / crossing[lid] == level}
        for fid in sorted(unfrozen):
            if (demand[fid] is not None and demand[fid] == level) or full.intersection(paths[fid]):
                rate[fid] = level
                unfrozen.discard(fid)
    return rate


def is_max_min_fair(flows: Mapping[str, tuple], capacities: Mapping[str, float],
                    alloc: Mapping[str, float], rtol: float = 1e-9) -> Optional[str]:
    """Check the bottleneck characterisation; return a reason string if violated.

    A feasible allocation is max-min fair iff every flow is at its demand or
    crosses a saturated link on which no other flow gets a higher rate.
    """
    load = {lid: 0.0 for lid in capacities}
    for fid, (path, _) in flows.items():
        for lid in path:
            load[lid] += float(alloc[fid])
    for lid, c in capacities.items():
        if load[lid] > c * (1 + rtol):
            return f"link {lid} over capacity"
    for fid, (path, d) in flows.items():
        r = float(alloc[fid])
        if d is not None and r > d * (1 + rtol) + 1e-12:
            return f"flow {fid} above demand"
        if d is not None and abs(r - d) <= rtol * max(d, 1.0):
            continue
        ok = False
        for lid in path:
            saturated = load[lid] >= capacities[lid] * (1 - rtol)
            top = all(float(alloc[g]) <= r * (1 + rtol) + 1e-12
                      for g, (p, _) in flows.items() if lid in p)
            if saturated and top:
                ok = True
                break
        if not ok:
            return f"flow {fid} has no bottleneck"
    return None


def parse_links(text: str) -> dict:
    """``"A=10,B=5"`` -> ``{"A": 10.0, "B": 5.0}``."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, _, value = part.partition("=")
        if not name or not value:
            raise ValueError(f"bad link spec {part!r}; expected NAME=CAPACITY")
        out[name.strip()] = float(value)
    return out


def parse_flows(text: str) -> dict:
    """``"f1=A+B@2,f2=A"`` -> ``{"f1": (("A","B"), 2.0), "f2": (("A",), None)}``.

    ``@inf`` or a missing ``@`` means uncapped.
    """
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, _, rest = part.partition("=")
        if not name:
            raise ValueError(f"bad flow spec {part!r}; expected NAME=L1+L2[@DEMAND]")
        path_s, _, demand_s = rest.partition("@")
        path: Sequence[str] = tuple(p.strip() for p in path_s.split("+") if p.strip())
        demand = None
        if demand_s and demand_s.strip().lower() not in ("inf", "none"):
            demand = float(demand_s)
        out[name.strip()] = (path, demand)
    return out
