"""Fluid flows over capacitated links and the max-min fair rate solver.

Flows carry an integer number of bits. Between re-solves each flow moves at
an integer bit rate (the solver's share, floored), and its position is
computed from an anchor ``(time, bits left)`` rather than by repeated
decrements, so completion times are exact microseconds and every completed
flow has moved exactly its size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .errors import SimError, UnknownLink
from .kernel import US_PER_S, EventKind, SimTime, Simulator, to_us

# Relative slack tolerated when checking float allocations against capacity.
CAPACITY_RTOL = 1e-9


@dataclass(frozen=True)
class LinkSpec:
    link_id: str
    capacity_bps: float

    def __post_init__(self):
        if not self.capacity_bps > 0:
            raise ValueError(f"link {self.link_id}: capacity_bps must be > 0")


@dataclass(eq=False)
class Flow:
    flow_id: str
    path: tuple
    demand_bps: Optional[float]
    size_bits: int
    on_complete: Optional[Callable[["Flow"], None]] = field(default=None, repr=False)
    tag: object = field(default=None, repr=False)
    allocated_bps: float = 0.0
    rate_bps: int = 0
    anchor_us: SimTime = 0
    anchor_bits: int = 0
    remaining_bits: int = 0
    opened_at: SimTime = 0

    def __post_init__(self):
        self.path = tuple(self.path)
        self.remaining_bits = self.anchor_bits = self.size_bits

    @property
    def remaining_bytes(self) -> float:
        return self.remaining_bits / 8

    @property
    def moved_bits(self) -> int:
        return self.size_bits - self.remaining_bits

    @property
    def unbounded(self) -> bool:
        return self.demand_bps is None or math.isinf(self.demand_bps)

    def bits_left_at(self, t: SimTime) -> int:
        if self.rate_bps <= 0:
            return self.anchor_bits
        moved = self.rate_bps * (t - self.anchor_us) // US_PER_S
        return max(0, self.anchor_bits - moved)

    def finish_time(self) -> Optional[SimTime]:
        """Exact microsecond at which the current rate drains the flow."""
        if self.anchor_bits == 0:
            return self.anchor_us
        if self.rate_bps <= 0:
            return None
        return self.anchor_us + -(-self.anchor_bits * US_PER_S // self.rate_bps)


def solve_max_min(flows: Iterable[Flow], links: Iterable[LinkSpec]) -> dict:
    """Progressive water-filling over ``flows``.

    Each round either freezes every flow whose demand fits under the tightest
    link's equal share, or saturates that link and freezes its flows at the
    share. Flows with an empty path get their demand (``inf`` if unbounded).
    """
    flows = list(flows)
    cap = {link.link_id: float(link.capacity_bps) for link in links}
    for f in flows:
        for lid in f.path:
            if lid not in cap:
                raise UnknownLink(f"flow {f.flow_id} references unknown link {lid!r}")

    alloc: dict = {}
    users: dict = {lid: [] for lid in cap}
    active: dict = {}
    for f in flows:
        demand = math.inf if f.demand_bps is None else float(f.demand_bps)
        if not f.path:
            alloc[f.flow_id] = demand
            continue
        active[f.flow_id] = (f, demand)
        for lid in f.path:
            users[lid].append(f.flow_id)

    remaining = dict(cap)
    while active:
        share, tight = math.inf, None
        for lid, members in users.items():
            if members:
                s = remaining[lid] / len(members)
                if s < share:
                    share, tight = s, lid
        min_demand = min(d for _, d in active.values())
        if min_demand <= share:
            frozen = [(fid, d) for fid, (_, d) in active.items() if d <= share]
        else:
            frozen = [(fid, share) for fid in users[tight]]
        for fid, rate in frozen:
            f, _ = active.pop(fid)
            alloc[fid] = rate
            for lid in f.path:
                remaining[lid] = max(0.0, remaining[lid] - rate)
                users[lid].remove(fid)
    return alloc


def check_capacity(flows: Iterable[Flow], links: Iterable[LinkSpec], alloc: dict) -> None:
    load: dict = {}
    for f in flows:
        for lid in f.path:
            load[lid] = load.get(lid, 0.0) + alloc[f.flow_id]
    for link in links:
        used = load.get(link.link_id, 0.0)
        if used > link.capacity_bps * (1 + CAPACITY_RTOL):
            raise SimError(f"link {link.link_id} over capacity: {used} > {link.capacity_bps}")


class FlowNetwork:
    """Set of live flows advanced in simulated time.

    Standalone use drives the clock with :meth:`advance_flows`. When attached
    to a :class:`Simulator`, the network advances to ``sim.now`` before any
    flow-set change and schedules one ``TransferComplete`` event for the
    earliest finishing flow.
    """

    def __init__(self, links: Iterable[LinkSpec] = (), sim: Optional[Simulator] = None):
        self.links: dict = {}
        self.link_bits: dict = {}
        self.flows: dict = {}
        self.clock: SimTime = 0
        self.sim = sim
        self.solves = 0
        self._dirty = False
        self._next_event = None
        self._serial = 0
        for link in links:
            self.add_link(link)
        if sim is not None:
            sim.pre_step.append(self.settle)

    def add_link(self, link: LinkSpec) -> None:
        if link.link_id in self.links:
            raise ValueError(f"duplicate link {link.link_id}")
        self.links[link.link_id] = link
        self.link_bits[link.link_id] = 0

    def _now(self) -> SimTime:
        return self.sim.now if self.sim is not None else self.clock

    def open_flow(self, path, size_bytes, demand_bps=None, on_complete=None,
                  flow_id=None, tag=None) -> Flow:
        for lid in path:
            if lid not in self.links:
                raise UnknownLink(f"unknown link {lid!r}")
        self.advance_to(self._now())
        if flow_id is None:
            flow_id = f"flow{self._serial:06d}"
        self._serial += 1
        if flow_id in self.flows:
            raise ValueError(f"duplicate flow {flow_id}")
        flow = Flow(flow_id, tuple(path), demand_bps, int(round(size_bytes * 8)),
                    on_complete=on_complete, tag=tag)
        flow.anchor_us = flow.opened_at = self.clock
        self.flows[flow_id] = flow
        self._dirty = True
        return flow

    def close_flow(self, flow_id: str) -> Flow:
        """Remove a flow before it completes; its moved bits stay counted."""
        self.advance_to(self._now())
        flow = self.flows.pop(flow_id)
        self._dirty = True
        return flow

    def advance_to(self, t: SimTime) -> None:
        if t < self.clock:
            raise SimError(f"network clock cannot go back from {self.clock} to {t}")
        if t == self.clock:
            return
        for flow in self.flows.values():
            left = flow.bits_left_at(t)
            delta = flow.remaining_bits - left
            if delta:
                flow.remaining_bits = left
                for lid in flow.path:
                    self.link_bits[lid] += delta
        self.clock = t

    def resolve(self) -> None:
        """Recompute allocations and re-anchor every flow at the current clock."""
        links = list(self.links.values())
        flows = list(self.flows.values())
        alloc = solve_max_min(flows, links)
        check_capacity(flows, links, alloc)
        self.solves += 1
        for flow in flows:
            rate = alloc[flow.flow_id]
            flow.allocated_bps = rate
            flow.rate_bps = -1 if math.isinf(rate) else int(rate)
            flow.anchor_us = self.clock
            flow.anchor_bits = flow.remaining_bits
        self._dirty = False

    def _finish_time(self, flow: Flow) -> Optional[SimTime]:
        if flow.rate_bps == -1:
            return self.clock
        return flow.finish_time()

    def next_completion(self) -> Optional[SimTime]:
        times = [t for t in (self._finish_time(f) for f in self.flows.values()) if t is not None]
        return min(times) if times else None

    def _pop_finished(self) -> list:
        done = []
        for flow in list(self.flows.values()):
            if flow.rate_bps == -1 and flow.remaining_bits:
                for lid in flow.path:
                    self.link_bits[lid] += flow.remaining_bits
                flow.remaining_bits = 0
            if flow.remaining_bits == 0:
                done.append(self.flows.pop(flow.flow_id))
        if done:
            self._dirty = True
        return done

    def advance_flows(self, dt_seconds) -> list:
        """Advance the standalone clock by ``dt_seconds``.

        Returns ``(flow, crossing_time_us)`` for every flow that drained in
        the interval; the crossing time is exact for the rates in force.
        """
        if self._dirty:
            self.resolve()
        target = self.clock + to_us(dt_seconds)
        crossings = {}
        for flow in self.flows.values():
            t = self._finish_time(flow)
            if t is not None and t <= target:
                crossings[flow.flow_id] = t
        self.advance_to(target)
        done = self._pop_finished()
        return [(f, crossings.get(f.flow_id, target)) for f in done]

    # -- kernel integration -------------------------------------------------

    def settle(self) -> None:
        if not self._dirty:
            return
        self.advance_to(self._now())
        self.resolve()
        Simulator.cancel(self._next_event)
        self._next_event = None
        t = self.next_completion()
        if t is not None:
            self._next_event = self.sim.schedule(
                max(t, self.sim.now), EventKind.TRANSFER_COMPLETE, self._on_completion)

    def _on_completion(self, _event) -> None:
        self._next_event = None
        self.advance_to(self.sim.now)
        done = self._pop_finished()
        self._dirty = True
        for flow in done:
            if flow.on_complete is not None:
                flow.on_complete(flow)

    def link_mbps(self) -> dict:
        """Instantaneous allocated load per link in Mbit/s."""
        load = {lid: 0 for lid in self.links}
        for f in self.flows.values():
            for lid in f.path:
                load[lid] += max(f.rate_bps, 0)
        return {lid: v / 1e6 for lid, v in load.items()}
