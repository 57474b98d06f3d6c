"""Seeded fault processes: boot failures, periodic kills, blackouts, monitor gaps."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .cloud import CloudModel, VmState
from .errors import BadParams, UnknownHandle, UnknownSite
from .kernel import EventKind, SimTime, Simulator, to_us

FAULT_KINDS = ("BootError", "PeriodicKill", "CommBlackout", "MonitorGap")


def stream_rng(seed: int, stream: str) -> random.Random:
    """Independent generator per named stream, derived from the run seed."""
    digest = hashlib.sha256(f"{seed}/{stream}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class FaultSpec:
    kind: str
    site_id: Optional[str] = None
    params: dict = field(default_factory=dict)
    seed_stream: str = ""

    def window(self) -> Optional[tuple]:
        w = self.params.get("window")
        return None if w is None else (to_us(w[0]), to_us(w[1]))

    def validate(self) -> list:
        problems = []
        if self.kind not in FAULT_KINDS:
            problems.append(f"kind: unknown fault kind {self.kind!r}")
            return problems
        p = self.params
        w = p.get("window")
        if w is not None:
            if len(w) != 2 or not (0 <= w[0] <= w[1]):
                problems.append("params.window: must be [t_start, t_end] with 0 <= t_start <= t_end")
        if self.kind == "BootError":
            prob = p.get("probability")
            if prob is None or not (0.0 <= prob <= 1.0):
                problems.append("params.probability: must be in [0, 1]")
        elif self.kind == "PeriodicKill":
            if not p.get("period_s", 0) > 0:
                problems.append("params.period_s: must be > 0")
            if p.get("first_at_s", 0) < 0:
                problems.append("params.first_at_s: must be >= 0")
        elif w is None:
            problems.append("params.window: required")
        if self.kind != "MonitorGap" and not self.site_id:
            problems.append("site_id: required")
        return problems


@dataclass
class _Armed:
    spec: FaultSpec
    active: bool = True
    rng: Optional[random.Random] = None
    pending: object = None
    triggers: int = 0


class FaultInjector:
    """Arms :class:`FaultSpec` processes against a running simulation.

    ``log`` receives ``(kind, site, detail)`` for each trigger.
    """

    def __init__(self, sim: Simulator, cloud: CloudModel, seed: int,
                 log: Optional[Callable[[str, Optional[str], str], None]] = None):
        self.sim = sim
        self.cloud = cloud
        self.seed = seed
        self.log = log or (lambda kind, site, detail: None)
        self._armed: dict = {}
        self._next = 1
        cloud.boot_checks.append(self._boot_check)

    def arm(self, spec: FaultSpec) -> int:
        problems = spec.validate()
        if problems:
            raise BadParams("; ".join(problems))
        if spec.site_id is not None and spec.site_id not in self.cloud.sites:
            raise UnknownSite(spec.site_id)
        handle = self._next
        self._next += 1
        armed = _Armed(spec)
        if spec.kind == "BootError":
            armed.rng = stream_rng(self.seed, spec.seed_stream or f"fault-{handle}")
        elif spec.kind == "PeriodicKill":
            first = to_us(spec.params.get("first_at_s", spec.params["period_s"]))
            armed.pending = self.sim.schedule(max(first, self.sim.now), EventKind.FAULT_TRIGGER,
                                              lambda ev, h=handle: self._kill(h))
        else:
            t0, t1 = spec.window()
            for t, edge in ((t0, "start"), (t1, "end")):
                if t >= self.sim.now:
                    self.sim.schedule(t, EventKind.FAULT_TRIGGER,
                                      lambda ev, h=handle, e=edge: self._edge(h, e))
        self._armed[handle] = armed
        return handle

    def disarm(self, handle: int) -> str:
        armed = self._armed.get(handle)
        if armed is None or not armed.active:
            raise UnknownHandle(str(handle))
        armed.active = False
        Simulator.cancel(armed.pending)
        return "disarmed"

    def triggers(self, handle: int) -> int:
        return self._armed[handle].triggers

    def _in_window(self, spec: FaultSpec, t: SimTime) -> bool:
        w = spec.window()
        return w is None or w[0] <= t <= w[1]

    def _active(self, kind: str):
        return [(h, a) for h, a in self._armed.items() if a.active and a.spec.kind == kind]

    def _boot_check(self, vm) -> Optional[str]:
        for _, armed in self._active("BootError"):
            spec = armed.spec
            if spec.site_id != vm.site_id or not self._in_window(spec, self.sim.now):
                continue
            if armed.rng.random() < spec.params["probability"]:
                armed.triggers += 1
                self.log("BootError", spec.site_id, f"vm{vm.vm_id:05d}")
                return spec.params.get("cause", "nimbus-boot-bug")
        return None

    def _kill(self, handle: int) -> None:
        armed = self._armed[handle]
        if not armed.active:
            return
        spec = armed.spec
        running = [vm for vm in self.cloud.vms.values()
                   if vm.site_id == spec.site_id and vm.state is VmState.RUNNING]
        if running and self._in_window(spec, self.sim.now):
            victim = min(running, key=lambda v: v.vm_id)
            armed.triggers += 1
            self.log("PeriodicKill", spec.site_id, victim.name)
            self.cloud.mark_error(victim.vm_id, "external-destroy")
        armed.pending = self.sim.schedule_in(to_us(spec.params["period_s"]), EventKind.FAULT_TRIGGER,
                                             lambda ev, h=handle: self._kill(h))

    def _edge(self, handle: int, edge: str) -> None:
        armed = self._armed[handle]
        if armed.active:
            if edge == "start":
                armed.triggers += 1
            self.log(armed.spec.kind, armed.spec.site_id, edge)

    def blackout_sites(self, t: Optional[SimTime] = None) -> frozenset:
        t = self.sim.now if t is None else t
        return frozenset(a.spec.site_id for _, a in self._active("CommBlackout")
                         if self._in_window(a.spec, t))

    def monitor_gap(self, t: Optional[SimTime] = None) -> bool:
        t = self.sim.now if t is None else t
        return any(self._in_window(a.spec, t) for _, a in self._active("MonitorGap"))

    def pending_periodic(self) -> bool:
        return any(True for _ in self._active("PeriodicKill"))
