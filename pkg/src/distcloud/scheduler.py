"""Queue-driven VM provisioning across clouds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .cloud import VmState
from .errors import NoCapacity

LIVE_STATES = (VmState.PROPAGATING, VmState.BOOTING, VmState.RUNNING)


@dataclass
class SchedulerPolicy:
    tick_interval_s: float = 30
    placement: str = "round-robin"
    max_boots_per_tick: Optional[int] = None

    def __post_init__(self):
        if not self.tick_interval_s > 0:
            raise ValueError("tick_interval_s must be > 0")
        if self.placement not in ("round-robin", "first-fit"):
            raise ValueError(f"unknown placement {self.placement!r}")


@dataclass(frozen=True)
class VmView:
    vm_id: int
    image_id: str
    site_id: str
    state: VmState
    bound: bool = False
    reachable: bool = True


@dataclass
class SchedulerView:
    queued: dict = field(default_factory=dict)
    running_jobs: dict = field(default_factory=dict)
    free_slots: dict = field(default_factory=dict)
    vms: list = field(default_factory=list)
    unreachable: frozenset = frozenset()

    def state_counts(self) -> dict:
        counts = {s: 0 for s in VmState}
        for vm in self.vms:
            counts[vm.state] += 1
        return counts


@dataclass(frozen=True)
class Boot:
    image_id: str
    site_id: str


@dataclass(frozen=True)
class Shutdown:
    vm_id: int


@dataclass(frozen=True)
class KillAndReplace:
    vm_id: int


Action = Union[Boot, Shutdown, KillAndReplace]


def reconcile(view: Optional[SchedulerView], truth: SchedulerView,
              blackout_sites=frozenset()) -> SchedulerView:
    """Rebuild the scheduler's picture from ground truth.

    Outside a blackout the result equals ``truth``. VMs at a blacked-out site
    are reported as unreachable Errors; their real state is untouched.
    """
    blackout_sites = frozenset(blackout_sites)
    vms = []
    for vm in truth.vms:
        if vm.site_id in blackout_sites:
            vms.append(VmView(vm.vm_id, vm.image_id, vm.site_id, VmState.ERROR,
                              vm.bound, reachable=False))
        else:
            vms.append(vm)
    return SchedulerView(dict(truth.queued), dict(truth.running_jobs), dict(truth.free_slots),
                         vms, blackout_sites)


class CloudScheduler:
    def __init__(self, policy: SchedulerPolicy, site_order):
        self.policy = policy
        self.site_order = list(site_order)
        self._cursor: dict = {}

    def select_site(self, image_id: str, free_slots: dict) -> str:
        """Next site with a free slot, per-image round-robin or first-fit."""
        n = len(self.site_order)
        start = self._cursor.get(image_id, 0) if self.policy.placement == "round-robin" else 0
        for k in range(n):
            idx = (start + k) % n
            site = self.site_order[idx]
            if free_slots.get(site, 0) > 0:
                if self.policy.placement == "round-robin":
                    self._cursor[image_id] = (idx + 1) % n
                return site
        raise NoCapacity(f"no free slot for image {image_id}")

    def tick(self, view: SchedulerView) -> list:
        actions: list = []
        free = dict(view.free_slots)

        for vm in view.vms:
            if vm.state is VmState.ERROR and vm.reachable:
                actions.append(KillAndReplace(vm.vm_id))
                free[vm.site_id] = free.get(vm.site_id, 0) + 1

        live: dict = {}
        for vm in view.vms:
            # Unreachable VMs still hold their jobs; do not provision around them.
            if vm.state in LIVE_STATES or (vm.state is VmState.ERROR and not vm.reachable):
                live[vm.image_id] = live.get(vm.image_id, 0) + 1

        images = sorted(set(view.queued) | set(view.running_jobs))
        budget = self.policy.max_boots_per_tick
        for image in images:
            need = view.queued.get(image, 0) + view.running_jobs.get(image, 0) - live.get(image, 0)
            while need > 0 and any(v > 0 for v in free.values()):
                if budget is not None and budget <= 0:
                    break
                site = self.select_site(image, free)
                free[site] -= 1
                need -= 1
                if budget is not None:
                    budget -= 1
                actions.append(Boot(image, site))

        for vm in view.vms:
            if (vm.state is VmState.RUNNING and vm.reachable and not vm.bound
                    and view.queued.get(vm.image_id, 0) == 0):
                actions.append(Shutdown(vm.vm_id))
        return actions
