"""IaaS sites, the image repository, and the VM lifecycle."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import IllegalState, NoFreeSlot, UnknownImage, UnknownSite
from .flows import FlowNetwork, LinkSpec
from .kernel import EventKind, SimTime, Simulator


class VmState(enum.Enum):
    PROPAGATING = "Propagating"
    BOOTING = "Booting"
    RUNNING = "Running"
    ERROR = "Error"
    SHUTTING_DOWN = "ShuttingDown"
    TERMINATED = "Terminated"


LEGAL_TRANSITIONS = {
    None: {VmState.PROPAGATING, VmState.BOOTING},
    VmState.PROPAGATING: {VmState.BOOTING, VmState.ERROR},
    VmState.BOOTING: {VmState.RUNNING, VmState.ERROR},
    VmState.RUNNING: {VmState.SHUTTING_DOWN, VmState.ERROR},
    VmState.ERROR: {VmState.TERMINATED},
    VmState.SHUTTING_DOWN: {VmState.TERMINATED},
    VmState.TERMINATED: set(),
}

# States that hold a slot for the capacity invariant.
SLOT_STATES = (VmState.PROPAGATING, VmState.BOOTING, VmState.RUNNING)


@dataclass(frozen=True)
class VmImageSpec:
    image_id: str
    size_bytes: int = 16 * 10**9
    ram_mb: int = 1024
    software_tag: str = ""

    def __post_init__(self):
        if self.size_bytes <= 0 or self.ram_mb <= 0:
            raise ValueError(f"image {self.image_id}: size_bytes and ram_mb must be > 0")


@dataclass
class CloudSite:
    site_id: str
    slot_capacity: int
    uplink: LinkSpec
    downlink: LinkSpec
    image_cache: set = field(default_factory=set)
    provisioning_flavor: str = "nimbus-like"
    credential_tag: str = ""


@dataclass
class RepositorySite:
    site_id: str
    hosted_images: set
    server_throughput_bps: float

    @property
    def egress_link_id(self) -> str:
        return f"repo_{self.site_id}"


@dataclass
class VmInstance:
    vm_id: int
    image_id: str
    site_id: str
    state: VmState
    state_entered_at: SimTime
    bound_job: Optional[str] = None
    pending_shutdown: bool = False
    cause: Optional[str] = None
    requested_at: SimTime = 0
    _timer: object = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return f"vm{self.vm_id:05d}"


@dataclass
class _Transfer:
    site_id: str
    image_id: str
    flow_id: str
    waiters: list


class CloudModel:
    """Ground-truth state of every site and VM.

    ``boot_checks`` are consulted when a VM finishes booting; any that return
    a cause string send the VM to Error instead of Running (fault injection
    hooks in here). ``listeners`` receive ``(vm, old_state, new_state)`` on
    every transition.
    """

    def __init__(self, sim: Simulator, network: FlowNetwork, sites, images,
                 repository: RepositorySite, boot_delay: SimTime, teardown_delay: SimTime,
                 single_copy_cache: bool = False):
        self.sim = sim
        self.network = network
        self.sites: dict = {s.site_id: s for s in sites}
        self.images: dict = {i.image_id: i for i in images}
        self.repository = repository
        self.boot_delay = boot_delay
        self.teardown_delay = teardown_delay
        self.single_copy_cache = single_copy_cache
        self.vms: dict = {}
        self.boot_checks: list[Callable[[VmInstance], Optional[str]]] = []
        self.listeners: list[Callable] = []
        self.on_error: list[Callable[[VmInstance, Optional[str]], None]] = []
        self.propagations = 0
        self._transfers: dict = {}
        self._next_vm = 1
        if repository.site_id not in self.sites:
            raise UnknownSite(f"repository site {repository.site_id}")
        # The repository's own site boots from local disk.
        self.sites[repository.site_id].image_cache |= set(repository.hosted_images)

    # -- queries ------------------------------------------------------------

    def cache_lookup(self, site_id: str, image_id: str) -> bool:
        if site_id not in self.sites:
            raise UnknownSite(site_id)
        return image_id in self.sites[site_id].image_cache

    def occupied(self, site_id: str) -> int:
        """VMs holding a slot; ShuttingDown and Error keep theirs until Terminated."""
        return sum(1 for vm in self.vms.values()
                   if vm.site_id == site_id and vm.state is not VmState.TERMINATED)

    def free_slots(self, site_id: str) -> int:
        return self.sites[site_id].slot_capacity - self.occupied(site_id)

    def live_vms(self):
        return [vm for vm in self.vms.values() if vm.state is not VmState.TERMINATED]

    # -- transitions ----------------------------------------------------------

    def _enter(self, vm: VmInstance, state: VmState, cause: Optional[str] = None) -> None:
        old = vm.state
        if state not in LEGAL_TRANSITIONS[old]:
            raise IllegalState(f"{vm.name}: {old} -> {state} is not a legal transition")
        vm.state = state
        vm.state_entered_at = self.sim.now
        if cause is not None:
            vm.cause = cause
        for listener in self.listeners:
            listener(vm, old, state)

    def request_boot(self, image_id: str, site_id: str) -> int:
        if site_id not in self.sites:
            raise UnknownSite(site_id)
        if image_id not in self.images:
            raise UnknownImage(image_id)
        if self.free_slots(site_id) <= 0:
            raise NoFreeSlot(f"no free slot at {site_id}")
        vm = VmInstance(self._next_vm, image_id, site_id, None, self.sim.now,
                        requested_at=self.sim.now)
        self._next_vm += 1
        self.vms[vm.vm_id] = vm
        if self.cache_lookup(site_id, image_id):
            self._enter(vm, VmState.BOOTING)
            self._start_boot(vm)
        else:
            self._enter(vm, VmState.PROPAGATING)
            self._propagate(vm)
        return vm.vm_id

    def _propagate(self, vm: VmInstance) -> None:
        key = (vm.site_id, vm.image_id)
        if self.single_copy_cache and key in self._transfers:
            self._transfers[key].waiters.append(vm.vm_id)
            return
        if vm.image_id not in self.repository.hosted_images:
            raise UnknownImage(f"{vm.image_id} is not hosted by the repository")
        image = self.images[vm.image_id]
        repo_site = self.sites[self.repository.site_id]
        dest = self.sites[vm.site_id]
        path = (self.repository.egress_link_id, repo_site.uplink.link_id, dest.downlink.link_id)
        transfer = _Transfer(vm.site_id, vm.image_id, "", [vm.vm_id])
        flow = self.network.open_flow(path, image.size_bytes, None,
                                      on_complete=lambda f, t=transfer: self._propagated(t),
                                      tag=("image", vm.site_id, vm.image_id))
        transfer.flow_id = flow.flow_id
        self.propagations += 1
        if self.single_copy_cache:
            self._transfers[key] = transfer
        else:
            vm._timer = transfer

    def _propagated(self, transfer: _Transfer) -> None:
        if self.single_copy_cache:
            self._transfers.pop((transfer.site_id, transfer.image_id), None)
            self.sites[transfer.site_id].image_cache.add(transfer.image_id)
        for vm_id in transfer.waiters:
            vm = self.vms[vm_id]
            if vm.state is VmState.PROPAGATING:
                vm._timer = None
                self._enter(vm, VmState.BOOTING)
                self._start_boot(vm)

    def _start_boot(self, vm: VmInstance) -> None:
        vm._timer = self.sim.schedule_in(self.boot_delay, EventKind.VM_BOOT_COMPLETE,
                                         lambda ev, v=vm: self._booted(v))

    def _booted(self, vm: VmInstance) -> None:
        vm._timer = None
        if vm.state is not VmState.BOOTING:
            return
        for check in self.boot_checks:
            cause = check(vm)
            if cause:
                self.mark_error(vm.vm_id, cause)
                return
        self._enter(vm, VmState.RUNNING)
        if vm.pending_shutdown:
            vm.pending_shutdown = False
            self.shutdown_vm(vm.vm_id)

    def _detach_transfer(self, vm: VmInstance) -> None:
        if self.single_copy_cache:
            transfer = self._transfers.get((vm.site_id, vm.image_id))
        else:
            transfer = vm._timer
        if transfer is None:
            return
        if vm.vm_id in transfer.waiters:
            transfer.waiters.remove(vm.vm_id)
        if not transfer.waiters:
            self.network.close_flow(transfer.flow_id)
            self._transfers.pop((transfer.site_id, transfer.image_id), None)
        vm._timer = None

    def shutdown_vm(self, vm_id: int) -> str:
        """Retire a VM.

        Returns ``"terminated"`` (Error VMs go straight to Terminated),
        ``"shutting-down"`` (Running VMs, after ``teardown_delay``) or
        ``"deferred"`` when the VM is still propagating or booting; a deferred
        request is applied when the boot resolves.
        """
        vm = self.vms[vm_id]
        if vm.state is VmState.ERROR:
            self._enter(vm, VmState.TERMINATED)
            return "terminated"
        if vm.state in (VmState.PROPAGATING, VmState.BOOTING):
            vm.pending_shutdown = True
            return "deferred"
        if vm.state is VmState.RUNNING:
            if vm.bound_job is not None:
                raise IllegalState(f"{vm.name} is running job {vm.bound_job}")
            self._enter(vm, VmState.SHUTTING_DOWN)
            vm._timer = self.sim.schedule_in(self.teardown_delay, EventKind.VM_TEARDOWN_COMPLETE,
                                             lambda ev, v=vm: self._torn_down(v))
            return "shutting-down"
        raise IllegalState(f"{vm.name} is {vm.state.value}")

    def _torn_down(self, vm: VmInstance) -> None:
        vm._timer = None
        self._enter(vm, VmState.TERMINATED)

    def mark_error(self, vm_id: int, cause: str) -> bool:
        """Send a VM to Error; returns False when the VM cannot enter Error."""
        vm = self.vms[vm_id]
        if vm.state not in (VmState.PROPAGATING, VmState.BOOTING, VmState.RUNNING):
            return False
        if vm.state is VmState.PROPAGATING:
            self._detach_transfer(vm)
        elif vm.state is VmState.BOOTING:
            Simulator.cancel(vm._timer)
            vm._timer = None
        job, vm.bound_job = vm.bound_job, None
        self._enter(vm, VmState.ERROR, cause)
        if job is not None:
            for hook in self.on_error:
                hook(vm, job)
        if vm.pending_shutdown:
            vm.pending_shutdown = False
            self.shutdown_vm(vm.vm_id)
        return True
