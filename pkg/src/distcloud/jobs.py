"""Condor-style job queue with streaming execution."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from .cloud import CloudModel, VmState
from .errors import DuplicateId, IllegalState, UnknownImage, UnknownSample, UnknownSite
from .flows import FlowNetwork
from .kernel import SimTime, Simulator


class JobState(enum.Enum):
    QUEUED = "Queued"
    RUNNING = "Running"
    COMPLETED = "Completed"
    REQUEUED = "Requeued"


@dataclass(frozen=True)
class SampleSpec:
    sample_id: str
    event_size_bytes: int
    total_size_bytes: int
    events_per_job: int
    cpu_events_per_s: float

    def __post_init__(self):
        if self.event_size_bytes <= 0 or self.cpu_events_per_s <= 0:
            raise ValueError(f"sample {self.sample_id}: event size and cpu rate must be > 0")

    @property
    def demand_bps(self) -> float:
        """Stream rate needed to keep the CPU busy."""
        return self.event_size_bytes * self.cpu_events_per_s * 8


@dataclass
class JobSpec:
    job_id: str
    required_image: str
    sample: str
    events_total: int
    events_done: float = 0
    state: JobState = JobState.QUEUED
    submit_at: SimTime = 0
    output_fraction: float = 0.02
    vm_id: Optional[int] = None
    attempts: int = 0
    streamed_bytes: int = 0
    dispatched_at: Optional[SimTime] = None
    completed_at: Optional[SimTime] = None
    finish_offset_s: Optional[float] = None
    _flow: Optional[str] = field(default=None, repr=False)
    _phase: str = field(default="", repr=False)
    _order: int = field(default=0, repr=False)

    def queue_key(self):
        # Requeued work goes ahead of never-run jobs with the same submit time.
        return (self.submit_at, 0 if self.state is JobState.REQUEUED else 1, self._order)


@dataclass
class StorageSite:
    site_id: str
    hosted_samples: set


@dataclass
class CalibrationFetch:
    """Optional per-job download from the conditions database before streaming."""
    site_id: str
    size_bytes: int
    demand_bps: Optional[float] = None
    enabled: bool = False


class JobQueue:
    def __init__(self, sim: Simulator, network: FlowNetwork, cloud: CloudModel, samples,
                 storage: StorageSite, user_storage_site: str,
                 calibration: Optional[CalibrationFetch] = None):
        self.sim = sim
        self.network = network
        self.cloud = cloud
        self.samples: dict = {s.sample_id: s for s in samples}
        self.storage = storage
        self.user_storage_site = user_storage_site
        self.calibration = calibration
        self.jobs: dict = {}
        self.listeners: list[Callable] = []
        for sid in (storage.site_id, user_storage_site):
            if sid not in cloud.sites:
                raise UnknownSite(sid)
        if calibration is not None and calibration.site_id not in cloud.sites:
            raise UnknownSite(calibration.site_id)
        for sample_id in self.samples:
            if sample_id not in storage.hosted_samples:
                raise UnknownSample(f"sample {sample_id} is not hosted at {storage.site_id}")
        cloud.on_error.append(lambda vm, job_id: self.requeue_on_failure(job_id))

    # -- submission -------------------------------------------------------------

    def submit(self, job: JobSpec) -> str:
        if job.job_id in self.jobs:
            raise DuplicateId(job.job_id)
        if job.required_image not in self.cloud.images:
            raise UnknownImage(f"job {job.job_id}: {job.required_image}")
        if job.sample not in self.samples:
            raise UnknownSample(f"job {job.job_id}: {job.sample}")
        job._order = len(self.jobs)
        self.jobs[job.job_id] = job
        return job.job_id

    def waiting(self, now: Optional[SimTime] = None) -> list:
        """Visible Queued/Requeued jobs in dispatch order."""
        now = self.sim.now if now is None else now
        ready = [j for j in self.jobs.values()
                 if j.state in (JobState.QUEUED, JobState.REQUEUED) and j.submit_at <= now]
        return sorted(ready, key=JobSpec.queue_key)

    def counts(self) -> dict:
        out = {s: 0 for s in JobState}
        for j in self.jobs.values():
            out[j.state] += 1
        return out

    def _notify(self, job: JobSpec, detail: str = "") -> None:
        for listener in self.listeners:
            listener(job, detail)

    # -- dispatch ---------------------------------------------------------------

    def match_and_dispatch(self, now: Optional[SimTime] = None) -> list:
        now = self.sim.now if now is None else now
        idle: dict = {}
        for vm in sorted(self.cloud.vms.values(), key=lambda v: v.vm_id):
            if vm.state is VmState.RUNNING and vm.bound_job is None and not vm.pending_shutdown:
                idle.setdefault(vm.image_id, []).append(vm)
        bindings = []
        for job in self.waiting(now):
            pool = idle.get(job.required_image)
            if not pool:
                continue
            vm = pool.pop(0)
            self._bind(job, vm)
            bindings.append((job.job_id, vm.vm_id))
        return bindings

    def _links(self, src: str, dst: str) -> tuple:
        # Same-site traffic never leaves the site and is not link-limited.
        if src == dst:
            return ()
        sites = self.cloud.sites
        return (sites[src].uplink.link_id, sites[dst].downlink.link_id)

    def _bind(self, job: JobSpec, vm) -> None:
        job.state = JobState.RUNNING
        job.vm_id = vm.vm_id
        job.events_done = 0
        job.attempts += 1
        job.dispatched_at = self.sim.now
        vm.bound_job = job.job_id
        self._notify(job, vm.name)
        cal = self.calibration
        if cal is not None and cal.enabled:
            job._phase = "calibration"
            flow = self.network.open_flow(self._links(cal.site_id, vm.site_id), cal.size_bytes,
                                          cal.demand_bps, on_complete=lambda f, j=job: self._stream(j),
                                          tag=("calibration", job.job_id))
            job._flow = flow.flow_id
        else:
            self._stream(job)

    def _stream(self, job: JobSpec) -> None:
        sample = self.samples[job.sample]
        vm = self.cloud.vms[job.vm_id]
        job._phase = "stream"
        flow = self.network.open_flow(self._links(self.storage.site_id, vm.site_id),
                                      job.events_total * sample.event_size_bytes,
                                      sample.demand_bps,
                                      on_complete=lambda f, j=job: self._streamed(j, f),
                                      tag=("stream", job.job_id))
        job._flow = flow.flow_id

    def _streamed(self, job: JobSpec, flow) -> None:
        job.streamed_bytes += flow.size_bits // 8
        job.events_done = job.events_total
        sample = self.samples[job.sample]
        vm = self.cloud.vms[job.vm_id]
        out_bytes = int(job.output_fraction * job.events_total * sample.event_size_bytes)
        job._phase = "output"
        flow = self.network.open_flow(self._links(vm.site_id, self.user_storage_site), out_bytes,
                                      None, on_complete=lambda f, j=job: self._finished(j),
                                      tag=("output", job.job_id))
        job._flow = flow.flow_id

    def _finished(self, job: JobSpec) -> None:
        vm = self.cloud.vms[job.vm_id]
        vm.bound_job = None
        job._flow = None
        job._phase = ""
        job.state = JobState.COMPLETED
        job.completed_at = self.sim.now
        self._notify(job, vm.name)

    # -- accounting -------------------------------------------------------------

    def progress(self, job_id: str, dt: float, achieved_bps: float) -> float:
        """Account ``dt`` seconds of processing at a delivered stream rate.

        Returns the events processed. The event rate is the lesser of the CPU
        rate and what the stream delivers; on reaching ``events_total`` the
        exact in-interval crossing offset is stored in ``job.finish_offset_s``.
        """
        job = self.jobs[job_id]
        if job.state is not JobState.RUNNING:
            raise IllegalState(f"job {job_id} is {job.state.value}")
        sample = self.samples[job.sample]
        rate = min(sample.cpu_events_per_s, achieved_bps / (8 * sample.event_size_bytes))
        left = job.events_total - job.events_done
        done = min(rate * dt, left)
        job.events_done += done
        if job.events_done >= job.events_total:
            job.events_done = job.events_total
            job.finish_offset_s = left / rate if rate > 0 else 0.0
        return done

    def requeue_on_failure(self, job_id: str) -> None:
        job = self.jobs[job_id]
        if job.state is not JobState.RUNNING:
            return
        if job._flow is not None and job._flow in self.network.flows:
            flow = self.network.close_flow(job._flow)
            if job._phase == "stream":
                job.streamed_bytes += flow.moved_bits // 8
        vm_name = f"vm{job.vm_id:05d}"
        job._flow = None
        job._phase = ""
        job.vm_id = None
        job.events_done = 0
        job.state = JobState.REQUEUED
        self._notify(job, vm_name)

    def events_in_flight(self, job_id: str) -> float:
        """Events processed so far in the current attempt (from streamed bytes)."""
        job = self.jobs[job_id]
        if job._phase != "stream" or job._flow not in self.network.flows:
            return job.events_done
        self.network.advance_to(self.sim.now)
        flow = self.network.flows[job._flow]
        return flow.moved_bits / (8 * self.samples[job.sample].event_size_bytes)
