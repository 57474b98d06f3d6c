"""Wires a scenario into one simulation and writes its outputs."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

from .cloud import CloudModel, CloudSite, RepositorySite, VmImageSpec, VmState
from .faults import FaultInjector
from .flows import FlowNetwork, LinkSpec
from .jobs import CalibrationFetch, JobQueue, JobSpec, JobState, SampleSpec, StorageSite
from .kernel import EventKind, Simulator, US_PER_S, to_us
from .metrics import EventLog, MetricsRecorder
from .scenario import MBPS, ScenarioConfig
from .scheduler import (Boot, CloudScheduler, KillAndReplace, SchedulerPolicy, SchedulerView,
                        Shutdown, VmView, reconcile)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INCOMPLETE = 2
EXIT_IO = 3


@dataclass
class RunSummary:
    jobs_total: int
    jobs_completed: int
    horizon_s: float
    end_s: float
    horizon_reached: bool
    link_bytes: dict = field(default_factory=dict)
    propagations: int = 0
    requeues: int = 0
    fault_triggers: dict = field(default_factory=dict)
    events_fired: int = 0

    @property
    def all_completed(self) -> bool:
        return self.jobs_completed == self.jobs_total

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.all_completed else EXIT_INCOMPLETE

    def text(self) -> str:
        lines = [
            f"jobs_total: {self.jobs_total}",
            f"jobs_completed: {self.jobs_completed}",
            f"completion_deficit: {self.jobs_total - self.jobs_completed}",
            f"horizon_s: {self.horizon_s:.3f}",
            f"end_s: {self.end_s:.3f}",
            f"horizon_reached: {str(self.horizon_reached).lower()}",
            f"image_propagations: {self.propagations}",
            f"job_requeues: {self.requeues}",
            f"events_fired: {self.events_fired}",
        ]
        lines += [f"fault_{k}: {v}" for k, v in self.fault_triggers.items()]
        lines += [f"link_{lid}_bytes: {b}" for lid, b in self.link_bytes.items()]
        return "\n".join(lines) + "\n"


class Simulation:
    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.sim = Simulator()
        cfg = config

        links = []
        for s in cfg.sites:
            links.append(LinkSpec(s.uplink_id, s.uplink_mbps * MBPS))
            links.append(LinkSpec(s.downlink_id, s.downlink_mbps * MBPS))
        repo = RepositorySite(cfg.repository.site, set(cfg.repository.images),
                              cfg.repository.throughput_mbps * MBPS)
        links.append(LinkSpec(repo.egress_link_id, repo.server_throughput_bps))
        self.link_ids = [link.link_id for link in links]
        self.network = FlowNetwork(links, self.sim)

        sites = [CloudSite(s.id, s.slots, self.network.links[s.uplink_id],
                           self.network.links[s.downlink_id], set(s.preseeded_images),
                           s.flavor, s.credential) for s in cfg.sites]
        images = [VmImageSpec(i.id, i.size_bytes, i.ram_mb, i.software_tag) for i in cfg.images]
        self.cloud = CloudModel(self.sim, self.network, sites, images, repo,
                                to_us(cfg.boot_delay_s), to_us(cfg.teardown_delay_s),
                                cfg.single_copy_cache)

        samples = [SampleSpec(s.id, s.event_size_bytes, s.total_size_bytes, s.events_per_job,
                              s.cpu_events_per_s) for s in cfg.samples]
        calibration = None
        if cfg.calibration is not None:
            c = cfg.calibration
            calibration = CalibrationFetch(c.site, c.size_bytes,
                                           None if c.demand_mbps is None else c.demand_mbps * MBPS,
                                           c.enabled)
        self.jobs = JobQueue(self.sim, self.network, self.cloud, samples,
                             StorageSite(cfg.storage.site, set(cfg.storage.samples)),
                             cfg.user_storage_site, calibration)
        for group in cfg.jobs:
            sample = cfg.sample_by_id(group.sample)
            for job_id in group.job_ids():
                self.jobs.submit(JobSpec(job_id, group.image, group.sample, sample.events_per_job,
                                         submit_at=to_us(group.submit_at_s),
                                         output_fraction=group.output_fraction))

        self.policy = SchedulerPolicy(cfg.scheduler.tick_interval_s, cfg.scheduler.placement,
                                      cfg.scheduler.max_boots_per_tick)
        self.scheduler = CloudScheduler(self.policy, [s.id for s in cfg.sites if s.slots > 0])

        self.events = EventLog()
        for s in cfg.sites:
            self.events.site(s.id, s.slots)
        self.cloud.listeners.append(self._log_vm)
        self.jobs.listeners.append(self._log_job)
        self.faults = FaultInjector(self.sim, self.cloud, self.seed, log=self._log_fault)
        self.fault_handles = [self.faults.arm(f.to_spec()) for f in cfg.faults]

        self.recorder = MetricsRecorder(self.link_ids)
        self.transitions: list = []
        self.requeues = 0
        self.horizon = to_us(cfg.horizon_hours * 3600)
        self._tick_us = to_us(self.policy.tick_interval_s)
        self._sample_us = to_us(cfg.sample_interval_s)
        self._summary: Optional[RunSummary] = None

    # -- logging --------------------------------------------------------------

    def _log_vm(self, vm, old, new):
        self.transitions.append((self.sim.now, vm.vm_id, vm.site_id, old, new))
        self.events.vm(self.sim.now, vm.name, vm.site_id, old, new,
                       vm.cause if new is VmState.ERROR else None)

    def _log_job(self, job, detail):
        if job.state is JobState.REQUEUED:
            self.requeues += 1
        self.events.job(self.sim.now, job.job_id, job.state.value, detail)

    def _log_fault(self, kind, site, detail):
        self.events.fault(self.sim.now, kind, site, detail)

    # -- views ------------------------------------------------------------------

    def truth_view(self) -> SchedulerView:
        queued: dict = {}
        running: dict = {}
        now = self.sim.now
        for job in self.jobs.jobs.values():
            if job.state in (JobState.QUEUED, JobState.REQUEUED) and job.submit_at <= now:
                queued[job.required_image] = queued.get(job.required_image, 0) + 1
            elif job.state is JobState.RUNNING:
                running[job.required_image] = running.get(job.required_image, 0) + 1
        free = {sid: self.cloud.free_slots(sid) for sid in self.scheduler.site_order}
        vms = [VmView(vm.vm_id, vm.image_id, vm.site_id, vm.state, vm.bound_job is not None)
               for vm in self.cloud.vms.values() if vm.state is not VmState.TERMINATED]
        return SchedulerView(queued, running, free, vms)

    def view(self) -> SchedulerView:
        return reconcile(None, self.truth_view(), self.faults.blackout_sites())

    # -- handlers ---------------------------------------------------------------

    def _apply(self, action) -> None:
        # Actions are re-validated against ground truth; stale ones are dropped.
        cloud = self.cloud
        if isinstance(action, Boot):
            if cloud.free_slots(action.site_id) > 0:
                cloud.request_boot(action.image_id, action.site_id)
        elif isinstance(action, Shutdown):
            vm = cloud.vms[action.vm_id]
            if vm.state is VmState.RUNNING and vm.bound_job is None:
                cloud.shutdown_vm(vm.vm_id)
        elif isinstance(action, KillAndReplace):
            if cloud.vms[action.vm_id].state is VmState.ERROR:
                cloud.shutdown_vm(action.vm_id)

    def _tick(self, _event) -> None:
        for action in self.scheduler.tick(self.view()):
            self._apply(action)
        self.jobs.match_and_dispatch()
        if self.quiescent():
            self.sim.stop()
            return
        self.sim.schedule_in(self._tick_us, EventKind.SCHEDULER_TICK, self._tick)

    def quiescent(self) -> bool:
        done = all(j.state is JobState.COMPLETED for j in self.jobs.jobs.values())
        return done and not self.cloud.live_vms()

    def _sample(self, _event) -> None:
        self.network.advance_to(self.sim.now)
        counts = self.view().state_counts()
        jc = self.jobs.counts()
        job_counts = {"queued": jc[JobState.QUEUED] + jc[JobState.REQUEUED],
                      "running": jc[JobState.RUNNING], "completed": jc[JobState.COMPLETED]}
        self.recorder.sample(self.sim.now, counts, job_counts, self.network.link_bits,
                             suppressed=self.faults.monitor_gap())
        nxt = self.sim.now + self._sample_us
        if nxt <= self.horizon:
            self.sim.schedule(nxt, EventKind.METRICS_SAMPLE, self._sample)

    # -- driver -----------------------------------------------------------------

    def run(self) -> RunSummary:
        self.sim.schedule(0, EventKind.METRICS_SAMPLE, self._sample)
        self.sim.schedule(0, EventKind.SCHEDULER_TICK, self._tick)
        fired = self.sim.run_until(self.horizon)
        self.network.advance_to(self.sim.now)
        counts = self.jobs.counts()
        self._summary = RunSummary(
            jobs_total=len(self.jobs.jobs),
            jobs_completed=counts[JobState.COMPLETED],
            horizon_s=self.horizon / US_PER_S,
            end_s=self.sim.now / US_PER_S,
            horizon_reached=self.sim.now >= self.horizon,
            link_bytes={lid: b // 8 for lid, b in self.network.link_bits.items()},
            propagations=self.cloud.propagations,
            requeues=self.requeues,
            fault_triggers={f"{cfg.kind}_{cfg.site or 'all'}": self.faults.triggers(h)
                            for cfg, h in zip(self.config.faults, self.fault_handles)},
            events_fired=fired,
        )
        log.info("run finished at t=%.0fs: %d/%d jobs completed", self._summary.end_s,
                 self._summary.jobs_completed, self._summary.jobs_total)
        return self._summary

    def write_outputs(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="\n") as fh:
            fh.write(self.recorder.to_csv())
        with open(os.path.join(out_dir, "events.log"), "w", newline="\n") as fh:
            fh.write(self.events.text())
        with open(os.path.join(out_dir, "summary.txt"), "w", newline="\n") as fh:
            fh.write(self._summary.text())


def run(config: ScenarioConfig, out_dir=None, seed: Optional[int] = None) -> RunSummary:
    simulation = Simulation(config, seed)
    summary = simulation.run()
    if out_dir is not None:
        simulation.write_outputs(out_dir)
    return summary
