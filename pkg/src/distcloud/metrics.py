"""Time-series recording, the transition log, and its replay audit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .cloud import LEGAL_TRANSITIONS, SLOT_STATES, VmState
from .kernel import SimTime, US_PER_S

BASE_COLUMNS = ("t_seconds", "vms_propagating", "vms_booting", "vms_running", "vms_error",
                "jobs_queued", "jobs_running", "jobs_completed")


@dataclass
class MetricsFrame:
    t_seconds: float
    vms_propagating: int
    vms_booting: int
    vms_running: int
    vms_error: int
    jobs_queued: int
    jobs_running: int
    jobs_completed: int
    link_mbps: dict = field(default_factory=dict)

    def values(self) -> list:
        return [self.t_seconds, self.vms_propagating, self.vms_booting, self.vms_running,
                self.vms_error, self.jobs_queued, self.jobs_running, self.jobs_completed,
                *self.link_mbps.values()]


class MetricsRecorder:
    """Samples link byte counters into per-interval average rates.

    Rows inside a monitoring gap are dropped but the counters still roll
    forward, so the first row after a gap covers only its own interval.
    """

    def __init__(self, link_ids: Iterable[str]):
        self.link_ids = list(link_ids)
        self.frames: list = []
        self._prev_t: Optional[SimTime] = None
        self._prev_bits: dict = {lid: 0 for lid in self.link_ids}

    @property
    def header(self) -> list:
        return list(BASE_COLUMNS) + [f"link_{lid}_mbps" for lid in self.link_ids]

    def sample(self, t: SimTime, vm_counts: dict, job_counts: dict, link_bits: dict,
               suppressed: bool = False) -> Optional[MetricsFrame]:
        rates = {}
        for lid in self.link_ids:
            delta = link_bits[lid] - self._prev_bits[lid]
            dt = 0 if self._prev_t is None else t - self._prev_t
            # bits per microsecond is Mbit/s
            rates[lid] = delta / dt if dt > 0 else 0.0
            self._prev_bits[lid] = link_bits[lid]
        self._prev_t = t
        if suppressed:
            return None
        frame = MetricsFrame(t / US_PER_S,
                             vm_counts.get(VmState.PROPAGATING, 0),
                             vm_counts.get(VmState.BOOTING, 0),
                             vm_counts.get(VmState.RUNNING, 0),
                             vm_counts.get(VmState.ERROR, 0),
                             job_counts["queued"], job_counts["running"], job_counts["completed"],
                             rates)
        self.frames.append(frame)
        return frame

    def to_csv(self) -> str:
        lines = [",".join(self.header)]
        for frame in self.frames:
            lines.append(",".join(f"{v:.3f}" for v in frame.values()))
        return "\n".join(lines) + "\n"


def read_metrics(text: str) -> tuple:
    """Parse metrics.csv text into ``(header, rows)`` with float cells."""
    lines = text.rstrip("\n").split("\n")
    header = lines[0].split(",")
    rows = [[float(c) for c in line.split(",")] for line in lines[1:]]
    return header, rows


class EventLog:
    """Tab-separated ordered log of VM, job and fault events.

    Lines: ``# site <id> <slots>`` headers, then
    ``<t_us> vm <vm> <site> <from> <to> <cause>``,
    ``<t_us> job <job> <state> <vm>`` and ``<t_us> fault <kind> <site> <detail>``.
    """

    def __init__(self):
        self.lines: list = []

    def site(self, site_id: str, slots: int) -> None:
        self.lines.append(f"# site {site_id} {slots}")

    def vm(self, t: SimTime, name: str, site: str, old: Optional[VmState], new: VmState,
           cause: Optional[str] = None) -> None:
        self.lines.append("\t".join((str(t), "vm", name, site, old.value if old else "-",
                                     new.value, cause or "-")))

    def job(self, t: SimTime, job_id: str, state: str, detail: str = "") -> None:
        self.lines.append("\t".join((str(t), "job", job_id, state, detail or "-")))

    def fault(self, t: SimTime, kind: str, site: Optional[str], detail: str) -> None:
        self.lines.append("\t".join((str(t), "fault", kind, site or "-", detail or "-")))

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


@dataclass
class AuditReport:
    transitions: int = 0
    illegal: list = field(default_factory=list)
    slot_violations: list = field(default_factory=list)
    time_regressions: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.illegal or self.slot_violations or self.time_regressions)


def audit_events(lines: Iterable[str]) -> AuditReport:
    """Replay VM transitions, checking edge legality and per-site slot use."""
    report = AuditReport()
    slots: dict = {}
    state: dict = {}
    site_of: dict = {}
    last_t = -1
    by_name = {s.value: s for s in VmState}
    for n, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line:
            continue
        if line.startswith("# site "):
            _, _, sid, cap = line.split(" ")
            slots[sid] = int(cap)
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        t = int(parts[0])
        if t < last_t:
            report.time_regressions.append(f"line {n}: time {t} < {last_t}")
        last_t = t
        if parts[1] != "vm":
            continue
        name, site, old_s, new_s = parts[2], parts[3], parts[4], parts[5]
        old = None if old_s == "-" else by_name[old_s]
        new = by_name[new_s]
        report.transitions += 1
        if state.get(name) != old:
            report.illegal.append(f"line {n}: {name} logged from {old_s} but was "
                                  f"{state[name].value if name in state else '-'}")
        if new not in LEGAL_TRANSITIONS[old]:
            report.illegal.append(f"line {n}: {name} {old_s} -> {new_s}")
        state[name] = new
        site_of[name] = site
        used = sum(1 for v, s in state.items() if site_of[v] == site and s in SLOT_STATES)
        if site in slots and used > slots[site]:
            report.slot_violations.append(f"line {n}: {site} uses {used} > {slots[site]} slots")
    return report
