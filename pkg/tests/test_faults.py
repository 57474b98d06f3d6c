import pytest

from distcloud.cloud import VmState
from distcloud.errors import BadParams, UnknownHandle, UnknownSite
from distcloud.faults import FaultSpec, stream_rng
from distcloud.jobs import JobState
from distcloud.kernel import to_us
from distcloud.runner import Simulation
from distcloud.scenario import FaultConfig, JobGroup

from conftest import IMAGE, small_scenario


def sim_with(faults, jobs=None, **kw):
    return Simulation(small_scenario(jobs=jobs or [JobGroup("s1", IMAGE, 4)], faults=faults, **kw))


@pytest.mark.parametrize("spec", [
    FaultSpec("BootError", "REPO", {"probability": 1.5}),
    FaultSpec("BootError", "REPO", {}),
    FaultSpec("PeriodicKill", "REPO", {"period_s": 0}),
    FaultSpec("CommBlackout", "REPO", {"window": [10, 5]}),
    FaultSpec("CommBlackout", "REPO", {}),
    FaultSpec("Meteor", "REPO", {}),
])
def test_bad_params(spec):
    s = sim_with([])
    with pytest.raises(BadParams):
        s.faults.arm(spec)


def test_unknown_site():
    s = sim_with([])
    with pytest.raises(UnknownSite):
        s.faults.arm(FaultSpec("BootError", "MARS", {"probability": 0.5}))


def test_disarm_unknown_handle():
    s = sim_with([])
    with pytest.raises(UnknownHandle):
        s.faults.disarm(42)


def test_stream_rng_isolated_by_name():
    a = [stream_rng(1, "a").random() for _ in range(3)]
    assert a == [stream_rng(1, "a").random() for _ in range(3)]
    assert stream_rng(1, "a").random() != stream_rng(1, "b").random()
    assert stream_rng(1, "a").random() != stream_rng(2, "a").random()


def test_boot_error_then_replacement():
    s = sim_with([FaultConfig("BootError", "REPO", {"probability": 0.5}, "boot")])
    summary = s.run()
    assert summary.all_completed
    errors = [(t, v) for t, v, site, _, new in s.transitions if new is VmState.ERROR]
    assert errors and summary.fault_triggers["BootError_REPO"] == len(errors)
    for _, vm_id in errors:
        assert s.cloud.vms[vm_id].cause == "nimbus-boot-bug"
        assert s.cloud.vms[vm_id].state is VmState.TERMINATED


def test_periodic_kill_victim_and_resend():
    s = sim_with([FaultConfig("PeriodicKill", "FAR", {"period_s": 600, "first_at_s": 300})],
                 jobs=[JobGroup("s1", IMAGE, 4)])
    s.run()
    kills = [line for line in s.events.lines if "\tfault\tPeriodicKill" in line]
    assert kills
    first_victim = kills[0].split("\t")[-1]
    # lowest-id running VM at FAR at t=300
    running = sorted(vm.vm_id for vm in s.cloud.vms.values() if vm.site_id == "FAR")
    assert first_victim == f"vm{running[0]:05d}"
    destroyed = [vm for vm in s.cloud.vms.values() if vm.cause == "external-destroy"]
    assert len(destroyed) == len(kills)
    # each replacement at FAR re-sends the 1 GB image
    far_boots = sum(1 for vm in s.cloud.vms.values() if vm.site_id == "FAR")
    assert s.network.link_bits["repo_REPO"] == far_boots * 10**9 * 8
    assert all(j.state is JobState.COMPLETED for j in s.jobs.jobs.values())


def test_blackout_corrupts_view_only():
    window = [400, 700]
    base = sim_with([])
    base.run()
    s = sim_with([FaultConfig("CommBlackout", "FAR", {"window": window})])
    s.run()
    errors = {f.t_seconds: f.vms_error for f in s.recorder.frames}
    far_vms = 2
    assert all(errors[t] == far_vms for t in (420.0, 480.0, 600.0, 660.0))
    assert errors[360.0] == 0 and errors[720.0] == 0
    assert not any(new is VmState.ERROR for *_, new in s.transitions)
    assert [j.completed_at for j in s.jobs.jobs.values()] == \
        [j.completed_at for j in base.jobs.jobs.values()]


def test_monitor_gap_is_pure_observation():
    base = sim_with([])
    base.run()
    s = sim_with([FaultConfig("MonitorGap", None, {"window": [600, 900]})])
    s.run()
    times = [f.t_seconds for f in s.recorder.frames]
    assert not any(600 <= t <= 900 for t in times)
    assert [f for f in base.recorder.frames if not 600 <= f.t_seconds <= 900] == \
        s.recorder.frames
    assert base.transitions == s.transitions


def test_disarm_before_trigger_matches_fault_free():
    base = sim_with([])
    base.run()
    s = sim_with([FaultConfig("PeriodicKill", "FAR", {"period_s": 600, "first_at_s": 300})])
    s.faults.disarm(s.fault_handles[0])
    s.run()
    assert s.recorder.to_csv() == base.recorder.to_csv()


def test_disarm_mid_blackout_repairs_next_tick():
    s = sim_with([FaultConfig("CommBlackout", "FAR", {"window": [400, 3000]})])
    s.sim.schedule(to_us(500), action=lambda ev: s.faults.disarm(s.fault_handles[0]))
    s.run()
    errors = {f.t_seconds: f.vms_error for f in s.recorder.frames}
    assert errors[480.0] == 2 and errors[540.0] == 0


def test_arm_disarm_pairs_keep_completion_counts():
    base = sim_with([])
    b = base.run()
    s = sim_with([])
    for _ in range(3):
        h = s.faults.arm(FaultSpec("BootError", "FAR", {"probability": 1.0}))
        s.faults.disarm(h)
    assert s.run().jobs_completed == b.jobs_completed


def test_liveness_under_boot_errors():
    s = sim_with([FaultConfig("BootError", "REPO", {"probability": 0.7}, "x"),
                  FaultConfig("BootError", "FAR", {"probability": 0.7}, "y")])
    summary = s.run()
    assert summary.all_completed
    assert max(f.vms_running for f in s.recorder.frames) == 4
