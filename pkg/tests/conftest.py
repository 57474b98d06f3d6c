import pytest

from distcloud.scenario import (GB, ImageConfig, JobGroup, RepositoryConfig, SampleConfig,
                                ScenarioConfig, SchedulerConfig, SiteConfig, StorageConfig,
                                paper_scenario)

IMAGE = "img"


def small_scenario(jobs=None, sites=None, faults=None, **kw) -> ScenarioConfig:
    """Two clouds plus a storage site; image 1 GB, short jobs."""
    sites = sites or [
        SiteConfig("REPO", 2, 1000, 1000),
        SiteConfig("FAR", 2, 1000, 1000),
        SiteConfig("DATA", 0, 1000, 1000),
    ]
    samples = [
        SampleConfig("s1", 4000, 10 * GB, 110_000, 110),
        SampleConfig("s2", 3000, 10 * GB, 43_000, 430),
    ]
    jobs = jobs if jobs is not None else [JobGroup("s1", IMAGE, 3)]
    kwargs = dict(
        name="small",
        sites=sites,
        repository=RepositoryConfig("REPO", [IMAGE], 500.0),
        storage=StorageConfig("DATA", ["s1", "s2"]),
        user_storage_site="DATA",
        images=[ImageConfig(IMAGE, 1 * GB)],
        samples=samples,
        jobs=jobs,
        scheduler=SchedulerConfig(30.0),
        faults=faults or [],
        horizon_hours=10.0,
        sample_interval_s=60.0,
        seed=7,
    )
    kwargs.update(kw)
    return ScenarioConfig(**kwargs)


@pytest.fixture
def small():
    return small_scenario()


@pytest.fixture
def preset():
    return paper_scenario()


ACCEPTANCE_LINES: list = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
