"""Scenario files: a JSON key-value tree describing one experiment."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import ParseError, ValidationError
from .faults import FaultSpec

GB = 10**9
MBPS = 10**6
HOUR = 3600


@dataclass
class SiteConfig:
    id: str
    slots: int = 0
    uplink_mbps: float = 1000.0
    downlink_mbps: float = 1000.0
    flavor: str = "nimbus-like"
    preseeded_images: list = field(default_factory=list)
    credential: str = ""

    @property
    def uplink_id(self) -> str:
        return f"{self.id}_up"

    @property
    def downlink_id(self) -> str:
        return f"{self.id}_down"


@dataclass
class RepositoryConfig:
    site: str
    images: list
    throughput_mbps: float = 500.0


@dataclass
class StorageConfig:
    site: str
    samples: list
    # Client read-ahead settings; descriptive only, not simulated.
    xrootd: dict = field(default_factory=lambda: {"read_ahead_bytes": 10**6,
                                                  "cache_bytes": 10 * 10**6})


@dataclass
class CalibrationConfig:
    site: str
    size_bytes: int = 100 * 10**6
    demand_mbps: Optional[float] = None
    enabled: bool = False


@dataclass
class ImageConfig:
    id: str
    size_bytes: int = 16 * GB
    ram_mb: int = 1024
    software_tag: str = ""


@dataclass
class SampleConfig:
    id: str
    event_size_bytes: int
    total_size_bytes: int
    events_per_job: int
    cpu_events_per_s: float


@dataclass
class JobGroup:
    sample: str
    image: str
    count: int
    submit_at_s: float = 0.0
    output_fraction: float = 0.02
    prefix: Optional[str] = None

    def job_ids(self) -> list:
        prefix = self.prefix or self.sample
        return [f"{prefix}-{i:03d}" for i in range(self.count)]


@dataclass
class SchedulerConfig:
    tick_interval_s: float = 30.0
    placement: str = "round-robin"
    max_boots_per_tick: Optional[int] = None


@dataclass
class FaultConfig:
    kind: str
    site: Optional[str] = None
    params: dict = field(default_factory=dict)
    seed_stream: str = ""

    def to_spec(self) -> FaultSpec:
        return FaultSpec(self.kind, self.site, dict(self.params), self.seed_stream)


@dataclass
class ScenarioConfig:
    sites: list
    repository: RepositoryConfig
    storage: StorageConfig
    user_storage_site: str
    images: list
    samples: list
    jobs: list
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    faults: list = field(default_factory=list)
    calibration: Optional[CalibrationConfig] = None
    horizon_hours: float = 72.0
    sample_interval_s: float = 60.0
    boot_delay_s: float = 120.0
    teardown_delay_s: float = 30.0
    single_copy_cache: bool = False
    seed: int = 0
    name: str = ""

    # -- derived ----------------------------------------------------------------

    def site(self, site_id: str) -> SiteConfig:
        for s in self.sites:
            if s.id == site_id:
                return s
        raise KeyError(site_id)

    def link_ids(self) -> list:
        """Declared links in order: each site's uplink and downlink, then the repository cap."""
        ids = []
        for s in self.sites:
            ids += [s.uplink_id, s.downlink_id]
        ids.append(f"repo_{self.repository.site}")
        return ids

    @property
    def total_slots(self) -> int:
        return sum(s.slots for s in self.sites)

    @property
    def job_count(self) -> int:
        return sum(g.count for g in self.jobs)

    def sample_by_id(self, sample_id: str) -> SampleConfig:
        return next(s for s in self.samples if s.id == sample_id)

    # -- (de)serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "seed": self.seed,
            "horizon_hours": self.horizon_hours,
            "sample_interval_s": self.sample_interval_s,
            "boot_delay_s": self.boot_delay_s,
            "teardown_delay_s": self.teardown_delay_s,
            "single_copy_cache": self.single_copy_cache,
            "sites": [asdict(s) for s in self.sites],
            "repository": asdict(self.repository),
            "storage": asdict(self.storage),
            "user_storage": {"site": self.user_storage_site},
            "images": [asdict(i) for i in self.images],
            "samples": [asdict(s) for s in self.samples],
            "jobs": [asdict(j) for j in self.jobs],
            "scheduler": asdict(self.scheduler),
            "faults": [asdict(f) for f in self.faults],
        }
        if self.calibration is not None:
            d["calibration_db"] = asdict(self.calibration)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        problems: list = []
        cfg = _build(data, problems)
        if cfg is not None:
            problems += validate(cfg)
        if problems:
            raise ValidationError(problems)
        return cfg


def _section(data, key, problems, cls, path=None, required=True):
    path = path or key
    raw = data.get(key) if isinstance(data, dict) else None
    if raw is None:
        if required:
            problems.append(f"{path}: required")
        return None
    return _make(raw, cls, path, problems)


def _make(raw, cls, path, problems):
    if not isinstance(raw, dict):
        problems.append(f"{path}: expected an object")
        return None
    names = set(cls.__dataclass_fields__)
    for extra in sorted(set(raw) - names):
        problems.append(f"{path}.{extra}: unknown key")
    try:
        return cls(**{k: v for k, v in raw.items() if k in names})
    except TypeError as exc:
        problems.append(f"{path}: {exc}")
        return None


def _list(data, key, cls, problems):
    raw = data.get(key, [])
    if not isinstance(raw, list):
        problems.append(f"{key}: expected a list")
        return []
    out = []
    for i, item in enumerate(raw):
        obj = _make(item, cls, f"{key}[{i}]", problems)
        if obj is not None:
            out.append(obj)
    return out


_TOP_KEYS = {"name", "seed", "horizon_hours", "sample_interval_s", "boot_delay_s",
             "teardown_delay_s", "single_copy_cache", "sites", "repository", "storage",
             "user_storage", "images", "samples", "jobs", "scheduler", "faults",
             "calibration_db"}


def _build(data, problems) -> Optional[ScenarioConfig]:
    if not isinstance(data, dict):
        problems.append("<root>: expected an object")
        return None
    for extra in sorted(set(data) - _TOP_KEYS):
        problems.append(f"{extra}: unknown key")
    repository = _section(data, "repository", problems, RepositoryConfig)
    storage = _section(data, "storage", problems, StorageConfig)
    user = data.get("user_storage")
    if not isinstance(user, dict) or "site" not in user:
        problems.append("user_storage.site: required")
        user = {"site": None}
    scheduler = _section(data, "scheduler", problems, SchedulerConfig, required=False)
    calibration = _section(data, "calibration_db", problems, CalibrationConfig, required=False)
    if repository is None or storage is None:
        return None
    kwargs = {k: data[k] for k in ("name", "seed", "horizon_hours", "sample_interval_s",
                                   "boot_delay_s", "teardown_delay_s", "single_copy_cache")
              if k in data}
    return ScenarioConfig(
        sites=_list(data, "sites", SiteConfig, problems),
        repository=repository,
        storage=storage,
        user_storage_site=user["site"],
        images=_list(data, "images", ImageConfig, problems),
        samples=_list(data, "samples", SampleConfig, problems),
        jobs=_list(data, "jobs", JobGroup, problems),
        scheduler=scheduler or SchedulerConfig(),
        faults=_list(data, "faults", FaultConfig, problems),
        calibration=calibration,
        **kwargs,
    )


def _dupes(ids) -> list:
    seen, dup = set(), []
    for i in ids:
        if i in seen and i not in dup:
            dup.append(i)
        seen.add(i)
    return dup


def validate(cfg: ScenarioConfig) -> list:
    """Every referential or range violation, each tagged with its field path."""
    p: list = []
    site_ids = [s.id for s in cfg.sites]
    image_ids = [i.id for i in cfg.images]
    sample_ids = [s.id for s in cfg.samples]
    for name, ids in (("sites", site_ids), ("images", image_ids), ("samples", sample_ids)):
        for d in _dupes(ids):
            p.append(f"{name}: duplicate id {d!r}")
    if not cfg.sites:
        p.append("sites: at least one site required")

    for i, s in enumerate(cfg.sites):
        if not isinstance(s.slots, int) or s.slots < 0:
            p.append(f"sites[{i}].slots: must be a non-negative integer")
        for key in ("uplink_mbps", "downlink_mbps"):
            if not _positive(getattr(s, key)):
                p.append(f"sites[{i}].{key}: must be > 0")
        if s.flavor not in ("nimbus-like", "ec2-like"):
            p.append(f"sites[{i}].flavor: expected nimbus-like or ec2-like")
        for img in s.preseeded_images:
            if img not in image_ids:
                p.append(f"sites[{i}].preseeded_images: unknown image {img!r}")
    if cfg.total_slots <= 0 and cfg.sites:
        p.append("sites: total slot capacity must be > 0")

    r = cfg.repository
    if r.site not in site_ids:
        p.append(f"repository.site: unknown site {r.site!r}")
    if not _positive(r.throughput_mbps):
        p.append("repository.throughput_mbps: must be > 0")
    elif r.site in site_ids and r.throughput_mbps > cfg.site(r.site).uplink_mbps:
        p.append("repository.throughput_mbps: exceeds the site uplink")
    for img in r.images:
        if img not in image_ids:
            p.append(f"repository.images: unknown image {img!r}")

    if cfg.storage.site not in site_ids:
        p.append(f"storage.site: unknown site {cfg.storage.site!r}")
    for sm in cfg.storage.samples:
        if sm not in sample_ids:
            p.append(f"storage.samples: unknown sample {sm!r}")
    if cfg.user_storage_site not in site_ids:
        p.append(f"user_storage.site: unknown site {cfg.user_storage_site!r}")
    if cfg.calibration is not None and cfg.calibration.site not in site_ids:
        p.append(f"calibration_db.site: unknown site {cfg.calibration.site!r}")

    for i, im in enumerate(cfg.images):
        if not _positive(im.size_bytes) or not _positive(im.ram_mb):
            p.append(f"images[{i}]: size_bytes and ram_mb must be > 0")
    for i, s in enumerate(cfg.samples):
        for key in ("event_size_bytes", "cpu_events_per_s", "events_per_job"):
            if not _positive(getattr(s, key)):
                p.append(f"samples[{i}].{key}: must be > 0")
        if s.id not in cfg.storage.samples:
            p.append(f"samples[{i}]: sample {s.id!r} is not hosted by storage")

    all_ids = []
    for i, g in enumerate(cfg.jobs):
        label = f"jobs[{i}] ({g.prefix or g.sample})"
        if g.image not in image_ids:
            p.append(f"{label}.image: unknown image {g.image!r}")
        elif g.image not in r.images and not any(g.image in s.preseeded_images for s in cfg.sites):
            p.append(f"{label}.image: {g.image!r} is neither in the repository nor pre-seeded")
        if g.sample not in sample_ids:
            p.append(f"{label}.sample: unknown sample {g.sample!r}")
        if not isinstance(g.count, int) or g.count < 0:
            p.append(f"{label}.count: must be a non-negative integer")
        else:
            all_ids += g.job_ids()
        if g.submit_at_s < 0:
            p.append(f"{label}.submit_at_s: must be >= 0")
        if not 0 <= g.output_fraction <= 1:
            p.append(f"{label}.output_fraction: must be in [0, 1]")
    for d in _dupes(all_ids):
        p.append(f"jobs: duplicate job id {d!r}")

    try:
        from .scheduler import SchedulerPolicy
        SchedulerPolicy(**asdict(cfg.scheduler))
    except (ValueError, TypeError) as exc:
        p.append(f"scheduler: {exc}")

    for i, f in enumerate(cfg.faults):
        for problem in f.to_spec().validate():
            p.append(f"faults[{i}].{problem}")
        if f.site is not None and f.site not in site_ids:
            p.append(f"faults[{i}].site: unknown site {f.site!r}")

    if not _positive(cfg.sample_interval_s):
        p.append("sample_interval_s: must be > 0")
    if not _positive(cfg.horizon_hours):
        p.append("horizon_hours: must be > 0")
    last_submit = max((g.submit_at_s for g in cfg.jobs), default=0)
    if cfg.horizon_hours * HOUR <= last_submit:
        p.append("horizon_hours: must exceed the latest submit time")
    if cfg.boot_delay_s < 0 or cfg.teardown_delay_s < 0:
        p.append("boot_delay_s/teardown_delay_s: must be >= 0")
    return p


def _positive(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def loads_scenario(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from exc
    return ScenarioConfig.from_dict(data)


# -- the four-cloud experiment --------------------------------------------------

PAPER_IMAGE = "babar-sl55"


def paper_scenario() -> ScenarioConfig:
    """Four clouds, 110 slots, 255 analysis jobs over three samples."""
    sites = [
        SiteConfig("NRC", 30, 1000, 1000, "nimbus-like", credential="x509-proxy"),
        SiteConfig("EC2", 20, 1000, 1000, "ec2-like", [PAPER_IMAGE], credential="ec2-access-key"),
        SiteConfig("UVIC-A", 40, 1000, 1000, "nimbus-like", credential="x509-proxy"),
        SiteConfig("UVIC-B", 20, 1000, 1000, "nimbus-like", credential="x509-proxy"),
        SiteConfig("USER", 0, 1000, 1000, "nimbus-like"),
    ]
    samples = [
        SampleConfig("Tau1N-data", 4000, 1158 * GB, 4_752_000, 110),
        SampleConfig("Tau1N-MC", 4000, 615 * GB, 2_376_000, 55),
        SampleConfig("Tau11-MC", 3000, 1386 * GB, 18_576_000, 430),
    ]
    jobs = [
        JobGroup("Tau1N-data", PAPER_IMAGE, 77, 0.0),
        JobGroup("Tau1N-MC", PAPER_IMAGE, 64, 0.0),
        JobGroup("Tau11-MC", PAPER_IMAGE, 114, 0.0),
    ]
    faults = [
        FaultConfig("BootError", "NRC", {"probability": 0.2, "cause": "nimbus-boot-bug"},
                    "nrc-boot"),
        FaultConfig("PeriodicKill", "UVIC-B", {"period_s": 3 * HOUR, "first_at_s": 6 * HOUR},
                    "uvic-b-kill"),
        FaultConfig("CommBlackout", "EC2", {"window": [18 * HOUR, 18 * HOUR + 900]},
                    "ec2-blackout"),
        FaultConfig("MonitorGap", None, {"window": [17 * HOUR, 17 * HOUR + 1800]},
                    "monitor-gap"),
    ]
    return ScenarioConfig(
        name="distributed-cloud-babar",
        sites=sites,
        repository=RepositoryConfig("NRC", [PAPER_IMAGE], 500.0),
        storage=StorageConfig("UVIC-A", [s.id for s in samples]),
        user_storage_site="USER",
        images=[ImageConfig(PAPER_IMAGE, 16 * GB, 1024, "SL5.5 + BaBar analysis release")],
        samples=samples,
        jobs=jobs,
        scheduler=SchedulerConfig(30.0, "round-robin", None),
        faults=faults,
        calibration=CalibrationConfig("UVIC-A", 100 * 10**6, None, False),
        horizon_hours=72.0,
        sample_interval_s=60.0,
        seed=20101,
    )


def emit_paper_scenario(path) -> None:
    with open(path, "w") as fh:
        fh.write(paper_scenario().dumps())


def with_changes(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    out = copy.deepcopy(cfg)
    for k, v in changes.items():
        setattr(out, k, v)
    return out
