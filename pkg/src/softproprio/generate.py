"""Twin-dataset generation from a run config."""

from __future__ import annotations

import json
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import DatasetSection
from .dataset import DatasetManifest, build_manifest, episode_filename
from .nn import seed_rng
from .robot.episode import CRAWL_OBSTRUCTED, RANDOM_ACTION, calibrate_strong_force, generate_episode
from .robot.io import write_csv, write_npz
from .robot.physics import REAL, SIM, DomainConfig

TEST_OFFSET = 500
CRAWL_OFFSET = 100


class OutputExistsError(FileExistsError):
    pass


@dataclass(frozen=True)
class EpisodeJob:
    subdir: str
    domain: str
    kind: str
    seed: int
    duration_s: float
    cycles: int
    wall_x: float | None
    real_cfg: dict
    write_csv: bool


def episode_wall(ds: DatasetSection, seed: int) -> float:
    rng = seed_rng(seed + 31337)
    return float(ds.wall_x + rng.uniform(-ds.wall_jitter, ds.wall_jitter))


def plan_jobs(ds: DatasetSection) -> list[EpisodeJob]:
    """Every episode of the dataset; sim and real partners share a seed and schedule."""
    base = 10000 * ds.dataset_seed
    real_cfg = ds.real_domain().to_dict()
    jobs = []

    def add(subdir, kind, seed):
        wall = episode_wall(ds, seed) if kind == CRAWL_OBSTRUCTED else None
        for domain in (SIM, REAL):
            jobs.append(EpisodeJob(subdir, domain, kind, seed, ds.random_duration_s, ds.crawl_cycles,
                                   wall, real_cfg, ds.write_csv))

    for i in range(ds.n_random):
        add("episodes", RANDOM_ACTION, base + i)
    for i in range(ds.n_crawl):
        add("episodes", CRAWL_OBSTRUCTED, base + CRAWL_OFFSET + i)
    for i in range(ds.n_test):
        add("test", RANDOM_ACTION, base + TEST_OFFSET + i)
        add("test", CRAWL_OBSTRUCTED, base + TEST_OFFSET + CRAWL_OFFSET + i)
    return jobs


def run_job(job: EpisodeJob, root: str) -> str:
    cfg = DomainConfig.sim() if job.domain == SIM else DomainConfig.from_dict(job.real_cfg)
    f_strong = calibrate_strong_force(job.wall_x) if job.wall_x is not None else None
    ep = generate_episode(job.kind, cfg, job.seed, duration_s=job.duration_s, cycles=job.cycles,
                          wall_x=job.wall_x, f_strong=f_strong)
    stem = Path(root) / job.subdir / episode_filename(job.domain, job.kind, job.seed)
    write_npz(ep, stem.with_suffix(".npz"))
    if job.write_csv:
        write_csv(ep, stem.with_suffix(".csv"))
    return str(stem)


def generate_dataset(ds: DatasetSection, root: str | Path, *, force: bool = False,
                     workers: int = 1, config_hash: str = "") -> DatasetManifest:
    """Write every episode under ``root`` and its manifest.

    Refuses to touch a directory that already holds episodes unless ``force``.
    """
    root = Path(root)
    existing = [p for p in (root / "episodes", root / "test", root / "manifest.json") if p.exists()]
    if existing:
        if not force:
            raise OutputExistsError(f"{root} already holds dataset output; pass --force to regenerate")
        for p in existing:
            shutil.rmtree(p) if p.is_dir() else p.unlink()
    (root / "episodes").mkdir(parents=True, exist_ok=True)
    (root / "test").mkdir(parents=True, exist_ok=True)
    jobs = plan_jobs(ds)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            list(pool.map(run_job, jobs, [str(root)] * len(jobs)))
    else:
        for job in jobs:
            run_job(job, str(root))
    meta = {"config_hash": config_hash, "dataset": json.loads(ds.model_dump_json())}
    manifest = build_manifest(root, meta)
    manifest.save()
    return manifest
