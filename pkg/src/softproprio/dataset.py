"""Dataset assembly: manifest, normalization statistics, paired-domain batching.

Dataset directory layout::

    <root>/episodes/<domain>__<kind>__<seed>.npz   (+ matching .csv)
    <root>/test/<domain>__<kind>__<seed>.npz
    <root>/manifest.json

Within each ``episodes`` group the highest seed is the validation episode and the
rest are training episodes; everything under ``test`` is held out for reporting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .robot.episode import CRAWL_OBSTRUCTED, RANDOM_ACTION, SCHEDULE_KINDS, Episode
from .robot.io import read_npz
from .robot.physics import REAL, SIM

MANIFEST_FORMAT = "softproprio-manifest/1"
STATS_FORMAT = "softproprio-normstats/1"

REQUIRED_GROUPS = ((SIM, RANDOM_ACTION), (REAL, RANDOM_ACTION), (SIM, CRAWL_OBSTRUCTED))
TRAIN, VAL, TEST = "train", "val", "test"


class DatasetError(ValueError):
    pass


def episode_filename(domain: str, kind: str, seed: int) -> str:
    return f"{domain}__{kind}__{seed}"


def _parse_name(stem: str) -> tuple[str, str, int]:
    domain, kind, seed = stem.split("__")
    if domain not in (SIM, REAL) or kind not in SCHEDULE_KINDS:
        raise DatasetError(f"unrecognized episode file name {stem!r}")
    return domain, kind, int(seed)


@dataclass
class EpisodeRef:
    path: str  # relative to the dataset root, without extension
    domain: str
    kind: str
    seed: int
    split: str


@dataclass
class DatasetManifest:
    root: Path
    episodes: list[EpisodeRef]
    meta: dict = field(default_factory=dict)

    def select(self, domain: str | None = None, kind: str | None = None,
               split: str | None = None) -> list[EpisodeRef]:
        return [
            e for e in self.episodes
            if (domain is None or e.domain == domain)
            and (kind is None or e.kind == kind)
            and (split is None or e.split == split)
        ]

    def counts(self) -> dict[tuple[str, str], tuple[int, int]]:
        out = {}
        for domain, kind in sorted({(e.domain, e.kind) for e in self.episodes}):
            out[(domain, kind)] = (len(self.select(domain, kind, TRAIN)),
                                   len(self.select(domain, kind, VAL)))
        return out

    def load(self, ref: EpisodeRef) -> Episode:
        return _load_cached(str(self.root / (ref.path + ".npz")))

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": MANIFEST_FORMAT,
                "meta": self.meta,
                "episodes": [vars(e) for e in self.episodes],
            },
            indent=2,
            sort_keys=True,
        )

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else self.root / "manifest.json"
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load_file(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise DatasetError(f"no manifest at {path}; run `generate` first")
        d = json.loads(path.read_text())
        if d.get("format") != MANIFEST_FORMAT:
            raise DatasetError(f"{path}: unsupported manifest format")
        return cls(path.parent, [EpisodeRef(**e) for e in d["episodes"]], d.get("meta", {}))


@lru_cache(maxsize=64)
def _load_cached(path: str) -> Episode:
    return read_npz(path)


def build_manifest(root: str | Path, meta: dict | None = None) -> DatasetManifest:
    """Scan ``root`` and register every episode with its split.

    Raises :class:`DatasetError` when a required (domain, kind) group is missing,
    has fewer than two episodes, or repeats a seed.
    """
    root = Path(root)
    refs: list[EpisodeRef] = []
    groups: dict[tuple[str, str], list[int]] = {}
    for sub, split in (("episodes", None), ("test", TEST)):
        for f in sorted((root / sub).glob("*.npz")):
            domain, kind, seed = _parse_name(f.stem)
            if split is None:
                seeds = groups.setdefault((domain, kind), [])
                if seed in seeds:
                    raise DatasetError(f"duplicate seed {seed} in group ({domain}, {kind})")
                seeds.append(seed)
            refs.append(EpisodeRef(f"{sub}/{f.stem}", domain, kind, seed, split or TRAIN))
    missing = [g for g in REQUIRED_GROUPS if g not in groups]
    if missing:
        raise DatasetError("missing episode groups: " + ", ".join(f"({d}, {k})" for d, k in missing))
    for g, seeds in groups.items():
        if len(seeds) < 2:
            raise DatasetError(f"group {g} needs at least one training and one validation episode")
        val_seed = max(seeds)
        for r in refs:
            if (r.domain, r.kind) == g and r.split == TRAIN and r.seed == val_seed:
                r.split = VAL
    refs.sort(key=lambda r: (r.split, r.domain, r.kind, r.seed))
    return DatasetManifest(root, refs, dict(meta or {}))


@dataclass
class NormStats:
    """Per-channel z-score statistics fitted on training data only."""

    sensor_mean: dict[str, np.ndarray]
    sensor_std: dict[str, np.ndarray]
    pressure_mean: np.ndarray
    pressure_std: np.ndarray
    nodes_mean: np.ndarray  # (369,)
    nodes_std: np.ndarray

    def sensor(self, x, domain):
        return (x - self.sensor_mean[domain]) / self.sensor_std[domain]

    def sensor_inv(self, z, domain):
        return z * self.sensor_std[domain] + self.sensor_mean[domain]

    def pressure(self, p):
        return (p - self.pressure_mean) / self.pressure_std

    def pressure_inv(self, z):
        return z * self.pressure_std + self.pressure_mean

    def nodes(self, nodes):
        """(..., 123, 3) mm -> (..., 369) normalized."""
        flat = nodes.reshape(nodes.shape[:-2] + (-1,))
        return (flat - self.nodes_mean) / self.nodes_std

    def nodes_inv(self, z):
        return (z * self.nodes_std + self.nodes_mean).reshape(z.shape[:-1] + (-1, 3))

    def to_dict(self) -> dict:
        return {
            "format": STATS_FORMAT,
            "sensor_mean": {k: v.tolist() for k, v in self.sensor_mean.items()},
            "sensor_std": {k: v.tolist() for k, v in self.sensor_std.items()},
            "pressure_mean": self.pressure_mean.tolist(),
            "pressure_std": self.pressure_std.tolist(),
            "nodes_mean": self.nodes_mean.tolist(),
            "nodes_std": self.nodes_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        if d.get("format") != STATS_FORMAT:
            raise DatasetError("unsupported normalization-statistics format")
        arr = np.asarray
        return cls(
            {k: arr(v) for k, v in d["sensor_mean"].items()},
            {k: arr(v) for k, v in d["sensor_std"].items()},
            arr(d["pressure_mean"]), arr(d["pressure_std"]),
            arr(d["nodes_mean"]), arr(d["nodes_std"]),
        )


def _moments(chunks: list[np.ndarray], what: str) -> tuple[np.ndarray, np.ndarray]:
    data = np.concatenate(chunks, axis=0)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    bad = np.flatnonzero(~(std > 1e-12))
    if bad.size:
        raise DatasetError(f"zero-variance {what} channel(s): {bad.tolist()[:10]}")
    return mean, std


def fit_normalizer(manifest: DatasetManifest) -> NormStats:
    """Fit statistics on training episodes of the groups models train on.

    Sensors get per-domain statistics; pressure and node statistics come from the
    simulated training episodes (real pressure traces are identical copies).
    """
    sim_train = [manifest.load(r) for r in manifest.select(SIM, split=TRAIN)]
    real_train = [manifest.load(r) for r in manifest.select(REAL, RANDOM_ACTION, TRAIN)]
    if not sim_train or not real_train:
        raise DatasetError("normalization needs training episodes in both domains")
    s_mean, s_std = _moments([e.sensor for e in sim_train], "sim sensor")
    r_mean, r_std = _moments([e.sensor for e in real_train], "real sensor")
    p_mean, p_std = _moments([e.pressure for e in sim_train], "pressure")
    n_mean, n_std = _moments([e.nodes.reshape(len(e), -1) for e in sim_train], "node coordinate")
    return NormStats({SIM: s_mean, REAL: r_mean}, {SIM: s_std, REAL: r_std},
                     p_mean, p_std, n_mean, n_std)


class PairedSequence(NamedTuple):
    x_sim: np.ndarray
    x_real: np.ndarray
    pressure: np.ndarray
    seed: int
    kind: str


def pair_episodes(sim: Episode, real: Episode) -> PairedSequence:
    if len(sim) != len(real) or not np.array_equal(sim.pressure, real.pressure):
        raise DatasetError(
            f"episodes sim seed {sim.seed} and real seed {real.seed} do not share a pressure schedule"
        )
    return PairedSequence(sim.sensor, real.sensor, sim.pressure, sim.seed, sim.schedule_kind)


def paired_batches(manifest: DatasetManifest, split: str, kind: str = RANDOM_ACTION,
                   stats: NormStats | None = None) -> Iterator[PairedSequence]:
    """Yield each (sim, real) pair of ``split`` once, matched by seed.

    With ``stats`` the sensors and pressure come back normalized.
    """
    real_by_seed = {r.seed: r for r in manifest.select(REAL, kind, split)}
    for ref in manifest.select(SIM, kind, split):
        if ref.seed not in real_by_seed:
            raise DatasetError(f"sim episode seed {ref.seed} has no real partner")
        pair = pair_episodes(manifest.load(ref), manifest.load(real_by_seed[ref.seed]))
        if stats is not None:
            pair = pair._replace(
                x_sim=stats.sensor(pair.x_sim, SIM),
                x_real=stats.sensor(pair.x_real, REAL),
                pressure=stats.pressure(pair.pressure),
            )
        yield pair


def chunk(arrays: list[np.ndarray], length: int | None) -> np.ndarray:
    """Cut each ``(T, D)`` array into non-overlapping ``length`` windows and stack them.

    ``length=None`` keeps whole sequences (they must then share one length).
    """
    if length is None:
        return np.stack(arrays)
    out = []
    for a in arrays:
        n = a.shape[0] // length
        if n:
            out.append(a[: n * length].reshape(n, length, *a.shape[1:]))
    return np.concatenate(out, axis=0)
