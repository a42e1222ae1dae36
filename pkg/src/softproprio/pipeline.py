"""Command implementations: train, evaluate, detect. Generation lives in ``generate``.

Run directory layout (``--out``)::

    data/                       dataset + manifest.json
    checkpoints/<variant>/seed<k>.npz, seed<k>_curve.csv
    report/results.json         raw per-seed evaluation results
    report/tables/*.csv, report/figures/*.svg, report/summary.json
    report/detection/*.csv      per-episode detection logs
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptation.bundle import TrainedBundle, encode
from .adaptation.models import AE_VARIANTS, REAL2SIM, SIM_ONLY, AutoEncoderModel, build_nets
from .adaptation.trainer import (
    CURVE_COLUMNS,
    TrainingDiverged,
    TrainResult,
    prepare_training_data,
    train_alternating,
    train_real2sim_lstm,
    train_sim_only_lstm,
)
from .config import ConfigError, RunConfig
from .dataset import TEST, VAL, DatasetError, DatasetManifest, fit_normalizer
from .detection import (
    REQUIRED_REAL,
    REQUIRED_SIM,
    DetectorCalibration,
    calibrate_threshold,
    detect,
    recon_error_trace,
    write_detection_log,
)
from .metrics import confusion, f1_accuracy, latent_projection_2d
from .perception import estimate_shape, shape_errors
from .robot.episode import CRAWL_OBSTRUCTED, RANDOM_ACTION, Episode
from .robot.io import read_episode
from .robot.physics import REAL, SIM

log = logging.getLogger("softproprio")

RESULTS_FORMAT = "softproprio-results/1"
DOMAINS = (SIM, REAL)
REQUIRED = {SIM: REQUIRED_SIM, REAL: REQUIRED_REAL}
DETECTOR_VARIANTS = AE_VARIANTS + (REAL2SIM,)
FIGURE_POINTS = 400


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunPaths:
    out: Path

    @property
    def data(self) -> Path:
        return self.out / "data"

    @property
    def manifest(self) -> Path:
        return self.data / "manifest.json"

    @property
    def checkpoints(self) -> Path:
        return self.out / "checkpoints"

    @property
    def report(self) -> Path:
        return self.out / "report"

    def ckpt(self, variant: str, seed: int) -> Path:
        return self.checkpoints / variant / f"seed{seed}.npz"

    def curve(self, variant: str, seed: int) -> Path:
        return self.checkpoints / variant / f"seed{seed}_curve.csv"


def load_manifest(paths: RunPaths) -> DatasetManifest:
    return DatasetManifest.load_file(paths.manifest)


def write_curve(path: Path, curve: list[dict]) -> None:
    cols = list(CURVE_COLUMNS) if curve and "recon_s" in curve[0] else ["epoch", "val_total"]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in curve:
            w.writerow([row["epoch"]] + [f"{row[c]:.9g}" for c in cols[1:]])


def _info(r: TrainResult, cfg: RunConfig) -> dict:
    return {"epochs": r.epochs, "best_epoch": r.best_epoch, "counters": r.counters,
            "stopped": r.stopped, "config_hash": cfg.config_hash()}


class _Trainer:
    """Shared state for training several seeds of one variant."""

    def __init__(self, cfg: RunConfig, paths: RunPaths):
        self.cfg, self.paths = cfg, paths
        self.manifest = load_manifest(paths)
        self.stats = fit_normalizer(self.manifest)
        self.schedule = cfg.training.schedule.build()
        self.model_cfg = cfg.training.model()
        self.data = prepare_training_data(self.manifest, self.stats, self.schedule.chunk_len)

    def _bundle(self, variant, seed, nets, r: TrainResult) -> TrainedBundle:
        return TrainedBundle(variant, seed, nets, self.stats, self.schedule, self.model_cfg, _info(r, self.cfg))

    def _save(self, bundle: TrainedBundle, curve, resume=None):
        path = self.paths.ckpt(bundle.variant, bundle.seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        bundle.save(path, resume=resume)
        write_curve(self.paths.curve(bundle.variant, bundle.seed), curve)

    def _existing(self, variant, seed):
        path = self.paths.ckpt(variant, seed)
        if not path.exists():
            return None, None
        bundle, resume = TrainedBundle.load(path)
        if bundle.model_cfg != self.model_cfg or bundle.variant != variant:
            raise ConfigError(f"{path} was trained with different model settings; rerun with --force")
        return bundle, resume

    def train(self, variant: str, seed: int, force: bool) -> TrainedBundle:
        if variant in AE_VARIANTS:
            return self._train_ae(variant, seed, force)
        if not force:
            bundle, _ = self._existing(variant, seed)
            if bundle is not None:
                log.info("%s seed %d: checkpoint present, skipping", variant, seed)
                return bundle
        if variant == SIM_ONLY:
            nets = build_nets(SIM_ONLY, self.model_cfg, seed)
            r = self._guard(variant, seed, lambda: train_sim_only_lstm(nets["S"], self.data, self.schedule, seed),
                            lambda res: {"S": res.nets["net"]})
            bundle = self._bundle(variant, seed, {"S": r.nets["net"]}, r)
        elif variant == REAL2SIM:
            sim_only = self.train(SIM_ONLY, seed, False)
            nets = build_nets(REAL2SIM, self.model_cfg, seed)
            r = self._guard(variant, seed, lambda: train_real2sim_lstm(nets["R"], self.data, self.schedule, seed),
                            lambda res: {"R": res.nets["net"], "S": sim_only.nets["S"]})
            bundle = self._bundle(variant, seed, {"R": r.nets["net"], "S": sim_only.nets["S"]}, r)
        else:
            raise ConfigError(f"unknown variant {variant!r}")
        self._save(bundle, r.curve)
        return bundle

    def _guard(self, variant, seed, fn, to_nets):
        try:
            return fn()
        except TrainingDiverged as exc:
            good = exc.last_good
            self._save(self._bundle(variant, seed, to_nets(good), good), good.curve)
            raise

    def _train_ae(self, variant: str, seed: int, force: bool) -> TrainedBundle:
        resume = None
        nets = build_nets(variant, self.model_cfg, seed)
        if not force:
            _, resume = self._existing(variant, seed)
            if resume is not None:
                nets = resume["current_nets"]
                log.info("%s seed %d: resuming after epoch %d", variant, seed, resume["epoch"])
        model = AutoEncoderModel.for_variant(variant, nets)
        try:
            r = train_alternating(model, self.data, self.schedule, seed, resume=resume)
        except TrainingDiverged as exc:
            good = exc.last_good
            self._save(self._bundle(variant, seed, good.nets, good), good.curve)
            raise
        bundle = self._bundle(variant, seed, r.nets, r)
        self._save(bundle, r.curve, r.resume)
        return bundle


def train_variant(cfg: RunConfig, paths: RunPaths, variant: str, seeds: list[int] | None = None,
                  force: bool = False) -> list[TrainedBundle]:
    trainer = _Trainer(cfg, paths)
    out = []
    for seed in seeds if seeds is not None else cfg.training.seeds:
        b = trainer.train(variant, seed, force)
        log.info("%s seed %d: %s after %d epochs (best %d)", variant, seed, b.info.get("stopped"),
                 b.info.get("epochs", 0), b.info.get("best_epoch", 0))
        out.append(b)
    return out


# ---------------------------------------------------------------- evaluation


def _concat(eps: list[Episode], attr: str) -> np.ndarray:
    return np.concatenate([getattr(e, attr) for e in eps])


def _episodes(manifest, domain, kind, split):
    return [manifest.load(r) for r in manifest.select(domain, kind, split)]


def _shape_truth(manifest, domain, kind, eps: list[Episode]) -> np.ndarray:
    """Node truth: the episode's own nodes in sim, the paired sim twin's nodes in real."""
    if domain == SIM:
        return _concat(eps, "nodes")
    twins = {e.seed: e for e in _episodes(manifest, SIM, kind, TEST)}
    missing = [e.seed for e in eps if e.seed not in twins]
    if missing:
        raise DatasetError(f"real test episodes {missing} have no sim twin")
    return np.concatenate([twins[e.seed].nodes for e in eps])


def _thin(a: np.ndarray, n: int = FIGURE_POINTS) -> np.ndarray:
    return a[:: max(1, int(np.ceil(len(a) / n)))]


def _r(v) -> float:
    return float(f"{float(v):.10g}")


def evaluate_seed(out: str, variant: str, seed: int, tasks: tuple[str, ...], with_figures: bool) -> dict | None:
    """All per-model measurements; ``None`` when the checkpoint is missing."""
    paths = RunPaths(Path(out))
    path = paths.ckpt(variant, seed)
    if not path.exists():
        return None
    bundle, _ = TrainedBundle.load(path)
    manifest = load_manifest(paths)
    res: dict = {"shape": [], "traces": {}, "figures": {}}
    for domain in DOMAINS:
        for kind in tasks:
            eps = _episodes(manifest, domain, kind, TEST)
            if not eps:
                continue
            x, p = _concat(eps, "sensor"), _concat(eps, "pressure")
            est = estimate_shape(bundle, x, p, domain)
            truth = _shape_truth(manifest, domain, kind, eps)
            rep = shape_errors(est, truth, _concat(eps, "markers"))
            res["shape"].append({"variant": variant, "seed": seed, "domain": domain, "task": kind,
                                 "mae_norm": _r(rep.mae_nodes), "mae_mm": _r(rep.mae_nodes_mm),
                                 "marker_mm": _r(rep.marker_height_mae_mm)})
            if with_figures and domain == REAL and kind == RANDOM_ACTION:
                tn = bundle.stats.nodes(truth).reshape(est.nodes_hat.shape)
                per_frame = np.abs(est.nodes_hat - tn).mean(axis=(1, 2))
                res["figures"]["shape_trace"] = {"t": _concat(eps, "t").tolist(),
                                                 "mae": [_r(v) for v in per_frame]}
    if variant in DETECTOR_VARIANTS:
        for domain in DOMAINS:
            val = {kind: np.concatenate([recon_error_trace(bundle, e.sensor, e.pressure, domain).e
                                         for e in _episodes(manifest, domain, kind, VAL)]).tolist()
                   for kind in (RANDOM_ACTION, CRAWL_OBSTRUCTED)}
            test = [{"t": e.t.tolist(), "e": recon_error_trace(bundle, e.sensor, e.pressure, domain).e.tolist(),
                     "truth": e.collided.astype(int).tolist()}
                    for e in _episodes(manifest, domain, CRAWL_OBSTRUCTED, TEST)]
            res["traces"][domain] = {"val": val, "test": test}
    if variant in AE_VARIANTS:
        xs = _episodes(manifest, SIM, RANDOM_ACTION, TEST)
        xr = {e.seed: e for e in _episodes(manifest, REAL, RANDOM_ACTION, TEST)}
        xs_s = np.concatenate([e.sensor for e in xs])
        xr_s = np.concatenate([xr[e.seed].sensor for e in xs])
        init = TrainedBundle.initialized(variant, seed, bundle.stats, bundle.schedule, bundle.model_cfg)

        def diff(b):
            return _r(np.mean(np.linalg.norm(encode(b, xs_s, SIM).z - encode(b, xr_s, REAL).z, axis=-1)))

        zs, zr = encode(bundle, xs_s, SIM).z, encode(bundle, xr_s, REAL).z
        lat = latent_projection_2d([zs, zr])
        raw = latent_projection_2d([xs_s, xr_s])
        res["alignment"] = {"variant": variant, "seed": seed, "diff_init": diff(init), "diff_trained": diff(bundle),
                            "overlap_latent": _r(lat.overlap), "overlap_raw": _r(raw.overlap)}
        if with_figures:
            res["figures"]["latent"] = {
                "latent_sim": np.round(_thin(lat.coords[0]), 6).tolist(),
                "latent_real": np.round(_thin(lat.coords[1]), 6).tolist(),
                "raw_sim": np.round(_thin(raw.coords[0]), 6).tolist(),
                "raw_real": np.round(_thin(raw.coords[1]), 6).tolist(),
            }
    if with_figures:
        curve_path = paths.curve(variant, seed)
        if curve_path.exists():
            with open(curve_path) as fh:
                rows = list(csv.DictReader(fh))
            res["figures"]["curve"] = {k: [_r(row[k]) for row in rows] for k in rows[0]} if rows else {}
    return res


def _calibrate(per_seed: dict[int, dict], domain: str) -> DetectorCalibration | None:
    seeds = [s for s, r in per_seed.items() if r and domain in r["traces"]]
    if not seeds:
        return None
    traces = {kind: [np.asarray(per_seed[s]["traces"][domain]["val"][kind]) for s in seeds]
              for kind in (RANDOM_ACTION, CRAWL_OBSTRUCTED)}
    return calibrate_threshold(traces, REQUIRED[domain])


def evaluate(cfg: RunConfig, paths: RunPaths) -> dict:
    """Measure every (variant, seed) checkpoint and collect the raw results."""
    manifest = load_manifest(paths)
    if not manifest.select(split=TEST):
        raise DatasetError("dataset has no test episodes")
    seeds = list(cfg.training.seeds)
    variants = list(cfg.training.variants)
    tasks = tuple(cfg.evaluation.tasks)
    jobs = [(str(paths.out), v, s, tasks, s == seeds[0]) for v in variants for s in seeds]
    try:
        workers = min(cfg.evaluation.pool_size(), len(jobs))
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                outs = list(pool.map(evaluate_seed, *zip(*jobs)))
        else:
            outs = [evaluate_seed(*j) for j in jobs]
    except (DatasetError, ConfigError):
        raise
    except Exception as exc:  # noqa: BLE001 - surfaced as an evaluation failure
        raise EvaluationError(f"evaluation failed: {exc}") from exc

    results: dict = {"format": RESULTS_FORMAT, "config_hash": cfg.config_hash(), "seeds": seeds,
                     "variants": variants, "tasks": list(tasks), "domains": list(DOMAINS),
                     "shape": [], "detection": [], "alignment": [], "figures": {}}
    by_variant: dict[str, dict[int, dict]] = {}
    for (_, v, s, _, _), r in zip(jobs, outs):
        by_variant.setdefault(v, {})[s] = r
        if r is None:
            log.warning("%s seed %d: no checkpoint, reported as n/a", v, s)
            continue
        results["shape"] += r["shape"]
        if "alignment" in r:
            results["alignment"].append(r["alignment"])
        if r["figures"]:
            results["figures"][v] = r["figures"]
    for v in variants:
        if v not in DETECTOR_VARIANTS:
            continue
        per_seed = by_variant[v]
        for domain in DOMAINS:
            calib = _calibrate(per_seed, domain)
            if calib is None:
                continue
            for s, r in per_seed.items():
                if not r:
                    continue
                total = None
                for k, ep in enumerate(r["traces"][domain]["test"]):
                    pred = detect(np.asarray(ep["e"]), calib)
                    truth = np.asarray(ep["truth"], dtype=bool)[: len(pred)]
                    c = confusion(truth, pred)
                    total = c if total is None else total + c
                    if s == seeds[0] and k == 0:
                        fig = results["figures"].setdefault(v, {}).setdefault("detection", {})
                        fig[domain] = {"t": ep["t"][: len(pred)], "e": [_r(x) for x in ep["e"][: len(pred)]],
                                       "truth": ep["truth"][: len(pred)], "pred": pred.astype(int).tolist(),
                                       "threshold": _r(calib.threshold)}
                if total is None:
                    continue
                results["detection"].append({"variant": v, "domain": domain, "seed": s,
                                             "required": calib.exceed_count_required,
                                             "threshold": _r(calib.threshold), "counts": total.to_dict()})
    return results


# ---------------------------------------------------------------- single-episode detection


def detect_episode(cfg: RunConfig, paths: RunPaths, episode_path: str | Path, variant: str = "dual-ae",
                   seed: int | None = None) -> dict:
    """Detection log for one episode file with a model calibrated on the validation episodes."""
    if variant not in DETECTOR_VARIANTS:
        raise ConfigError(f"{variant} has no detector; choose one of {', '.join(DETECTOR_VARIANTS)}")
    episode_path = Path(episode_path)
    if not episode_path.exists():
        raise DatasetError(f"episode file {episode_path} not found")
    ep = read_episode(episode_path)
    domain = ep.domain.domain
    seeds = list(cfg.training.seeds)
    seed = seeds[0] if seed is None else seed
    per_seed = {}
    for s in seeds:
        if paths.ckpt(variant, s).exists():
            per_seed[s] = _val_traces(paths, variant, s, domain)
    if seed not in per_seed:
        raise DatasetError(f"no checkpoint for {variant} seed {seed}; run `train {variant}` first")
    calib = _calibrate(per_seed, domain)
    bundle, _ = TrainedBundle.load(paths.ckpt(variant, seed))
    trace = recon_error_trace(bundle, ep.sensor, ep.pressure, domain)
    pred = detect(trace, calib)
    truth = ep.collided[: len(pred)]
    out_dir = paths.report / "detection"
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"{episode_path.stem}__{variant}__seed{seed}.csv"
    write_detection_log(log_path, ep.t, trace, calib, truth)
    scores = f1_accuracy(confusion(truth, pred))
    return {"log": str(log_path), "domain": domain, "threshold": calib.threshold,
            "required": calib.exceed_count_required, "positive_segments": int(pred[::5].sum()),
            "segments": len(pred) // 5, "scores": scores._asdict()}


def _val_traces(paths: RunPaths, variant: str, seed: int, domain: str) -> dict:
    bundle, _ = TrainedBundle.load(paths.ckpt(variant, seed))
    manifest = load_manifest(paths)
    val = {kind: np.concatenate([recon_error_trace(bundle, e.sensor, e.pressure, domain).e
                                 for e in _episodes(manifest, domain, kind, VAL)])
           for kind in (RANDOM_ACTION, CRAWL_OBSTRUCTED)}
    return {"traces": {domain: {"val": val}}}
