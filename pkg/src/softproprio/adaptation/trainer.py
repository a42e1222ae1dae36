"""Alternating domain-adaptation / task trainer and the supervised baseline trainers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..dataset import TRAIN, VAL, DatasetManifest, NormStats, chunk, paired_batches
from ..nn import Adam, Network, NonFiniteGradientError, OptimConfig, l2_loss, seed_rng
from ..robot.episode import CRAWL_OBSTRUCTED, CRAWL_UNOBSTRUCTED, RANDOM_ACTION
from ..robot.physics import SIM
from .losses import loss_da, loss_kine
from .models import AutoEncoderModel

CURVE_COLUMNS = ("epoch", "recon_s", "recon_r", "diff", "kine", "val_total")
UNOBSTRUCTED_KINDS = (RANDOM_ACTION, CRAWL_UNOBSTRUCTED)


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss or gradient; carries the last good snapshot."""

    def __init__(self, msg: str, last_good: "TrainResult"):
        super().__init__(msg)
        self.last_good = last_good


@dataclass(frozen=True)
class TrainSchedule:
    da_steps_per_cycle: int = 5
    task_steps_per_cycle: int = 1
    lr_da: float = 4e-4
    lr_task: float = 1e-3
    weight_decay: float = 1e-6
    patience_epochs: int = 100
    max_epochs: int = 1000
    chunk_len: int = 100
    batch_size: int = 16

    def __post_init__(self):
        if self.da_steps_per_cycle != 5 * self.task_steps_per_cycle or self.task_steps_per_cycle < 1:
            raise ValueError("DA and task updates alternate in a fixed 5:1 ratio")
        for name in ("patience_epochs", "max_epochs", "chunk_len", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        OptimConfig(self.lr_da, weight_decay=self.weight_decay)
        OptimConfig(self.lr_task, weight_decay=self.weight_decay)

    def da_optim(self) -> OptimConfig:
        return OptimConfig(learning_rate=self.lr_da, weight_decay=self.weight_decay)

    def task_optim(self) -> OptimConfig:
        return OptimConfig(learning_rate=self.lr_task, weight_decay=self.weight_decay)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ChunkSet:
    """Equal-length windows stacked along axis 0 plus a lineage tag per window."""

    arrays: dict[str, np.ndarray]
    lineage: list[tuple[str, str, int]]  # (domain, kind, seed)

    def __len__(self) -> int:
        return len(self.lineage)

    def take(self, idx) -> dict[str, np.ndarray]:
        return {k: v[idx] for k, v in self.arrays.items()}


def _stack(parts: list[tuple[dict[str, np.ndarray], tuple]], length: int) -> ChunkSet:
    arrays: dict[str, list] = {}
    lineage = []
    for a, tag in parts:
        n = None
        for k, v in a.items():
            c = chunk([v], length)
            arrays.setdefault(k, []).append(c)
            n = len(c)
        lineage += [tag] * n
    return ChunkSet({k: np.concatenate(v) for k, v in arrays.items()}, lineage)


@dataclass
class TrainingData:
    da_train: ChunkSet
    da_val: ChunkSet
    task_train: ChunkSet
    task_val: ChunkSet


def prepare_training_data(manifest: DatasetManifest, stats: NormStats, chunk_len: int) -> TrainingData:
    """Normalized, chunked training and validation sets.

    DA sets hold (sim, real) pairs of unobstructed random-action episodes; task sets
    hold simulated random-action and obstructed-crawl episodes with node targets.
    """

    def da(split):
        parts = [({"xs": p.x_sim, "xr": p.x_real, "p": p.pressure}, (SIM, p.kind, p.seed))
                 for p in paired_batches(manifest, split, RANDOM_ACTION, stats)]
        return _stack(parts, chunk_len)

    def task(split):
        parts = []
        for kind in (RANDOM_ACTION, CRAWL_OBSTRUCTED):
            for ref in manifest.select(SIM, kind, split):
                ep = manifest.load(ref)
                parts.append(({"xs": stats.sensor(ep.sensor, SIM), "p": stats.pressure(ep.pressure),
                               "k": stats.nodes(ep.nodes)}, (SIM, kind, ep.seed)))
        return _stack(parts, chunk_len)

    return TrainingData(da(TRAIN), da(VAL), task(TRAIN), task(VAL))


class _BatchStream:
    """Endless shuffled minibatches; reshuffles after each full pass."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        self.n, self.batch, self.rng = n, min(batch, n), rng
        self.order = np.empty(0, dtype=int)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos + self.batch > len(self.order):
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = np.sort(self.order[self.pos:self.pos + self.batch])
        self.pos += self.batch
        return idx

    def state(self) -> dict:
        return {"order": self.order.tolist(), "pos": self.pos}

    def load_state(self, d: dict) -> None:
        self.order = np.asarray(d["order"], dtype=int)
        self.pos = int(d["pos"])


@dataclass
class TrainResult:
    nets: dict[str, Network]  # best-validation snapshot
    curve: list[dict]
    best_epoch: int
    epochs: int
    counters: dict[str, int] = field(default_factory=dict)
    stopped: str = ""
    resume: dict = field(default_factory=dict)  # current (not best) state for continuing


def snapshot(nets: dict[str, Network]) -> dict[str, Network]:
    return {k: n.copy() for k, n in nets.items()}


def _finite(*vals) -> bool:
    return all(math.isfinite(v) for v in vals)


class _EarlyStop:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad = 0

    def update(self, val: float, epoch: int) -> bool:
        """Record a validation value; True when it is a new best."""
        if val < self.best:
            self.best, self.best_epoch, self.bad = val, epoch, 0
            return True
        self.bad += 1
        return False

    @property
    def exhausted(self) -> bool:
        return self.bad >= self.patience


def evaluate_da(model: AutoEncoderModel, s: ChunkSet):
    a = s.arrays
    return loss_da(model, a["xs"], a["xr"], a["p"])


def evaluate_kine(model: AutoEncoderModel, s: ChunkSet) -> float:
    a = s.arrays
    return loss_kine(model, a["xs"], a["p"], a["k"])


def train_alternating(model: AutoEncoderModel, data: TrainingData, schedule: TrainSchedule,
                      seed: int, observer: Callable[[dict], None] | None = None,
                      resume: dict | None = None) -> TrainResult:
    """Alternate ``da_steps_per_cycle`` DA updates with ``task_steps_per_cycle`` task updates.

    DA updates move every encoder/decoder; task updates move only the sim encoder
    and the kinematic net. One epoch is one pass over the DA training windows
    (rounded up to whole cycles). Validation after every epoch; training stops
    after ``patience_epochs`` epochs without improvement or at ``max_epochs``. The
    returned nets are the best-validation snapshot.

    ``observer`` receives one event dict per update with the phase, the updated
    network keys and the lineage tags of the batch.
    """
    for tag in data.da_train.lineage:
        if tag[1] not in UNOBSTRUCTED_KINDS:
            raise ValueError(f"DA phase data must be unobstructed, got {tag}")
    nets = model.nets
    opt_da = Adam({k: nets[k] for k in model.da_keys()}, schedule.da_optim())
    opt_task = Adam({k: nets[k] for k in model.task_keys()}, schedule.task_optim())
    rng = seed_rng(seed + 104729)
    da_stream = _BatchStream(len(data.da_train), schedule.batch_size, rng)
    task_stream = _BatchStream(len(data.task_train), schedule.batch_size, rng)
    steps_per_pass = math.ceil(len(data.da_train) / da_stream.batch)
    cycles_per_epoch = math.ceil(steps_per_pass / schedule.da_steps_per_cycle)

    stop = _EarlyStop(schedule.patience_epochs)
    counters = {"da": 0, "task": 0, "cycles": 0}
    curve: list[dict] = []
    epoch0 = 0
    best = snapshot(nets)
    if resume:
        epoch0 = resume["epoch"]
        counters = dict(resume["counters"])
        curve = list(resume["curve"])
        stop.best, stop.best_epoch, stop.bad = resume["best_val"], resume["best_epoch"], resume["bad"]
        opt_da.load_state_arrays("da", resume["arrays"])
        opt_task.load_state_arrays("task", resume["arrays"])
        rng.bit_generator.state = resume["rng"]
        da_stream.load_state(resume["da_stream"])
        task_stream.load_state(resume["task_stream"])
        best = resume["best_nets"]

    def result(epochs, why):
        return TrainResult(snapshot(best), curve, stop.best_epoch, epochs, dict(counters), why,
                           resume=_resume_state(epochs, why))

    def _resume_state(epochs, why):
        arrays = {**opt_da.state_arrays("da"), **opt_task.state_arrays("task")}
        return {"epoch": epochs, "counters": dict(counters), "curve": list(curve), "stopped": why,
                "best_val": stop.best, "best_epoch": stop.best_epoch, "bad": stop.bad,
                "arrays": arrays, "rng": rng.bit_generator.state,
                "da_stream": da_stream.state(), "task_stream": task_stream.state(),
                "best_nets": snapshot(best), "current_nets": snapshot(nets)}

    if resume and (stop.exhausted or epoch0 >= schedule.max_epochs):
        return result(epoch0, resume.get("stopped", "patience" if stop.exhausted else "max_epochs"))
    epoch = epoch0
    for epoch in range(epoch0 + 1, schedule.max_epochs + 1):
        for _ in range(cycles_per_epoch):
            for _ in range(schedule.da_steps_per_cycle):
                idx = da_stream.next()
                b = data.da_train.take(idx)
                lo = loss_da(model, b["xs"], b["xr"], b["p"], backward=True)
                if not _finite(lo.total):
                    _zero(nets)
                    raise TrainingDiverged(f"non-finite DA loss at epoch {epoch}", result(epoch - 1, "diverged"))
                try:
                    opt_da.step()
                except NonFiniteGradientError as exc:
                    _zero(nets)
                    raise TrainingDiverged(str(exc), result(epoch - 1, "diverged")) from exc
                counters["da"] += 1
                if observer:
                    observer({"phase": "da", "updated": tuple(opt_da.nets), "epoch": epoch,
                              "lineage": [data.da_train.lineage[i] for i in idx]})
            for _ in range(schedule.task_steps_per_cycle):
                idx = task_stream.next()
                b = data.task_train.take(idx)
                lk = loss_kine(model, b["xs"], b["p"], b["k"], backward=True)
                if not _finite(lk):
                    _zero(nets)
                    raise TrainingDiverged(f"non-finite task loss at epoch {epoch}", result(epoch - 1, "diverged"))
                try:
                    opt_task.step()
                except NonFiniteGradientError as exc:
                    _zero(nets)
                    raise TrainingDiverged(str(exc), result(epoch - 1, "diverged")) from exc
                counters["task"] += 1
                if observer:
                    observer({"phase": "task", "updated": tuple(opt_task.nets), "epoch": epoch,
                              "lineage": [data.task_train.lineage[i] for i in idx]})
            counters["cycles"] += 1

        v = evaluate_da(model, data.da_val)
        vk = evaluate_kine(model, data.task_val)
        val_total = v.total + vk
        if not _finite(val_total):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}", result(epoch - 1, "diverged"))
        curve.append({"epoch": epoch, "recon_s": v.recon_s, "recon_r": v.recon_r, "diff": v.diff,
                      "kine": vk, "val_total": val_total})
        if stop.update(val_total, epoch):
            best = snapshot(nets)
        if stop.exhausted:
            return result(epoch, "patience")
    return result(epoch, "max_epochs")


def _zero(nets):
    for n in nets.values():
        n.zero_grad()


def train_supervised(net: Network, train: tuple[np.ndarray, np.ndarray], val: tuple[np.ndarray, np.ndarray],
                     schedule: TrainSchedule, lr: float, seed: int) -> TrainResult:
    """Plain sequence regression ``net(x) -> y`` with the same stopping rule."""
    x, y = train
    opt = Adam({"net": net}, OptimConfig(learning_rate=lr, weight_decay=schedule.weight_decay))
    rng = seed_rng(seed + 104729)
    stream = _BatchStream(len(x), schedule.batch_size, rng)
    steps = math.ceil(len(x) / stream.batch)
    stop = _EarlyStop(schedule.patience_epochs)
    curve: list[dict] = []
    best = net.copy()
    epoch = 0
    why = "max_epochs"
    for epoch in range(1, schedule.max_epochs + 1):
        for _ in range(steps):
            idx = stream.next()
            loss, g = l2_loss(net.forward(x[idx]), y[idx])
            if not math.isfinite(loss):
                net.zero_grad()
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}",
                                       TrainResult({"net": best}, curve, stop.best_epoch, epoch - 1, stopped="diverged"))
            net.backward(g)
            try:
                opt.step()
            except NonFiniteGradientError as exc:
                net.zero_grad()
                raise TrainingDiverged(str(exc), TrainResult({"net": best}, curve, stop.best_epoch,
                                                             epoch - 1, stopped="diverged")) from exc
        vl, _ = l2_loss(net.forward(val[0], cache=False), val[1])
        curve.append({"epoch": epoch, "val_total": vl})
        if stop.update(vl, epoch):
            best = net.copy()
        if stop.exhausted:
            why = "patience"
            break
    return TrainResult({"net": best}, curve, stop.best_epoch, epoch, {"steps": opt.t}, why)


def train_sim_only_lstm(net: Network, data: TrainingData, schedule: TrainSchedule, seed: int) -> TrainResult:
    """Sim-to-task regression on (sim sensor ⊕ pressure) -> node coordinates."""
    def xy(s: ChunkSet):
        a = s.arrays
        return np.concatenate([a["xs"], a["p"]], axis=-1), a["k"]

    return train_supervised(net, xy(data.task_train), xy(data.task_val), schedule, schedule.lr_task, seed)


def train_real2sim_lstm(net: Network, data: TrainingData, schedule: TrainSchedule, seed: int) -> TrainResult:
    """Supervised map from real to sim sensor readings on unobstructed pairs."""
    def xy(s: ChunkSet):
        return s.arrays["xr"], s.arrays["xs"]

    return train_supervised(net, xy(data.da_train), xy(data.da_val), schedule, schedule.lr_task, seed)


def train_single_ae(model: AutoEncoderModel, data: TrainingData, schedule: TrainSchedule, seed: int,
                    observer=None) -> TrainResult:
    """Same objective and alternation as the dual model with one shared encoder/decoder."""
    if not model.shared:
        raise ValueError("train_single_ae needs a shared encoder/decoder model")
    return train_alternating(model, data, schedule, seed, observer)
