"""Training and evaluation loops shared by the CLI verbs."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint, data, metrics
from .config import RunConfig, build_model
from .nn import AdamState, adam_step, cross_entropy, parameter, softmax
from .pqc import set_num_threads

log = logging.getLogger(__name__)

EVAL_BATCH = 64


class NumericError(RuntimeError):
    pass


@dataclass
class Dataset:
    manifest: str
    records: list
    images: np.ndarray  # raw [0, 1] pixels, resized
    labels: np.ndarray
    n_classes: int
    edible: dict

    def subset(self, idx) -> "Dataset":
        idx = list(idx)
        return Dataset(self.manifest, [self.records[i] for i in idx], self.images[idx], self.labels[idx],
                       self.n_classes, self.edible)

    def __len__(self):
        return len(self.records)


def edibility_map(records) -> dict:
    out = {}
    for r in records:
        if out.setdefault(r.species_id, r.edible) != r.edible:
            raise data.DataError(f"species {r.species_id} is listed as both edible and inedible")
    return out


def load_dataset(manifest: str, image_size: int, n_classes: int = 0) -> Dataset:
    try:
        records = data.read_manifest(manifest)
    except OSError as exc:
        raise data.DataError(f"cannot read manifest {manifest}: {exc}") from exc
    if not records:
        raise data.DataError(f"{manifest}: no samples")
    labels = np.array([r.species_id for r in records], dtype=np.int64)
    if n_classes <= 0:
        n_classes = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= n_classes:
        raise data.DataError(f"species ids must lie in [0, {n_classes})")
    images = data.load_images(manifest, records, image_size)
    return Dataset(manifest, records, images, labels, n_classes, edibility_map(records))


def splits(ds: Dataset, cfg: RunConfig):
    fr = (1.0 - cfg.val_fraction - cfg.test_fraction, cfg.val_fraction, cfg.test_fraction)
    tr, va, te = data.split(ds.records, fr, cfg.seed)
    return {"train": ds.subset(tr), "val": ds.subset(va), "test": ds.subset(te)}


class Runner:
    """Model + parameters + preprocessing, enough to run forward passes."""

    def __init__(self, cfg: RunConfig, n_classes: int, params: dict, stats: data.NormStats):
        self.cfg = cfg
        self.n_classes = n_classes
        self.model = build_model(cfg, n_classes)
        self.params = params
        self.stats = stats
        self.frozen = self.model.frozen() if hasattr(self.model, "frozen") else set()

    def prepare(self, images: np.ndarray) -> np.ndarray:
        if self.model.wants_normalized:
            return data.normalize(images, self.stats)
        return images

    def logits(self, images: np.ndarray, params=None):
        return self.model.forward(params or self.params, self.prepare(images))

    def probabilities(self, images: np.ndarray) -> np.ndarray:
        out = []
        for s in range(0, len(images), EVAL_BATCH):
            out.append(softmax(self.logits(images[s:s + EVAL_BATCH]), axis=-1).data)
        if not out:
            return np.zeros((0, self.n_classes))
        return np.concatenate(out, axis=0)

    def loss_and_probs(self, ds: Dataset):
        probs = self.probabilities(ds.images)
        if len(ds) == 0:
            return math.nan, probs
        picked = probs[np.arange(len(ds)), ds.labels]
        return float(-np.mean(np.log(np.maximum(picked, 1e-300)))), probs


@dataclass
class TrainResult:
    runner: Runner
    curve: list = field(default_factory=list)
    train_accuracy: float = math.nan
    report: Optional[metrics.MetricReport] = None


# where and how fast a run executes never changes its result, so checkpoints omit them
_RUNTIME_ONLY = ("out_dir", "threads")


def meta_for(cfg: RunConfig, n_classes: int, stats: data.NormStats, edible: dict, rng_state: dict) -> dict:
    return {
        "config": {k: v for k, v in cfg.to_dict().items() if k not in _RUNTIME_ONLY},
        "n_classes": n_classes,
        "norm_stats": stats.to_dict(),
        "edible": {str(k): bool(v) for k, v in sorted(edible.items())},
        "rng_state": rng_state,
    }


def runner_from_checkpoint(path) -> tuple:
    params, meta = checkpoint.load(path)
    cfg = RunConfig(**meta["config"]).validate()
    stats = data.NormStats(np.array(meta["norm_stats"]["mean"]), np.array(meta["norm_stats"]["std"]))
    edible = {int(k): v for k, v in meta["edible"].items()}
    return Runner(cfg, meta["n_classes"], params, stats), edible, meta


def _json_state(state: dict) -> dict:
    return json.loads(json.dumps(state, default=int))


def train(cfg: RunConfig, out_dir: Optional[str] = None) -> TrainResult:
    """Algorithm: per epoch, shuffle, augment, forward, cross-entropy, backward, Adam."""
    out = Path(out_dir or cfg.out_dir)
    set_num_threads(cfg.threads)
    with threadpool_limits(limits=1):
        return _train(cfg, out)


def _train(cfg: RunConfig, out: Path) -> TrainResult:
    ds = load_dataset(cfg.manifest, cfg.image_size, cfg.n_classes)
    parts = splits(ds, cfg)
    tr, va = parts["train"], parts["val"]
    if len(tr) == 0:
        raise data.DataError("training split is empty")
    stats = data.compute_norm_stats(list(tr.images))
    rng = np.random.default_rng(cfg.seed)
    model = build_model(cfg, ds.n_classes)
    params = model.init_params(rng)
    if hasattr(model, "calibrate"):
        params = model.calibrate(params, tr.images)
    runner = Runner(cfg, ds.n_classes, params, stats)
    aug = data.AugmentSpec((cfg.image_size, cfg.image_size), cfg.max_rotation_deg, cfg.sharpness_prob, seed=cfg.seed)
    opt = AdamState(lr=cfg.lr)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.echo(), encoding="utf-8")

    curve = []
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(tr))
        total, seen = 0.0, 0
        for start in range(0, len(tr), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            imgs = tr.images[idx]
            if cfg.augment:
                imgs = np.stack([data.augment(im, aug, epoch, int(i)) for im, i in zip(imgs, idx)])
            leaves = {k: parameter(v) for k, v in runner.params.items()}
            for k in runner.frozen:
                leaves[k].requires_grad = False
            loss = cross_entropy(runner.logits(imgs, leaves), tr.labels[idx])
            if not np.isfinite(loss.data):
                raise NumericError(f"loss became {loss.data} at epoch {epoch + 1}, batch starting {start}")
            loss.backward()
            grads = {k: t.grad for k, t in leaves.items() if t.grad is not None and k not in runner.frozen}
            trainable = {k: v for k, v in runner.params.items() if k not in runner.frozen}
            trainable = adam_step(trainable, grads, opt)
            runner.params = {**runner.params, **trainable}
            total += float(loss.data) * len(idx)
            seen += len(idx)
        train_loss = total / seen
        val_loss, val_probs = runner.loss_and_probs(va)
        val_acc = float(np.mean(val_probs.argmax(axis=1) == va.labels)) if len(va) else math.nan
        curve.append((epoch + 1, train_loss, val_loss, val_acc))
        log.info("epoch %d  train_loss %.4f  val_loss %.4f  val_acc %.4f", epoch + 1, train_loss, val_loss, val_acc)

    write_curve(out / "loss_curve.csv", curve)
    train_probs = runner.probabilities(tr.images)
    train_acc = metrics.evaluate(train_probs, tr.labels, ds.n_classes)[0].accuracy
    meta = meta_for(cfg, ds.n_classes, stats, ds.edible, _json_state(rng.bit_generator.state))
    checkpoint.save(out / "model.ckpt", runner.params, meta)

    scored = va if len(va) else tr
    report = write_eval(out, runner, scored, ds.edible, extra={"train_accuracy": train_acc,
                                                                 "evaluated_split": "val" if len(va) else "train"})
    return TrainResult(runner, curve, train_acc, report)


def write_curve(path: Path, curve):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for epoch, tl, vl, va in curve:
            w.writerow([epoch, repr(tl), repr(vl), repr(va)])


def read_curve(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in r.items()} for r in rows]


def write_eval(out: Path, runner: Runner, ds: Dataset, edible: dict, extra: Optional[dict] = None):
    """Write metrics.json, confusion.csv and edibility.json for ``ds``; returns the species report."""
    probs = runner.probabilities(ds.images)
    report, cm, preds = metrics.evaluate(probs, ds.labels, runner.n_classes)
    report.extra.update(extra or {})
    edi = metrics.edibility_collapse(preds, ds.labels, edible, probs)
    (out / "metrics.json").write_text(report.to_json(), encoding="utf-8")
    (out / "confusion.csv").write_text(metrics.confusion_csv(cm), encoding="utf-8")
    (out / "edibility.json").write_text(edi.to_json(), encoding="utf-8")
    return report
