"""Training loop, evaluation protocol, and classification metrics.

Training treats every view of a study as its own sample; evaluation runs
a fused forward for single-label tasks and combines per-view probability
vectors by element-wise max for multi-label tasks. Runs are deterministic
given (seed, config, data): fixed shuffling streams, fixed summation
order, single-threaded steps.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from . import bottleneck as bn
from . import kernels
from . import model as md
from .autodiff import Tape, Tensor
from .dataio import (MULTI_LABEL, SINGLE_LABEL, DatasetManifest, EmbeddingTable,
                     lookup_or_pseudo, validate_manifest)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 50
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    shuffle: bool = True
    task_weight: float = 1.0
    align_weight: float = 1.0
    two_stage: bool = False
    stage_split: float = 0.5

    def validate(self):
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("bad training hyperparameters")
        if not (0.0 < self.stage_split < 1.0):
            raise ValueError("stage_split must lie in (0, 1)")
        return self


@dataclass
class TrainHistory:
    epoch_losses: list = field(default_factory=list)
    seconds: float = 0.0


class Adam:
    """First-order adaptive-moment updates, fused elementwise kernel."""

    def __init__(self, tensors: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = dict(tensors)
        for t in self.tensors.values():
            t.data = np.ascontiguousarray(t.data)
        self.slots = {name: (np.zeros(t.size), np.zeros(t.size))
                      for name, t in self.tensors.items()}
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, scale: float = 1.0):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, tensor in self.tensors.items():
            if tensor.grad is None:
                continue
            g = np.ascontiguousarray(tensor.grad.ravel() * scale)
            m, v = self.slots[name]
            kernels.adam_step(tensor.data.ravel(), g, m, v, self.lr,
                              self.beta1, self.beta2, self.eps, bc1, bc2)

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def combine_views(prob_vectors: list) -> np.ndarray:
    """Element-wise max across any number of per-view probability vectors."""
    if not prob_vectors:
        raise ValueError("no probability vectors to combine")
    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in prob_vectors])
    return stacked.max(axis=0)


def roc_auc(scores, labels):
    """Probability that a random positive outscores a random negative,
    ties at half credit. None when only one class is present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if set(np.unique(labels)) - {0, 1}:
        raise ValueError("labels must be binary")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1(scores, labels, threshold: float = 0.5) -> float:
    """Harmonic precision/recall at a fixed threshold; 0 when undefined."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    # single integer-ratio form of 2PR/(P+R); exact, and 0 when undefined
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


@dataclass
class MetricsReport:
    n_samples: int
    top1: float | None
    auc: list
    f1: list
    macro_auc: float | None
    macro_f1: float
    label_names: list

    def to_dict(self) -> dict:
        return asdict(self)


def _macro(values):
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def _score_matrix(model: md.Model, samples, views: EmbeddingTable):
    """Per-sample class probabilities under the task's view protocol."""
    cfg = model.config
    rows = []
    for s in samples:
        view_vecs = np.stack([views.lookup(v) for v in s.views])
        hint = (lookup_or_pseudo(views, s.hint_text, cfg.dim, cfg.seed)
                if s.hint_text else None)
        if cfg.task == SINGLE_LABEL:
            res = model.forward(view_vecs, hint_vec=hint,
                                region_centers=s.region_centers)
            rows.append(res.class_probs())
        else:
            per_view = [model.forward(view_vecs[m:m + 1], hint_vec=hint,
                                      region_centers=s.region_centers
                                      ).sigmoid_probs()
                        for m in range(view_vecs.shape[0])]
            rows.append(combine_views(per_view))
    return np.stack(rows)


def evaluate(model: md.Model, manifest: DatasetManifest,
             views: EmbeddingTable, split: str | None = "train") -> MetricsReport:
    samples = manifest.split_samples(split)
    if not samples:
        raise ValueError(f"split {split!r} has no samples")
    validate_manifest(manifest, n_concepts=model.config.n_concepts)
    probs = _score_matrix(model, samples, views)
    n_classes = model.config.n_classes
    if model.config.task == SINGLE_LABEL:
        y = np.array([s.labels[0] for s in samples])
        top1 = float(np.mean(probs.argmax(axis=1) == y))
        onehot = np.zeros((len(samples), n_classes), dtype=int)
        onehot[np.arange(len(samples)), y] = 1
        truth = onehot
    else:
        top1 = None
        truth = np.zeros((len(samples), n_classes), dtype=int)
        for i, s in enumerate(samples):
            truth[i, s.labels] = 1
    aucs = [roc_auc(probs[:, c], truth[:, c]) for c in range(n_classes)]
    f1s = [f1(probs[:, c], truth[:, c]) for c in range(n_classes)]
    return MetricsReport(
        n_samples=len(samples), top1=top1, auc=aucs, f1=f1s,
        macro_auc=_macro(aucs), macro_f1=float(np.mean(f1s)),
        label_names=list(model.label_names))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _multihot(labels, n_classes: int) -> np.ndarray:
    out = np.zeros(n_classes)
    out[list(labels)] = 1.0
    return out


def _expand_examples(manifest: DatasetManifest, split: str | None):
    """One training example per (sample, view)."""
    out = []
    for s in manifest.split_samples(split):
        for view_name in s.views:
            out.append((s, view_name))
    return out


def _loss_terms(model: md.Model, view_vec, sample, hint, align_weight, task_weight):
    cfg = model.config
    res = model.forward(view_vec[None, :], annotations=sample.annotations,
                        hint_vec=hint, region_centers=sample.region_centers)
    if cfg.task == SINGLE_LABEL:
        task = ad.cross_entropy_logits(res.logits, sample.labels[0])
    else:
        task = ad.bce_with_logits(res.logits, _multihot(sample.labels,
                                                        cfg.n_classes))
    align = bn.alignment_loss(res.p, res.f_target)
    sparse = bn.elastic_net(model.classifier_w1(), cfg.phi)
    concept_loss = bn.cbl_loss(ad.scale(align, align_weight), sparse, cfg.lam)
    total = ad.add(ad.scale(task, task_weight), concept_loss)
    return total, task, align, sparse


def _check_finite(epoch, batch, sample_id, pairs):
    for name, value in pairs:
        if not np.isfinite(value):
            raise RuntimeError(
                f"training diverged: non-finite {name} at epoch {epoch} "
                f"batch {batch} sample {sample_id}")


def train(model: md.Model, manifest: DatasetManifest, views: EmbeddingTable,
          cfg: TrainConfig, split: str | None = "train") -> TrainHistory:
    """Optimize task + concept losses jointly (or in two stages) and
    record the per-epoch mean loss."""
    cfg.validate()
    validate_manifest(manifest, n_concepts=model.config.n_concepts)
    examples = _expand_examples(manifest, split)
    if not examples:
        raise ValueError(f"split {split!r} has no samples")
    named = model.named_tensors()
    bottleneck_names = {n for n in named if n.startswith("bottleneck.")}
    history = TrainHistory()
    start = time.perf_counter()

    stages: list[tuple[dict, int, float, float]] = []
    if cfg.two_stage:
        first = int(round(cfg.epochs * cfg.stage_split))
        stage1 = {n: named[n] for n in bottleneck_names}
        stage2 = {n: t for n, t in named.items() if n not in bottleneck_names}
        stages.append((stage1, first, 0.0, cfg.align_weight))
        stages.append((stage2, cfg.epochs - first, cfg.task_weight, 0.0))
    else:
        stages.append((dict(named), cfg.epochs, cfg.task_weight,
                       cfg.align_weight))

    epoch_global = 0
    for tensors, n_epochs, task_w, align_w in stages:
        opt = Adam(tensors, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        for _ in range(n_epochs):
            rng = np.random.default_rng(cfg.seed + 7919 * epoch_global)
            order = (rng.permutation(len(examples)) if cfg.shuffle
                     else np.arange(len(examples)))
            epoch_loss = 0.0
            for b_start in range(0, len(order), cfg.batch_size):
                batch = order[b_start:b_start + cfg.batch_size]
                opt.zero_grad()
                for idx in batch:
                    sample, view_name = examples[idx]
                    view_vec = views.lookup(view_name)
                    hint = (lookup_or_pseudo(views, sample.hint_text,
                                             model.config.dim, model.config.seed)
                            if sample.hint_text else None)
                    with Tape() as tape:
                        total, task, align, sparse = _loss_terms(
                            model, view_vec, sample, hint, align_w, task_w)
                    _check_finite(epoch_global, b_start // cfg.batch_size,
                                  sample.id,
                                  [("task loss", task.item()),
                                   ("alignment loss", align.item()),
                                   ("sparsity penalty", sparse.item()),
                                   ("total loss", total.item())])
                    ad.backward(tape, total)
                    epoch_loss += total.item()
                opt.step(scale=1.0 / len(batch))
            history.epoch_losses.append(epoch_loss / len(examples))
            epoch_global += 1
    history.seconds = time.perf_counter() - start
    return history


def run_training(model_cfg: md.ModelConfig, train_cfg: TrainConfig,
                 manifest: DatasetManifest, pool, views: EmbeddingTable,
                 out_path=None) -> tuple[md.Model, TrainHistory]:
    """Build, train, quantize to the shipping precision, optionally save."""
    model = md.build_model(model_cfg, pool, manifest.label_names)
    history = train(model, manifest, views, train_cfg)
    model.quantize()
    if out_path is not None:
        md.save_checkpoint(out_path, model, train_config=asdict(train_cfg))
    return model, history


# ---------------------------------------------------------------------------
# ablation sweep
# ---------------------------------------------------------------------------

def ablate_experts(model_cfg: md.ModelConfig, train_cfg: TrainConfig,
                   manifest: DatasetManifest, pool, views: EmbeddingTable,
                   sweep: list[int], csv_path=None,
                   eval_split: str | None = "train") -> list[dict]:
    rows = []
    for n_experts in sweep:
        cfg = replace(model_cfg, n_experts=int(n_experts))
        model, history = run_training(cfg, train_cfg, manifest, pool, views)
        report = evaluate(model, manifest, views, split=eval_split)
        rows.append({
            "experts": int(n_experts),
            "params": model.count_params(),
            "final_loss": history.epoch_losses[-1] if history.epoch_losses else "",
            "top1": "" if report.top1 is None else report.top1,
            "macro_auc": "" if report.macro_auc is None else report.macro_auc,
            "macro_f1": report.macro_f1,
            "seconds": round(history.seconds, 3),
        })
        log.info("ablate experts=%d params=%d top1=%s", n_experts,
                 rows[-1]["params"], rows[-1]["top1"])
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return rows
