"""Small deterministic datasets for tests, demos, and benchmarks.

All vectors are built from pseudo-embeddings over an orthonormalized
basis, so label geometry, concept relevance ordering, and class
separability are controlled exactly rather than left to chance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .concepts import ConceptPool, build_pool, save_pool
from .dataio import (MULTI_LABEL, SINGLE_LABEL, DatasetManifest, EmbeddingTable,
                     Sample, pseudo_embed, save_embedding_file, save_manifest)
from .model import ModelConfig
from .training import TrainConfig

FIXTURE_SEED = 20260814

# fixture-local thresholds; the package defaults merge far too eagerly
# for hand-built candidates
FIXTURE_TAU_C = 0.9
FIXTURE_TAU_R = 0.3


@dataclass
class FixtureBundle:
    manifest: DatasetManifest
    pool: ConceptPool
    views: EmbeddingTable
    labels: EmbeddingTable
    candidates: EmbeddingTable
    model_config: ModelConfig
    train_config: TrainConfig


def _orthonormal_basis(n: int, d: int, seed: int) -> np.ndarray:
    """Gram-Schmidt over pseudo-embeddings; exact pairwise orthogonality."""
    if n > d:
        raise ValueError("cannot fit basis")
    rows = np.stack([pseudo_embed(f"basis {i}", d, seed) for i in range(n)])
    basis = np.zeros((n, d))
    for i in range(n):
        v = rows[i].copy()
        for j in range(i):
            v -= (v @ basis[j]) * basis[j]
        basis[i] = v / np.linalg.norm(v)
    return basis


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def make_separable_fixture(seed: int = FIXTURE_SEED, dim: int = 16) -> FixtureBundle:
    """Two-class, eight-train-sample dataset a linear probe separates exactly.

    Concepts are blends of the two label directions plus private
    orthogonal components, giving four distinct relevance scores, one
    near-duplicate that dedup must fold, and one irrelevant direction
    that scores zero.
    """
    basis = _orthonormal_basis(8, dim, seed)
    y0, y1 = basis[0], basis[1]
    u = basis[2:7]

    labels = EmbeddingTable(["healthy", "pneumonia"], np.stack([y0, y1]),
                            normalized=True)

    # (name, weight on y0, weight on y1, private direction)
    recipe = [
        ("cardiomegaly", 0.9, 0.1, u[0]),
        ("effusion", 0.1, 0.9, u[1]),
        ("opacity", 0.7, 0.3, u[2]),
        ("edema", 0.3, 0.7, u[3]),
    ]
    cand_names, cand_rows = [], []
    for name, a, b, extra in recipe:
        cand_names.append(name)
        cand_rows.append(_unit(a * y0 + b * y1 + 0.45 * extra))
    # near-duplicate of the first candidate; dedup keeps the original
    cand_names.append("cardiomegaly variant")
    cand_rows.append(_unit(cand_rows[0] + 0.02 * u[4]))
    # orthogonal to both labels: relevance exactly zero
    cand_names.append("artifact")
    cand_rows.append(u[4])
    candidates = EmbeddingTable(cand_names, np.stack(cand_rows),
                                normalized=True)

    pool = build_pool(candidates, labels, K=4, tau_c=FIXTURE_TAU_C,
                      tau_r=FIXTURE_TAU_R)

    concept_vec = {c.name: c.embedding for c in pool.concepts}
    class_mix = {
        0: _unit(concept_vec["cardiomegaly"] + concept_vec["opacity"]),
        1: _unit(concept_vec["effusion"] + concept_vec["edema"]),
    }
    # pool order is relevance-sorted; annotations follow it
    annotation_by_class = {
        0: [1 if pool.names[k] in ("cardiomegaly", "opacity") else 0
            for k in range(len(pool))],
        1: [1 if pool.names[k] in ("effusion", "edema") else 0
            for k in range(len(pool))],
    }

    view_names, view_rows, samples = [], [], []
    centers = [[0.0, 0.0], [3.0, 4.0], [6.0, 8.0], [9.0, 12.0]]

    def add_sample(sid, cls, n_views, split, **kw):
        names = []
        for m in range(n_views):
            vn = f"{sid} view{m}"
            noise = pseudo_embed(vn, dim, seed + 1)
            vec = _unit(basis[cls] + 0.25 * class_mix[cls] + 0.35 * noise)
            view_names.append(vn)
            view_rows.append(vec)
            names.append(vn)
        samples.append(Sample(id=sid, views=names, labels=[cls],
                              split=split, **kw))

    for i in range(8):
        cls = i % 2
        extras = {}
        if i < 4:
            extras["annotations"] = list(annotation_by_class[cls])
        if i == 5:
            ann = list(annotation_by_class[cls])
            ann[2] = None
            extras["annotations"] = ann
        if i == 6:
            extras["region_centers"] = [list(c) for c in centers]
        if i == 7:
            extras["hint_text"] = "hint effusion"
        add_sample(f"tr{i}", cls, 1, "train", **extras)
    for i in range(4):
        add_sample(f"ev{i}", i % 2, 2, "eval")

    # a hint whose embedding IS a concept: guaranteed to clamp
    view_names.append("hint effusion")
    view_rows.append(concept_vec["effusion"].copy())

    views = EmbeddingTable(view_names, np.stack(view_rows), normalized=True)
    manifest = DatasetManifest(task=SINGLE_LABEL,
                               label_names=["healthy", "pneumonia"],
                               samples=samples)

    model_config = ModelConfig(dim=dim, heads=2, n_context_layers=1,
                               n_reason_layers=1, n_experts=2, buckets=8,
                               d_max=8.0, task=SINGLE_LABEL, n_classes=2,
                               n_concepts=len(pool), seed=7)
    train_config = TrainConfig(seed=seed, epochs=60, lr=1e-3, batch_size=4)
    return FixtureBundle(manifest, pool, views, labels, candidates,
                         model_config, train_config)


def make_multilabel_fixture(seed: int = FIXTURE_SEED, dim: int = 16) -> FixtureBundle:
    """Three-pathology multi-label dataset, two views per sample."""
    basis = _orthonormal_basis(7, dim, seed + 100)
    label_names = ["edema", "effusion", "mass"]
    labels = EmbeddingTable(label_names, basis[:3], normalized=True)

    cand_names, cand_rows = [], []
    for i, name in enumerate(["fluid", "swelling", "nodule"]):
        cand_names.append(name)
        cand_rows.append(_unit(0.8 * basis[i] + 0.2 * basis[(i + 1) % 3]
                               + 0.4 * basis[3 + i]))
    candidates = EmbeddingTable(cand_names, np.stack(cand_rows),
                                normalized=True)
    pool = build_pool(candidates, labels, K=3, tau_c=FIXTURE_TAU_C,
                      tau_r=FIXTURE_TAU_R)

    combos = [[0], [1], [2], [0, 1], [1, 2], [0, 2]]
    view_names, view_rows, samples = [], [], []
    for i, present in enumerate(combos + combos[:2]):
        split = "train" if i < 6 else "eval"
        sid = f"ml{i}"
        target = _unit(sum(basis[c] for c in present))
        names = []
        for m in range(2):
            vn = f"{sid} view{m}"
            noise = pseudo_embed(vn, dim, seed + 2)
            view_names.append(vn)
            view_rows.append(_unit(target + 0.3 * noise))
            names.append(vn)
        samples.append(Sample(id=sid, views=names, labels=list(present),
                              split=split))
    views = EmbeddingTable(view_names, np.stack(view_rows), normalized=True)
    manifest = DatasetManifest(task=MULTI_LABEL, label_names=label_names,
                               samples=samples)
    model_config = ModelConfig(dim=dim, heads=2, n_context_layers=1,
                               n_reason_layers=1, n_experts=2, buckets=8,
                               d_max=8.0, task=MULTI_LABEL, n_classes=3,
                               n_concepts=len(pool), seed=11)
    train_config = TrainConfig(seed=seed, epochs=40, lr=1e-3, batch_size=4)
    return FixtureBundle(manifest, pool, views, labels, candidates,
                         model_config, train_config)


def linear_probe_accuracy(bundle: FixtureBundle, split: str = "train") -> float:
    """Least-squares probe from raw view vectors to one-hot labels.

    Certifies that the fixture is linearly separable before any model
    training is attempted; 1.0 means every view is classified correctly.
    """
    samples = bundle.manifest.split_samples(split)
    xs, ys = [], []
    for s in samples:
        for vn in s.views:
            xs.append(bundle.views.lookup(vn))
            ys.append(s.labels[0])
    x = np.stack(xs)
    x = np.hstack([x, np.ones((x.shape[0], 1))])
    n_classes = len(bundle.manifest.label_names)
    onehot = np.eye(n_classes)[ys]
    w, *_ = np.linalg.lstsq(x, onehot, rcond=None)
    pred = (x @ w).argmax(axis=1)
    return float(np.mean(pred == np.asarray(ys)))


def write_fixture_files(bundle: FixtureBundle, out_dir) -> dict:
    """Materialize the bundle for command-line use; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": out / "manifest.json",
        "pool": out / "pool.json",
        "views": out / "views.emb",
        "labels": out / "labels.emb",
        "candidates": out / "candidates.emb",
    }
    save_manifest(paths["manifest"], bundle.manifest)
    save_pool(paths["pool"], bundle.pool)
    save_embedding_file(paths["views"], bundle.views)
    save_embedding_file(paths["labels"], bundle.labels)
    save_embedding_file(paths["candidates"], bundle.candidates)
    return {k: str(v) for k, v in paths.items()}
