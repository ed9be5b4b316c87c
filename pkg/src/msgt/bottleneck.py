"""Concept scoring layer: per-view concept predictions, view fusion,
embedding-similarity priors, score clamping, and the losses that tie
predictions to priors.

The fused prior vector is the teacher signal: it is computed off-tape and
enters the alignment loss as a constant, so gradients reach only the
prediction side (otherwise the shared fusion net could collapse both
sides onto each other and zero the loss without learning anything).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_TAU_H = 0.6
DEFAULT_PHI = 0.5
DEFAULT_LAMBDA = 1e-4

_LOGIT_EPS = 1e-12


@dataclass
class BottleneckParams:
    """Prediction head d->K plus a tiny shared fusion net over view scores.

    concept_embeddings stay a plain array: they are frozen prototypes and
    never receive gradient.
    """

    head_w: Tensor
    head_b: Tensor
    fusion_w_mean: Tensor
    fusion_w_max: Tensor
    fusion_b: Tensor
    concept_embeddings: np.ndarray

    @property
    def n_concepts(self) -> int:
        return self.concept_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.concept_embeddings.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        return {
            "bottleneck.head.w": self.head_w,
            "bottleneck.head.b": self.head_b,
            "bottleneck.fusion.w_mean": self.fusion_w_mean,
            "bottleneck.fusion.w_max": self.fusion_w_max,
            "bottleneck.fusion.b": self.fusion_b,
        }


def init_bottleneck(rng: np.random.Generator, concept_embeddings: np.ndarray) -> BottleneckParams:
    """Head is uniform-init affine; fusion starts as exact pass-through
    (unit weight on the mean feature), so one view fuses to itself."""
    concept_embeddings = np.asarray(concept_embeddings, dtype=np.float64)
    k, d = concept_embeddings.shape
    head_w, head_b = ad.affine_init(rng, d, k)
    return BottleneckParams(
        head_w=head_w,
        head_b=head_b,
        fusion_w_mean=Tensor(np.array([1.0]), requires_grad=True),
        fusion_w_max=Tensor(np.array([0.0]), requires_grad=True),
        fusion_b=Tensor(np.array([0.0]), requires_grad=True),
        concept_embeddings=concept_embeddings,
    )


@dataclass
class BottleneckOutput:
    """Per-sample record of the concept stage, numpy-valued for serving."""

    p: np.ndarray
    f: np.ndarray
    clamps: dict
    z: np.ndarray


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def fuse_views(scores: Tensor, params: BottleneckParams) -> Tensor:
    """Consolidate per-view scores (M, K) into one (K,) score per concept.

    Works in log-odds space: features are the mean and max over views of
    the per-view log-odds, mapped through a shared affine + sigmoid. At
    init (w=(1,0), b=0) a single view fuses to exactly itself.
    """
    if scores.ndim != 2 or scores.shape[0] < 1:
        raise ValueError("fuse_views needs a non-empty (views, concepts) matrix")
    log_odds = ad.logit(scores)
    feat_mean = ad.mean_axis(log_odds, 0)
    feat_max = ad.max_axis(log_odds, 0)
    fused_logit = ad.add(
        ad.add(ad.mul(params.fusion_w_mean, feat_mean),
               ad.mul(params.fusion_w_max, feat_max)),
        params.fusion_b)
    return ad.sigmoid(fused_logit)


def _fuse_np(scores: np.ndarray, params: BottleneckParams) -> np.ndarray:
    """Off-tape mirror of fuse_views for teacher-side (constant) fusion."""
    s = np.clip(scores, _LOGIT_EPS, 1.0 - _LOGIT_EPS)
    log_odds = np.log(s) - np.log1p(-s)
    fused = (params.fusion_w_mean.data[0] * log_odds.mean(axis=0)
             + params.fusion_w_max.data[0] * log_odds.max(axis=0)
             + params.fusion_b.data[0])
    return 1.0 / (1.0 + np.exp(-fused))


def predict_concepts(views: np.ndarray, params: BottleneckParams) -> Tensor:
    """Per-view head logits -> sigmoid scores -> fused (K,) predictions."""
    views = np.atleast_2d(np.asarray(views, dtype=np.float64))
    if views.shape[0] < 1:
        raise ValueError("need at least one view")
    if views.shape[1] != params.dim:
        raise ValueError("view/concept dimension mismatch")
    logits = ad.affine(Tensor(views), params.head_w, params.head_b)
    return fuse_views(ad.sigmoid(logits), params)


def prior_scores(views: np.ndarray, params: BottleneckParams) -> np.ndarray:
    """Embedding-similarity priors: sigmoid(view . prototype), fused.

    Pure numpy by design; the result is a constant training target.
    """
    views = np.atleast_2d(np.asarray(views, dtype=np.float64))
    if views.shape[1] != params.concept_embeddings.shape[1]:
        raise ValueError("view/concept dimension mismatch")
    per_view = 1.0 / (1.0 + np.exp(-(views @ params.concept_embeddings.T)))
    return _fuse_np(per_view, params)


def hint_clamps(hint: np.ndarray | None, concept_embeddings: np.ndarray,
                tau_h: float = DEFAULT_TAU_H) -> dict:
    """Concepts whose prototype cosine with the hint exceeds tau_h are
    forced to 1 (hints only ever assert presence)."""
    if hint is None:
        return {}
    hint = np.asarray(hint, dtype=np.float64)
    cos = concept_embeddings @ hint
    return {int(k): 1.0 for k in np.nonzero(cos > tau_h)[0]}


def apply_interventions(f: np.ndarray, annotations=None,
                        hint: np.ndarray | None = None,
                        concept_embeddings: np.ndarray | None = None,
                        tau_h: float = DEFAULT_TAU_H) -> tuple[np.ndarray, dict]:
    """Override priors with ground-truth flags and derive hint clamps.

    Annotated concepts overwrite f (the training target) with exact 0/1;
    unannotated entries pass through. Hint matches return as clamps to be
    applied to the assembled output vector, value always 1.
    """
    f_prime = np.asarray(f, dtype=np.float64).copy()
    if annotations is not None:
        if len(annotations) != f_prime.shape[0]:
            raise ValueError("annotation length mismatch")
        for k, a in enumerate(annotations):
            if a is None:
                continue
            if a not in (0, 1):
                raise ValueError(f"bad annotation value {a!r}")
            f_prime[k] = float(a)
    clamps = {}
    if hint is not None:
        if concept_embeddings is None:
            raise ValueError("hint clamping needs concept embeddings")
        clamps = hint_clamps(hint, concept_embeddings, tau_h)
    return f_prime, clamps


def assemble_z(p: Tensor, clamps: dict) -> Tensor:
    """Final concept vector: predictions with clamped slots overwritten.

    The overwrite is a stop-gradient, so clamped coordinates contribute
    nothing to any downstream gradient.
    """
    if not clamps:
        return p
    idx = []
    vals = []
    for k in sorted(clamps):
        v = float(clamps[k])
        if v not in (0.0, 1.0):
            raise ValueError(f"clamp value must be 0 or 1, got {v}")
        idx.append(int(k))
        vals.append(v)
    return ad.overwrite(p, idx, vals)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def alignment_loss(p: Tensor, f_target: np.ndarray) -> Tensor:
    """Mean squared gap between predicted scores and (clamped) priors."""
    f_target = np.asarray(f_target, dtype=np.float64)
    if p.shape != f_target.shape:
        raise ValueError("alignment_loss length mismatch")
    diff = ad.sub(p, Tensor(f_target))
    return ad.mean_all(ad.mul(diff, diff))


def elastic_net(w: Tensor, phi: float) -> Tensor:
    """phi * L1 + ((1 - phi) / 2) * squared Frobenius."""
    if not (0.0 <= phi <= 1.0):
        raise ValueError("phi must lie in [0, 1]")
    l1 = ad.abs_sum(w)
    fro2 = ad.sum_all(ad.mul(w, w))
    return ad.add(ad.scale(l1, phi), ad.scale(fro2, (1.0 - phi) / 2.0))


def cbl_loss(align: Tensor, sparse: Tensor, lam: float) -> Tensor:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return ad.add(align, ad.scale(sparse, lam))
