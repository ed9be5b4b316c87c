"""Two-sided graphs over concept and word nodes.

Topology is static per sample: raw pair costs, their bucket indices, and
block tags (side-a pair, side-b pair, cross pair) are plain arrays. The
learned part is a per-head scalar per bucket; ``structural_matrix``
gathers those into the (heads, n, n) additive attention prior at forward
time so gradients reach the bucket tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .concepts import ConceptPool
from .dataio import EmbeddingTable, lookup_or_pseudo

DEFAULT_BUCKETS = 32
DEFAULT_D_MAX = 64.0
DEFAULT_L_V = 1.0
DEFAULT_L_A = 1.0
CROSS_COST = 1.0

QUESTION_TOKENS = ["which", "findings", "are", "present"]

KIND_CONCEPT = "concept"
KIND_ANSWER = "answer-word"
KIND_QUESTION = "question-word"

_BLOCK_A, _BLOCK_B, _BLOCK_CROSS = 0, 1, 2


# ---------------------------------------------------------------------------
# edge cost rules
# ---------------------------------------------------------------------------

def spatial_edge(xi: float, yi: float, xj: float, yj: float,
                 l_v: float = DEFAULT_L_V) -> float:
    """Scaled squared distance between two region centers."""
    if l_v <= 0:
        raise ValueError("l_v must be positive")
    return l_v * ((xi - xj) ** 2 + (yi - yj) ** 2)


def order_edge(i: int, j: int, l_a: float = DEFAULT_L_A) -> float:
    """Scaled squared gap between two 0-based token positions."""
    if l_a <= 0:
        raise ValueError("l_a must be positive")
    return l_a * float(i - j) ** 2


def spatial_dist_matrix(centers, l_v: float = DEFAULT_L_V) -> np.ndarray:
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    diff = centers[:, None, :] - centers[None, :, :]
    return l_v * (diff ** 2).sum(axis=2)


def order_dist_matrix(n: int, l_a: float = DEFAULT_L_A) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)
    return l_a * (pos[:, None] - pos[None, :]) ** 2


def feature_dist_matrix(features: np.ndarray, l_v: float = DEFAULT_L_V) -> np.ndarray:
    """Fallback pair cost when no region centers exist: scaled squared
    euclidean distance between node feature vectors."""
    f = np.asarray(features, dtype=np.float64)
    diff = f[:, None, :] - f[None, :, :]
    return l_v * (diff ** 2).sum(axis=2)


def bucket_indices(dist: np.ndarray, buckets: int = DEFAULT_BUCKETS,
                   d_max: float = DEFAULT_D_MAX) -> np.ndarray:
    """Uniform bucket of each cost clipped to [0, d_max]."""
    if buckets < 1 or d_max <= 0:
        raise ValueError("need buckets >= 1 and d_max > 0")
    clipped = np.clip(np.asarray(dist, dtype=np.float64), 0.0, d_max)
    idx = np.floor(clipped / d_max * buckets).astype(np.int64)
    return np.minimum(idx, buckets - 1)


# ---------------------------------------------------------------------------
# graph types
# ---------------------------------------------------------------------------

@dataclass
class HeteroGraph:
    """Dense two-partition graph with per-pair structural costs."""

    node_features: np.ndarray
    node_kinds: list[str]
    n1: int
    n2: int
    dist: np.ndarray
    bucket_idx: np.ndarray
    block: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n1 + self.n2

    def validate(self):
        n = self.n_nodes
        if self.node_features.shape[0] != n or len(self.node_kinds) != n:
            raise ValueError("node count mismatch")
        for m in (self.dist, self.bucket_idx, self.block):
            if m.shape != (n, n):
                raise ValueError("structural matrices must be square over all nodes")
        if not np.all(np.isfinite(self.dist)):
            raise ValueError("non-finite structural cost")
        return self


@dataclass
class QAPair:
    question_tokens: list[str]
    answer_tokens: list[str]
    question_features: np.ndarray
    answer_features: np.ndarray


def generate_qa(pool: ConceptPool, top_concepts=None,
                table: EmbeddingTable | None = None, seed: int = 0) -> QAPair:
    """Fixed-template question plus answer words spelling out the selected
    concept names (whitespace tokens, selection order). Deterministic."""
    if top_concepts is None:
        top_concepts = list(range(len(pool)))
    top_concepts = list(top_concepts)
    if not top_concepts:
        raise ValueError("need at least one selected concept")
    answer_tokens = []
    for k in top_concepts:
        answer_tokens.extend(pool.concepts[k].name.split())
    d = pool.dim
    q_feat = np.stack([lookup_or_pseudo(table, t, d, seed) for t in QUESTION_TOKENS])
    a_feat = np.stack([lookup_or_pseudo(table, t, d, seed) for t in answer_tokens])
    return QAPair(list(QUESTION_TOKENS), answer_tokens, q_feat, a_feat)


def build_graph(side_a_features: np.ndarray, side_b_features: np.ndarray,
                dist_a: np.ndarray, dist_b: np.ndarray,
                kind_a: str, kind_b: str,
                buckets: int = DEFAULT_BUCKETS,
                d_max: float = DEFAULT_D_MAX) -> HeteroGraph:
    """Assemble the two-sided graph: within-side costs from the given
    matrices, every cross pair at the constant cost 1."""
    side_a_features = np.asarray(side_a_features, dtype=np.float64)
    side_b_features = np.asarray(side_b_features, dtype=np.float64)
    if side_a_features.shape[1] != side_b_features.shape[1]:
        raise ValueError("side feature dimension mismatch")
    n1, n2 = side_a_features.shape[0], side_b_features.shape[0]
    dist_a = np.asarray(dist_a, dtype=np.float64)
    dist_b = np.asarray(dist_b, dtype=np.float64)
    if dist_a.shape != (n1, n1) or dist_b.shape != (n2, n2):
        raise ValueError("within-side cost matrix shape mismatch")
    n = n1 + n2
    dist = np.full((n, n), CROSS_COST)
    dist[:n1, :n1] = dist_a
    dist[n1:, n1:] = dist_b
    block = np.full((n, n), _BLOCK_CROSS, dtype=np.int8)
    block[:n1, :n1] = _BLOCK_A
    block[n1:, n1:] = _BLOCK_B
    return HeteroGraph(
        node_features=np.concatenate([side_a_features, side_b_features], axis=0),
        node_kinds=[kind_a] * n1 + [kind_b] * n2,
        n1=n1, n2=n2,
        dist=dist,
        bucket_idx=bucket_indices(dist, buckets, d_max),
        block=block,
    ).validate()


def build_concept_answer_graph(concept_features: np.ndarray, qa: QAPair,
                               region_centers=None,
                               l_v: float = DEFAULT_L_V,
                               l_a: float = DEFAULT_L_A,
                               buckets: int = DEFAULT_BUCKETS,
                               d_max: float = DEFAULT_D_MAX) -> HeteroGraph:
    """Concept nodes vs answer words. Concept pair costs come from region
    centers when the sample has them, else from feature distances."""
    if region_centers is not None:
        dist_c = spatial_dist_matrix(region_centers, l_v)
        if dist_c.shape[0] != concept_features.shape[0]:
            raise ValueError("region_centers/concept count mismatch")
    else:
        dist_c = feature_dist_matrix(concept_features, l_v)
    dist_a = order_dist_matrix(len(qa.answer_tokens), l_a)
    return build_graph(concept_features, qa.answer_features, dist_c, dist_a,
                       KIND_CONCEPT, KIND_ANSWER, buckets, d_max)


def build_question_answer_graph(qa: QAPair,
                                l_a: float = DEFAULT_L_A,
                                buckets: int = DEFAULT_BUCKETS,
                                d_max: float = DEFAULT_D_MAX) -> HeteroGraph:
    """Question words vs answer words; both sides use word-order costs."""
    dist_q = order_dist_matrix(len(qa.question_tokens), l_a)
    dist_a = order_dist_matrix(len(qa.answer_tokens), l_a)
    return build_graph(qa.question_features, qa.answer_features, dist_q, dist_a,
                       KIND_QUESTION, KIND_ANSWER, buckets, d_max)


def build_reasoning_graph(t_a: np.ndarray, ac_guided: np.ndarray,
                          aq_guided: np.ndarray,
                          l_a: float = DEFAULT_L_A,
                          buckets: int = DEFAULT_BUCKETS,
                          d_max: float = DEFAULT_D_MAX) -> HeteroGraph:
    """Single-sided graph over answer words whose features are the column
    concat [original | concept-guided | question-guided] (3d wide)."""
    t_a = np.asarray(t_a, dtype=np.float64)
    ac_guided = np.asarray(ac_guided, dtype=np.float64)
    aq_guided = np.asarray(aq_guided, dtype=np.float64)
    n = t_a.shape[0]
    if ac_guided.shape[0] != n or aq_guided.shape[0] != n:
        raise ValueError("row-count mismatch across reasoning inputs")
    dist = order_dist_matrix(n, l_a)
    return HeteroGraph(
        node_features=np.concatenate([t_a, ac_guided, aq_guided], axis=1),
        node_kinds=[KIND_ANSWER] * n,
        n1=n, n2=0,
        dist=dist,
        bucket_idx=bucket_indices(dist, buckets, d_max),
        block=np.full((n, n), _BLOCK_A, dtype=np.int8),
    ).validate()


# ---------------------------------------------------------------------------
# learned structural prior
# ---------------------------------------------------------------------------

def structural_matrix(graph: HeteroGraph, psi_a: Tensor,
                      psi_b: Tensor | None = None,
                      psi_cross: Tensor | None = None) -> Tensor:
    """Materialize the (heads, n, n) additive prior from bucket tables.

    Each block gathers from its own table at the shared bucket indices;
    constant 0/1 masks route every pair to exactly one table.
    """
    tables = {_BLOCK_A: psi_a, _BLOCK_B: psi_b, _BLOCK_CROSS: psi_cross}
    out = None
    for block_id, table in tables.items():
        mask = (graph.block == block_id).astype(np.float64)
        if not mask.any():
            continue
        if table is None:
            raise ValueError(f"graph has block {block_id} pairs but no table")
        looked = ad.bucket_lookup(table, graph.bucket_idx)
        piece = ad.mul(looked, Tensor(mask[None, :, :]))
        out = piece if out is None else ad.add(out, piece)
    assert out is not None
    return out


def init_psi(heads: int, buckets: int = DEFAULT_BUCKETS) -> Tensor:
    """Bucket tables start at zero: structure-blind until trained."""
    return Tensor(np.zeros((buckets, heads)), requires_grad=True)


def graph_to_dict(graph: HeteroGraph, structural: np.ndarray | None = None) -> dict:
    doc = {
        "node_kinds": list(graph.node_kinds),
        "n1": graph.n1,
        "n2": graph.n2,
        "dist": graph.dist.tolist(),
        "bucket_idx": graph.bucket_idx.tolist(),
    }
    if structural is not None:
        doc["structural"] = np.asarray(structural).tolist()
    return doc
