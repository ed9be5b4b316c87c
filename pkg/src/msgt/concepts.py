"""Concept pool mining: merge near-duplicate candidate phrases, score each
survivor against the label set, and keep the top scorers."""

from __future__ import annotations

import base64
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import EmbeddingTable

log = logging.getLogger(__name__)

_NORM_TOL = 1e-9

DEFAULT_TAU_C = 0.1
DEFAULT_TAU_R = 0.85


@dataclass
class ScoredConcept:
    name: str
    embedding: np.ndarray
    mu: float
    sigma: float
    R: float


@dataclass
class ConceptPool:
    concepts: list[ScoredConcept]
    tau_c: float
    tau_r: float
    K: int

    def __len__(self) -> int:
        return len(self.concepts)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.concepts]

    @property
    def embeddings(self) -> np.ndarray:
        return np.stack([c.embedding for c in self.concepts])

    @property
    def dim(self) -> int:
        return self.concepts[0].embedding.shape[0]

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.concepts):
            if c.name == name:
                return i
        raise KeyError(f"no concept named {name!r}")


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # keep the smaller index as root so representatives fall out directly
            if ri < rj:
                self.parent[rj] = ri
            else:
                self.parent[ri] = rj


def _require_normalized(table: EmbeddingTable, what: str):
    if len(table) == 0:
        return
    norms = np.linalg.norm(table.vectors, axis=1)
    if np.abs(norms - 1.0).max() > _NORM_TOL:
        raise ValueError(f"{what} embeddings must be unit-normalized")


def dedup(candidates: EmbeddingTable, tau_c: float) -> EmbeddingTable:
    """Merge candidates whose pairwise cosine exceeds tau_c.

    Pairs with cosine > tau_c are edges; each connected component keeps
    exactly one survivor, the member with the lowest original index, and
    survivors stay in original relative order.
    """
    if not (0.0 <= tau_c <= 1.0):
        raise ValueError("tau_c must lie in [0, 1]")
    _require_normalized(candidates, "candidate")
    n = len(candidates)
    if n == 0:
        return candidates
    cos = candidates.vectors @ candidates.vectors.T
    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if cos[i, j] > tau_c:
                uf.union(i, j)
    keep = sorted({uf.find(i) for i in range(n)})
    return EmbeddingTable([candidates.names[i] for i in keep],
                          candidates.vectors[keep], normalized=True)


def relevance(pool: EmbeddingTable, labels: EmbeddingTable,
              tau_r: float) -> list[ScoredConcept]:
    """Score each concept by the spread of its label affinities.

    For concept c with cosines s_y over the label set: mu is their mean,
    sigma the population standard deviation (1/|Y| inside the root), and
    R = sigma when mu >= tau_r else 0. High-mu concepts that discriminate
    between labels score high; uniformly similar ones score 0.
    """
    _require_normalized(pool, "concept")
    _require_normalized(labels, "label")
    if len(labels) == 0:
        raise ValueError("label table is empty")
    if len(pool) and pool.dim != labels.dim:
        raise ValueError("concept/label dimension mismatch")
    scored = []
    for i, name in enumerate(pool.names):
        s = labels.vectors @ pool.vectors[i]
        mu = float(s.mean())
        sigma = float(np.sqrt(np.mean((s - mu) ** 2)))
        r = sigma if mu >= tau_r else 0.0
        scored.append(ScoredConcept(name, pool.vectors[i].copy(), mu, sigma, r))
    return scored


def select_top_k(scored: list[ScoredConcept], K: int,
                 tau_c: float = DEFAULT_TAU_C,
                 tau_r: float = DEFAULT_TAU_R) -> ConceptPool:
    """Top K by R descending, ties broken by name ascending.

    Zero-R concepts are used only to fill out K, with a warning.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not scored:
        raise ValueError("no concepts to select from")
    ranked = sorted(scored, key=lambda c: (-c.R, c.name))
    chosen = ranked[:K]
    n_zero = sum(1 for c in chosen if c.R == 0.0)
    if n_zero:
        warnings.warn(f"{n_zero} of {len(chosen)} selected concepts have zero "
                      "relevance; pool is padded with filler", stacklevel=2)
    return ConceptPool(chosen, tau_c=tau_c, tau_r=tau_r, K=K)


def build_pool(candidates: EmbeddingTable, labels: EmbeddingTable, K: int,
               tau_c: float = DEFAULT_TAU_C,
               tau_r: float = DEFAULT_TAU_R) -> ConceptPool:
    survivors = dedup(candidates, tau_c)
    log.info("dedup kept %d of %d candidates", len(survivors), len(candidates))
    scored = relevance(survivors, labels, tau_r)
    return select_top_k(scored, K, tau_c=tau_c, tau_r=tau_r)


# ---------------------------------------------------------------------------
# serialization: embeddings ride along inline as base64 float32
# ---------------------------------------------------------------------------

def _encode_vec(v: np.ndarray) -> str:
    return base64.b64encode(np.asarray(v, dtype="<f4").tobytes()).decode("ascii")


def _decode_vec(s: str, d: int) -> np.ndarray:
    raw = base64.b64decode(s.encode("ascii"))
    if len(raw) != d * 4:
        raise ValueError("corrupt concept embedding")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def pool_to_dict(pool: ConceptPool) -> dict:
    d = pool.dim if len(pool) else 0
    return {
        "tau_c": pool.tau_c,
        "tau_r": pool.tau_r,
        "K": pool.K,
        "dim": d,
        "concepts": [{
            "name": c.name,
            "mu": c.mu,
            "sigma": c.sigma,
            "R": c.R,
            "embedding": _encode_vec(c.embedding),
        } for c in pool.concepts],
    }


def pool_from_dict(doc: dict) -> ConceptPool:
    d = int(doc["dim"])
    concepts = []
    for rec in doc["concepts"]:
        emb = _decode_vec(rec["embedding"], d)
        norm = np.linalg.norm(emb)
        if norm > 0:
            emb = emb / norm
        concepts.append(ScoredConcept(rec["name"], emb, float(rec["mu"]),
                                      float(rec["sigma"]), float(rec["R"])))
    return ConceptPool(concepts, tau_c=float(doc["tau_c"]),
                       tau_r=float(doc["tau_r"]), K=int(doc["K"]))


def save_pool(path, pool: ConceptPool) -> None:
    Path(path).write_text(json.dumps(pool_to_dict(pool), indent=2),
                          encoding="utf-8")


def load_pool(path) -> ConceptPool:
    return pool_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
