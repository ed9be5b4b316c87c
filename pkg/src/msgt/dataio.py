"""Embedding tables, dataset manifests, and a deterministic pseudo-embedder.

Real encoders live out of process: embeddings arrive precomputed in a
small binary format, and ``pseudo_embed`` stands in for them so the whole
pipeline runs self-contained. Loaded objects are immutable and safe to
share across threads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMB_MAGIC = b"MSGTEMB1"

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_U64 = (1 << 64) - 1

# float32 storage wobbles row norms; verified at this tolerance on load,
# then renormalized in float64 so downstream sees exact unit rows
_STORED_NORM_TOL = 1e-4
_NORM_TOL = 1e-9


def hash64(text: str) -> int:
    """FNV-1a over UTF-8 bytes; stable across platforms and runs."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


def pseudo_embed(text: str, d: int, seed: int = 0) -> np.ndarray:
    """Unit vector that is a pure function of (text, d, seed).

    Counter-based generator keyed by hash64(text) XOR seed, d standard
    normals, ℓ2-normalized.
    """
    if d < 2:
        raise ValueError("pseudo_embed needs d >= 2")
    key = hash64(text) ^ (int(seed) & _U64)
    rng = np.random.Generator(np.random.Philox(key=key))
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


class EmbeddingTable:
    """Named rows of a fixed-width float64 matrix.

    When ``normalized`` every row is an exact-unit vector (1e-9).
    """

    def __init__(self, names: list[str], vectors: np.ndarray, normalized: bool):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a matrix")
        if len(names) != vectors.shape[0]:
            raise ValueError("names/vectors row count mismatch")
        if len(set(names)) != len(names):
            raise ValueError("duplicate embedding name")
        if normalized and len(names):
            norms = np.linalg.norm(vectors, axis=1)
            if np.abs(norms - 1.0).max() > _NORM_TOL:
                raise ValueError("rows marked normalized are not unit norm")
        self.names = list(names)
        self.vectors = vectors
        self.normalized = bool(normalized)
        self._index = {n: i for i, n in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def row_index(self, name: str) -> int:
        if name not in self._index:
            raise KeyError(f"no embedding named {name!r}")
        return self._index[name]

    def lookup(self, name: str) -> np.ndarray:
        return self.vectors[self.row_index(name)]

    @classmethod
    def from_rows(cls, names: list[str], vectors: np.ndarray,
                  normalize: bool = True) -> "EmbeddingTable":
        vectors = np.asarray(vectors, dtype=np.float64)
        if normalize and vectors.size:
            norms = np.linalg.norm(vectors, axis=1, keepdims=True)
            if np.any(norms == 0.0):
                raise ValueError("cannot normalize a zero row")
            vectors = vectors / norms
        return cls(names, vectors, normalized=normalize)


def lookup_or_pseudo(table: EmbeddingTable | None, text: str, d: int,
                     seed: int = 0) -> np.ndarray:
    """Table row when present, deterministic pseudo-embedding otherwise."""
    if table is not None and text in table:
        return table.lookup(text)
    return pseudo_embed(text, d, seed)


def save_embedding_file(path, table: EmbeddingTable) -> None:
    """magic · u32 n · u32 d · u8 flag · NUL-terminated names · f32 rows."""
    for name in table.names:
        if "\x00" in name:
            raise ValueError("embedding names cannot contain NUL")
    blob = bytearray()
    blob += EMB_MAGIC
    blob += struct.pack("<IIB", len(table), table.dim, int(table.normalized))
    for name in table.names:
        blob += name.encode("utf-8") + b"\x00"
    blob += np.ascontiguousarray(table.vectors, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_embedding_file(path) -> EmbeddingTable:
    raw = Path(path).read_bytes()
    if len(raw) < len(EMB_MAGIC) + 9 or raw[:8] != EMB_MAGIC:
        raise ValueError("not an embedding file")
    n, d, flag = struct.unpack_from("<IIB", raw, 8)
    pos = 17
    names = []
    for _ in range(n):
        end = raw.find(b"\x00", pos)
        if end < 0:
            raise ValueError("corrupt payload")
        names.append(raw[pos:end].decode("utf-8"))
        pos = end + 1
    payload = raw[pos:]
    if len(payload) != n * d * 4:
        raise ValueError("corrupt payload")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
    if flag and n:
        norms = np.linalg.norm(vectors, axis=1)
        if np.abs(norms - 1.0).max() > _STORED_NORM_TOL:
            raise ValueError("corrupt payload")
        vectors = vectors / norms[:, None]
    return EmbeddingTable(names, vectors, normalized=bool(flag))


def read_phrases(path) -> list[str]:
    """One phrase per line; blanks dropped, repeats keep first occurrence."""
    seen = set()
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        phrase = line.strip()
        if phrase and phrase not in seen:
            seen.add(phrase)
            out.append(phrase)
    return out


# ---------------------------------------------------------------------------
# dataset manifests
# ---------------------------------------------------------------------------

SINGLE_LABEL = "single-label"
MULTI_LABEL = "multi-label"

_UNCERTAIN_VALUES = {"uncertain", "unknown", -1, None}


@dataclass
class Sample:
    id: str
    views: list[str]
    labels: list[int]
    hint_text: str | None = None
    # per-concept 0/1 flags, None where unannotated
    annotations: list | None = None
    # per-concept (x, y) centers driving spatial edge costs
    region_centers: list | None = None
    split: str = "train"


@dataclass
class DatasetManifest:
    task: str
    label_names: list[str]
    samples: list[Sample] = field(default_factory=list)

    def by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(f"no sample with id {sample_id!r}")

    def split_samples(self, split: str | None):
        if split is None:
            return list(self.samples)
        return [s for s in self.samples if s.split == split]


def _coerce_annotation(value, uncertain_to_negative: bool):
    if value in _UNCERTAIN_VALUES:
        return 0 if uncertain_to_negative else None
    if value in (0, 1, False, True):
        return int(value)
    raise ValueError(f"bad annotation value {value!r}")


def validate_manifest(manifest: DatasetManifest, n_concepts: int | None = None) -> None:
    if manifest.task not in (SINGLE_LABEL, MULTI_LABEL):
        raise ValueError(f"unknown task {manifest.task!r}")
    if not manifest.label_names:
        raise ValueError("label_names is empty")
    n_labels = len(manifest.label_names)
    seen_ids = set()
    for s in manifest.samples:
        if s.id in seen_ids:
            raise ValueError(f"duplicate sample id: {s.id}")
        seen_ids.add(s.id)
        if not s.views:
            raise ValueError(f"sample {s.id} has no views")
        if any(not (0 <= y < n_labels) for y in s.labels):
            raise ValueError(f"label out of range in sample {s.id}")
        if manifest.task == SINGLE_LABEL and len(s.labels) != 1:
            raise ValueError(f"sample {s.id} needs exactly one label")
        if len(set(s.labels)) != len(s.labels):
            raise ValueError(f"repeated label in sample {s.id}")
        if n_concepts is not None:
            if s.annotations is not None and len(s.annotations) != n_concepts:
                raise ValueError(f"annotation length mismatch in sample {s.id}")
            if s.region_centers is not None and len(s.region_centers) != n_concepts:
                raise ValueError(f"region_centers length mismatch in sample {s.id}")


def manifest_from_dict(doc: dict, uncertain_to_negative: bool = True) -> DatasetManifest:
    samples = []
    for rec in doc.get("samples", []):
        if "label" in rec and "labels" in rec:
            raise ValueError(f"sample {rec.get('id')} sets both label and labels")
        if "label" in rec:
            labels = [int(rec["label"])]
        else:
            labels = [int(x) for x in rec.get("labels", [])]
        annotations = rec.get("concept_annotations")
        if annotations is not None:
            annotations = [_coerce_annotation(a, uncertain_to_negative)
                           for a in annotations]
        centers = rec.get("region_centers")
        if centers is not None:
            centers = [(float(x), float(y)) for x, y in centers]
        samples.append(Sample(
            id=str(rec["id"]),
            views=[str(v) for v in rec["views"]],
            labels=labels,
            hint_text=rec.get("hint_text"),
            annotations=annotations,
            region_centers=centers,
            split=str(rec.get("split", "train")),
        ))
    manifest = DatasetManifest(
        task=doc["task"],
        label_names=[str(x) for x in doc["label_names"]],
        samples=samples,
    )
    validate_manifest(manifest)
    return manifest


def load_manifest(path, uncertain_to_negative: bool = True) -> DatasetManifest:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return manifest_from_dict(doc, uncertain_to_negative)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    samples = []
    for s in manifest.samples:
        rec: dict = {"id": s.id, "views": list(s.views), "split": s.split}
        if manifest.task == SINGLE_LABEL:
            rec["label"] = s.labels[0]
        else:
            rec["labels"] = list(s.labels)
        if s.hint_text is not None:
            rec["hint_text"] = s.hint_text
        if s.annotations is not None:
            rec["concept_annotations"] = list(s.annotations)
        if s.region_centers is not None:
            rec["region_centers"] = [[x, y] for x, y in s.region_centers]
        samples.append(rec)
    return {"task": manifest.task, "label_names": list(manifest.label_names),
            "samples": samples}


def save_manifest(path, manifest: DatasetManifest) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2),
                          encoding="utf-8")
