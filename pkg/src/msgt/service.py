"""HTTP inference service: one loaded checkpoint, stateless requests.

Endpoints live under /api/v1. A prediction runs one fused forward over
all of a sample's views; an intervention is the same forward with clamp
overrides applied to the concept vector. Parameters are never mutated by
request handling, so concurrent clients cannot observe each other. The
payload builder is a plain function so the command line can emit the
exact same JSON without a server.
"""

from __future__ import annotations

import logging

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import __version__
from . import bottleneck as bn
from . import model as md
from .concepts import ConceptPool, load_pool
from .dataio import (SINGLE_LABEL, DatasetManifest, EmbeddingTable,
                     load_embedding_file, load_manifest, lookup_or_pseudo)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ClampSpec(BaseModel):
    concept_index: int | None = None
    concept_name: str | None = None
    value: float


class InterveneRequest(BaseModel):
    sample_id: str
    clamps: list[ClampSpec] = []
    hint_text: str | None = None


class PredictRequest(BaseModel):
    sample_id: str


def resolve_clamp(concept_index, concept_name, value,
                  model: md.Model) -> tuple[int, float]:
    """Validate one clamp request entry; raises ValueError with a client
    message on any malformed field."""
    if (concept_index is None) == (concept_name is None):
        raise ValueError("clamp needs exactly one of concept_index or "
                         "concept_name")
    if concept_name is not None:
        if concept_name not in model.concept_names:
            raise ValueError(f"unknown concept name {concept_name!r}")
        k = model.concept_names.index(concept_name)
    else:
        k = int(concept_index)
        if not (0 <= k < model.config.n_concepts):
            raise ValueError(f"clamp index {k} out of range "
                             f"[0, {model.config.n_concepts})")
    if value not in (0.0, 1.0):
        raise ValueError(f"clamp value must be 0 or 1, got {value!r}")
    return k, float(value)


def predict_payload(model: md.Model, manifest: DatasetManifest,
                    views: EmbeddingTable, sample_id: str,
                    user_clamps: dict | None = None,
                    hint_text: str | None = None,
                    model_version: str = "unversioned") -> dict:
    """The /predict and /intervene response body.

    Clamp precedence, lowest to highest: sample annotations, hint
    matches, explicit user clamps. Raises KeyError for an unknown sample.
    """
    cfg = model.config
    sample = manifest.by_id(sample_id)
    clamps: dict[int, float] = {}
    sources: dict[int, str] = {}
    # expert annotations act as inference-time clamps
    for k, a in enumerate(sample.annotations or []):
        if a is not None:
            clamps[k] = float(a)
            sources[k] = "annotation"
    if hint_text:
        hint_vec = lookup_or_pseudo(views, hint_text, cfg.dim, cfg.seed)
        for k, v in bn.hint_clamps(hint_vec, model.prototypes,
                                   cfg.tau_h).items():
            clamps[k] = v
            sources[k] = "hint"
    for k, v in (user_clamps or {}).items():
        clamps[k] = v
        sources[k] = "user"
    view_vecs = np.stack([views.lookup(v) for v in sample.views])
    res = model.forward(view_vecs, user_clamps=clamps,
                        region_centers=sample.region_centers)
    probs = (res.class_probs() if cfg.task == SINGLE_LABEL
             else res.sigmoid_probs())
    z = res.z.data
    return {
        "schema_version": SCHEMA_VERSION,
        "sample_id": sample_id,
        "model_version": model_version,
        "task": cfg.task,
        "concept_scores": [
            {"index": k, "name": model.concept_names[k], "score": float(z[k])}
            for k in range(cfg.n_concepts)],
        "clamped": [
            {"index": k, "name": model.concept_names[k],
             "value": res.clamps[k], "source": sources.get(k, "user")}
            for k in sorted(res.clamps)],
        "class_probs": [
            {"index": c, "name": model.label_names[c], "prob": float(probs[c])}
            for c in range(cfg.n_classes)],
    }


def build_app(model: md.Model, manifest: DatasetManifest,
              views: EmbeddingTable, pool: ConceptPool | None = None,
              model_version: str = "unversioned") -> FastAPI:
    if pool is not None and pool.names != model.concept_names:
        raise ValueError("pool does not match checkpoint concepts")
    cfg = model.config
    app = FastAPI(title="msgt inference service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    def run(sample_id: str, user_clamps: dict, hint_text: str | None) -> dict:
        try:
            return predict_payload(model, manifest, views, sample_id,
                                   user_clamps=user_clamps,
                                   hint_text=hint_text,
                                   model_version=model_version)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"unknown sample_id {sample_id!r}")

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "schema_version": SCHEMA_VERSION,
                "package_version": __version__,
                "model_version": model_version, "task": cfg.task,
                "n_concepts": cfg.n_concepts, "n_classes": cfg.n_classes}

    @app.get("/api/v1/concepts")
    def concepts():
        scored = {c.name: c for c in pool.concepts} if pool is not None else {}
        out = []
        for k, name in enumerate(model.concept_names):
            rec = {"index": k, "name": name}
            if name in scored:
                c = scored[name]
                rec.update(mu=c.mu, sigma=c.sigma, relevance=c.R)
            out.append(rec)
        return {"concepts": out}

    @app.get("/api/v1/samples")
    def samples():
        return {"samples": [
            {"id": s.id, "split": s.split, "n_views": len(s.views),
             "has_annotations": s.annotations is not None,
             "has_hint": s.hint_text is not None}
            for s in manifest.samples]}

    @app.post("/api/v1/predict")
    def predict(req: PredictRequest):
        return run(req.sample_id, {}, None)

    @app.post("/api/v1/intervene")
    def intervene(req: InterveneRequest):
        user = {}
        for spec in req.clamps:
            try:
                k, v = resolve_clamp(spec.concept_index, spec.concept_name,
                                     spec.value, model)
            except ValueError as e:
                raise HTTPException(status_code=400, detail=str(e))
            user[k] = v
        return run(req.sample_id, user, req.hint_text)

    return app


def app_from_paths(ckpt_path, manifest_path, views_path,
                   pool_path=None) -> FastAPI:
    model = md.load_checkpoint(ckpt_path)
    manifest = load_manifest(manifest_path)
    views = load_embedding_file(views_path)
    pool = load_pool(pool_path) if pool_path else None
    return build_app(model, manifest, views, pool=pool,
                     model_version=md.checkpoint_hash(ckpt_path))


def serve(ckpt_path, manifest_path, views_path, pool_path=None,
          host: str = "127.0.0.1", port: int = 8008):
    import uvicorn
    app = app_from_paths(ckpt_path, manifest_path, views_path, pool_path)
    log.info("serving on %s:%d", host, port)
    uvicorn.run(app, host=host, port=port, log_level="warning")
