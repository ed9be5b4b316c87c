"""Command-line entry points: msgt <command> ...

Commands cover the whole artifact lifecycle: embed phrases, build a
concept pool, materialize demo fixtures, train, evaluate, sweep experts,
predict (with optional interventions and graph dumps), and serve HTTP.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import concepts as cp
from . import model as md
from . import training as tr
from .dataio import (EmbeddingTable, load_embedding_file, load_manifest,
                     pseudo_embed, read_phrases, save_embedding_file)

log = logging.getLogger(__name__)


def _die(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _load_configs(path):
    doc = json.loads(Path(path).read_text())
    model_cfg = md.ModelConfig(**doc.get("model", {}))
    train_cfg = tr.TrainConfig(**doc.get("train", {}))
    return model_cfg, train_cfg


def cmd_embed(args) -> int:
    phrases = read_phrases(args.phrases)
    rows = np.stack([pseudo_embed(p, args.dim, args.seed) for p in phrases])
    table = EmbeddingTable(phrases, rows, normalized=True)
    save_embedding_file(args.out, table)
    print(f"wrote {len(table)} embeddings of width {args.dim} to {args.out}")
    return 0


def cmd_pool_build(args) -> int:
    candidates = load_embedding_file(args.candidate_emb)
    labels = load_embedding_file(args.labels_emb)
    if args.candidates:
        wanted = read_phrases(args.candidates)
        missing = [w for w in wanted if w not in candidates]
        if missing:
            return _die(f"phrases without embeddings: {missing[:5]}")
        rows = np.stack([candidates.lookup(w) for w in wanted])
        candidates = EmbeddingTable(wanted, rows, normalized=True)
    pool = cp.build_pool(candidates, labels, K=args.k,
                         tau_c=args.tau_c, tau_r=args.tau_r)
    cp.save_pool(args.out, pool)
    print(f"selected {len(pool)} of {len(candidates)} candidates -> {args.out}")
    for c in pool.concepts:
        print(f"  {c.name}: relevance={c.R:.4f} (mu={c.mu:.4f})")
    return 0


def cmd_fixture(args) -> int:
    from . import fixtures as fx
    bundle = (fx.make_separable_fixture() if args.kind == "separable"
              else fx.make_multilabel_fixture())
    paths = fx.write_fixture_files(bundle, args.out)
    cfg_path = Path(args.out) / "config.json"
    cfg_path.write_text(json.dumps(
        {"model": asdict(bundle.model_config),
         "train": asdict(bundle.train_config)}, indent=2))
    paths["config"] = str(cfg_path)
    for name, p in sorted(paths.items()):
        print(f"{name}: {p}")
    return 0


def cmd_train(args) -> int:
    model_cfg, train_cfg = _load_configs(args.config)
    if args.two_stage:
        train_cfg.two_stage = True
    if args.epochs is not None:
        train_cfg.epochs = args.epochs
    manifest = load_manifest(args.manifest)
    pool = cp.load_pool(args.pool)
    views = load_embedding_file(args.views)
    model, history = tr.run_training(model_cfg, train_cfg, manifest, pool,
                                     views, out_path=args.out)
    first = history.epoch_losses[0] if history.epoch_losses else float("nan")
    last = history.epoch_losses[-1] if history.epoch_losses else float("nan")
    print(f"trained {len(history.epoch_losses)} epochs in "
          f"{history.seconds:.1f}s  loss {first:.4f} -> {last:.4f}")
    print(f"checkpoint: {args.out} ({model.count_params()} params, "
          f"version {md.checkpoint_hash(args.out)})")
    return 0


def cmd_eval(args) -> int:
    model = md.load_checkpoint(args.ckpt)
    manifest = load_manifest(args.manifest)
    views = load_embedding_file(args.views)
    report = tr.evaluate(model, manifest, views, split=args.split)
    doc = report.to_dict()
    doc["model_version"] = md.checkpoint_hash(args.ckpt)
    text = json.dumps(doc, indent=2)
    print(text)
    if args.report:
        Path(args.report).write_text(text)
    return 0


def _parse_sweep(spec: str) -> list[int]:
    key, _, values = spec.partition("=")
    if key.strip() != "experts" or not values:
        raise ValueError(f"unsupported sweep {spec!r}; expected "
                         "experts=<n1>,<n2>,...")
    return [int(v) for v in values.split(",")]


def cmd_ablate(args) -> int:
    model_cfg, train_cfg = _load_configs(args.config)
    manifest = load_manifest(args.manifest)
    pool = cp.load_pool(args.pool)
    views = load_embedding_file(args.views)
    sweep = _parse_sweep(args.sweep)
    rows = tr.ablate_experts(model_cfg, train_cfg, manifest, pool, views,
                             sweep, csv_path=args.out, eval_split=args.split)
    print(f"wrote {len(rows)} rows to {args.out}")
    for r in rows:
        print(f"  experts={r['experts']} params={r['params']} "
              f"top1={r['top1']} macro_f1={r['macro_f1']}")
    return 0


def cmd_predict(args) -> int:
    from .service import predict_payload, resolve_clamp
    model = md.load_checkpoint(args.ckpt)
    manifest = load_manifest(args.manifest)
    views = load_embedding_file(args.views)
    version = md.checkpoint_hash(args.ckpt)
    sample_id = args.sample_id
    user_clamps: dict[int, float] = {}
    hint_text = None
    if args.interventions:
        doc = json.loads(Path(args.interventions).read_text())
        sample_id = doc.get("sample_id", sample_id)
        hint_text = doc.get("hint_text")
        for spec in doc.get("clamps", []):
            k, v = resolve_clamp(spec.get("concept_index"),
                                 spec.get("concept_name"),
                                 spec.get("value"), model)
            user_clamps[k] = v
    if sample_id is None:
        return _die("no sample id: pass --sample-id or put sample_id in "
                    "the interventions file")
    payload = predict_payload(model, manifest, views, sample_id,
                              user_clamps=user_clamps, hint_text=hint_text,
                              model_version=version)
    print(json.dumps(payload, indent=2))
    if args.dump_graph:
        sample = manifest.by_id(sample_id)
        doc = model.debug_graphs(region_centers=sample.region_centers)
        Path(args.dump_graph).write_text(json.dumps(doc))
        print(f"graph dump: {args.dump_graph}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    serve(args.ckpt, args.manifest, args.views, pool_path=args.pool,
          host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msgt",
        description="concept-bottleneck graph-transformer classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="pseudo-embed a phrase file")
    p.add_argument("--phrases", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("pool", help="concept pool operations")
    pool_sub = p.add_subparsers(dest="pool_command", required=True)
    pb = pool_sub.add_parser("build", help="dedup, score, and select concepts")
    pb.add_argument("--candidates", help="optional phrase list to subset")
    pb.add_argument("--candidate-emb", required=True)
    pb.add_argument("--labels-emb", required=True)
    pb.add_argument("--tau-c", type=float, default=cp.DEFAULT_TAU_C)
    pb.add_argument("--tau-r", type=float, default=cp.DEFAULT_TAU_R)
    pb.add_argument("--k", type=int, required=True)
    pb.add_argument("--out", required=True)
    pb.set_defaults(fn=cmd_pool_build)

    p = sub.add_parser("fixture", help="write a synthetic demo dataset")
    p.add_argument("--kind", choices=["separable", "multilabel"],
                   default="separable")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fixture)

    p = sub.add_parser("train", help="train and save a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--two-stage", action="store_true",
                   help="train the concept bottleneck first, then freeze it")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="metrics for a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--report", help="also write the JSON report here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="sweep expert counts, emit CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--sweep", default="experts=2,4,8,16")
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("predict", help="prediction JSON for one sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--sample-id")
    p.add_argument("--interventions",
                   help="JSON file: {sample_id, clamps[], hint_text?}")
    p.add_argument("--dump-graph",
                   help="write node kinds, distances, buckets, structural "
                        "matrices to this path")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--pool")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        return _die(f"missing file: {e.filename}")
    except (ValueError, KeyError) as e:
        return _die(str(e))


if __name__ == "__main__":
    sys.exit(main())
