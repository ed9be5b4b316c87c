"""Graph-attention classifier over the concept bottleneck.

Two contextualization stacks run over the concept/answer-word graph and
the question/answer-word graph; their answer-word rows are concatenated
with the raw answer-word features into a width-3d reasoning stack whose
pooled output, together with the concept vector, feeds a one-hidden-layer
classifier. Every attention layer adds a learned per-pair structural
prior inside the softmax and replaces the usual feed-forward block with a
dense softmax-gated bank of experts.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import bottleneck as bn
from . import graphs as gr
from .autodiff import Tensor
from .concepts import ConceptPool, ScoredConcept
from .dataio import MULTI_LABEL, SINGLE_LABEL

CKPT_MAGIC = b"MSGTCKPT1"
FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    dim: int = 64
    heads: int = 4
    n_context_layers: int = 2
    n_reason_layers: int = 2
    n_experts: int = 8
    buckets: int = 32
    d_max: float = 64.0
    l_v: float = 1.0
    l_a: float = 1.0
    l_sgt: float = 1.0
    tau_h: float = bn.DEFAULT_TAU_H
    phi: float = bn.DEFAULT_PHI
    lam: float = bn.DEFAULT_LAMBDA
    use_moe: bool = True
    use_qa_graph: bool = True
    use_structural_prior: bool = True
    use_z_in_classifier: bool = True
    task: str = SINGLE_LABEL
    n_classes: int = 2
    n_concepts: int = 0
    seed: int = 0

    def validate(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if self.heads < 1 or self.n_experts < 1:
            raise ValueError("heads and n_experts must be >= 1")
        if self.n_context_layers < 1 or self.n_reason_layers < 1:
            raise ValueError("layer counts must be >= 1")
        if self.task not in (SINGLE_LABEL, MULTI_LABEL):
            raise ValueError(f"unknown task {self.task!r}")
        return self

    @property
    def reason_width(self) -> int:
        return 3 * self.dim if self.use_qa_graph else 2 * self.dim

    @property
    def effective_experts(self) -> int:
        # the no-mixture ablation is the single-expert special case
        return self.n_experts if self.use_moe else 1


# ---------------------------------------------------------------------------
# parameter bundles
# ---------------------------------------------------------------------------

@dataclass
class MoEParams:
    experts: list
    gate_w: Tensor
    gate_b: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for k, e in enumerate(self.experts):
            for name, t in e.items():
                out[f"{prefix}.expert{k}.{name}"] = t
        out[f"{prefix}.gate.w"] = self.gate_w
        out[f"{prefix}.gate.b"] = self.gate_b
        return out


@dataclass
class SGTLayerParams:
    heads: int
    qkv: list
    out_w: Tensor
    out_b: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    moe: MoEParams
    psi_sgt: Tensor | None = None

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for h, maps in enumerate(self.qkv):
            for name, t in maps.items():
                out[f"{prefix}.h{h}.{name}"] = t
        out[f"{prefix}.out.w"] = self.out_w
        out[f"{prefix}.out.b"] = self.out_b
        out[f"{prefix}.ln1.g"] = self.ln1_g
        out[f"{prefix}.ln1.b"] = self.ln1_b
        out[f"{prefix}.ln2.g"] = self.ln2_g
        out[f"{prefix}.ln2.b"] = self.ln2_b
        if self.psi_sgt is not None:
            out[f"{prefix}.psi_sgt"] = self.psi_sgt
        out.update(self.moe.tensors(f"{prefix}.moe"))
        return out


@dataclass
class LayerOutput:
    v_evo: Tensor
    e_evo: Tensor
    head_attn: list
    gate_weights: Tensor


def init_moe(rng: np.random.Generator, width: int, n_experts: int) -> MoEParams:
    experts = []
    for _ in range(n_experts):
        w1, b1 = ad.affine_init(rng, width, 4 * width)
        w2, b2 = ad.affine_init(rng, 4 * width, width)
        experts.append({"w1": w1, "b1": b1, "w2": w2, "b2": b2})
    gate_w, gate_b = ad.affine_init(rng, width, n_experts)
    return MoEParams(experts, gate_w, gate_b)


def init_sgt_layer(rng: np.random.Generator, width: int, heads: int,
                   n_experts: int, buckets: int,
                   with_psi: bool) -> SGTLayerParams:
    if width % heads != 0:
        raise ValueError("layer width must be divisible by heads")
    d_h = width // heads
    qkv = []
    for _ in range(heads):
        wq, bq = ad.affine_init(rng, width, d_h)
        wk, bk = ad.affine_init(rng, width, d_h)
        wv, bv = ad.affine_init(rng, width, d_h)
        qkv.append({"wq": wq, "bq": bq, "wk": wk, "bk": bk, "wv": wv, "bv": bv})
    out_w, out_b = ad.affine_init(rng, width, width)
    return SGTLayerParams(
        heads=heads,
        qkv=qkv,
        out_w=out_w,
        out_b=out_b,
        ln1_g=Tensor(np.ones(width), requires_grad=True),
        ln1_b=Tensor(np.zeros(width), requires_grad=True),
        ln2_g=Tensor(np.ones(width), requires_grad=True),
        ln2_b=Tensor(np.zeros(width), requires_grad=True),
        moe=init_moe(rng, width, n_experts),
        psi_sgt=gr.init_psi(heads, buckets) if with_psi else None,
    )


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def moe_forward(x: Tensor, moe: MoEParams) -> tuple[Tensor, Tensor]:
    """Dense expert mixture: every expert runs, the gate softmax weighs
    them per row. Returns (output, gate weights) — gates kept for audits."""
    gates = ad.softmax_rows(ad.affine(x, moe.gate_w, moe.gate_b))
    out = None
    for k, e in enumerate(moe.experts):
        hidden = ad.gelu(ad.affine(x, e["w1"], e["b1"]))
        expert_out = ad.affine(hidden, e["w2"], e["b2"])
        weighted = ad.mul(ad.slice_cols(gates, k, k + 1), expert_out)
        out = weighted if out is None else ad.add(out, weighted)
    return out, gates


def expert_forward(x: Tensor, expert: dict) -> Tensor:
    """One expert alone, bypassing the gate."""
    return ad.affine(ad.gelu(ad.affine(x, expert["w1"], expert["b1"])),
                     expert["w2"], expert["b2"])


def sgt_attention(v: Tensor, e_st: Tensor,
                  layer: SGTLayerParams) -> tuple[Tensor, Tensor, list]:
    """Multi-head attention with an additive per-pair prior.

    Per head: rows of softmax(prior + Q Kᵀ / sqrt(d_h)) mix the value
    rows; heads concatenate and project. Also returns the head-mean
    attention (the structural handoff) and each head's rows.
    """
    n, width = v.shape
    if e_st.shape != (layer.heads, n, n):
        raise ValueError(f"structural prior shape {e_st.shape} does not match "
                         f"({layer.heads}, {n}, {n})")
    d_h = width // layer.heads
    inv_sqrt = 1.0 / np.sqrt(d_h)
    head_outs = []
    head_attn = []
    e_mean = None
    for h, maps in enumerate(layer.qkv):
        q = ad.affine(v, maps["wq"], maps["bq"])
        k = ad.affine(v, maps["wk"], maps["bk"])
        val = ad.affine(v, maps["wv"], maps["bv"])
        scores = ad.add(ad.take_plane(e_st, h),
                        ad.scale(ad.matmul(q, ad.transpose(k)), inv_sqrt))
        attn = ad.softmax_rows(scores)
        head_attn.append(attn)
        head_outs.append(ad.matmul(attn, val))
        e_mean = attn if e_mean is None else ad.add(e_mean, attn)
    update = ad.affine(ad.concat_cols(head_outs), layer.out_w, layer.out_b)
    return update, ad.scale(e_mean, 1.0 / layer.heads), head_attn


def sgt_layer(v: Tensor, e_st: Tensor, layer: SGTLayerParams) -> LayerOutput:
    """Attention, then the expert mixture, post-norm residuals around both."""
    update, e_evo, head_attn = sgt_attention(v, e_st, layer)
    x1 = ad.layer_norm_rows(ad.add(v, update), layer.ln1_g, layer.ln1_b)
    ffn_out, gates = moe_forward(x1, layer.moe)
    v_evo = ad.layer_norm_rows(ad.add(x1, ffn_out), layer.ln2_g, layer.ln2_b)
    return LayerOutput(v_evo, e_evo, head_attn, gates)


def rescale_prior(e_evo: Tensor, l_sgt: float, psi_sgt: Tensor,
                  buckets: int, d_max: float) -> Tensor:
    """Turn the previous layer's attention into the next structural prior:
    scale, bucket, look up per-head values. Bucketing is piecewise
    constant, so gradient flows into the table only."""
    idx = gr.bucket_indices(l_sgt * e_evo.data, buckets, d_max)
    return ad.bucket_lookup(psi_sgt, idx)


def _zero_prior(heads: int, n: int) -> Tensor:
    return Tensor(np.zeros((heads, n, n)))


def contextualize(v0: Tensor, e_st_first: Tensor | None,
                  layers: list[SGTLayerParams], config: ModelConfig) -> list[LayerOutput]:
    """Run the layer stack; the first layer consumes the graph's own prior,
    deeper layers re-derive theirs from the previous attention map."""
    if not layers:
        raise ValueError("need at least one layer")
    n = v0.shape[0]
    outputs = []
    e_st = e_st_first if e_st_first is not None else _zero_prior(layers[0].heads, n)
    for i, layer in enumerate(layers):
        if i > 0:
            if config.use_structural_prior and layer.psi_sgt is not None:
                e_st = rescale_prior(outputs[-1].e_evo, config.l_sgt,
                                     layer.psi_sgt, config.buckets, config.d_max)
            else:
                e_st = _zero_prior(layer.heads, n)
        outputs.append(sgt_layer(outputs[-1].v_evo if outputs else v0, e_st, layer))
    return outputs


# ---------------------------------------------------------------------------
# the assembled model
# ---------------------------------------------------------------------------

@dataclass
class ForwardResult:
    p: Tensor
    f: np.ndarray
    f_target: np.ndarray
    clamps: dict
    z: Tensor
    logits: Tensor
    v_reason: Tensor
    v_cls: Tensor
    attn_rows: list = field(default_factory=list)
    gate_rows: list = field(default_factory=list)

    def class_probs(self) -> np.ndarray:
        x = self.logits.data
        if x.ndim != 1:
            raise ValueError("logits must be a vector")
        m = x.max()
        e = np.exp(x - m)
        return e / e.sum()

    def sigmoid_probs(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits.data))


class Model:
    """Owns parameters plus the static graph scaffolding derived from the
    concept pool (QA tokens, topologies, prototypes)."""

    def __init__(self, config: ModelConfig, concept_names: list[str],
                 prototypes: np.ndarray, label_names: list[str]):
        config.validate()
        prototypes = np.asarray(prototypes, dtype=np.float64)
        if prototypes.shape != (config.n_concepts, config.dim):
            raise ValueError("prototype matrix does not match config")
        if len(concept_names) != config.n_concepts:
            raise ValueError("concept name count does not match config")
        if len(label_names) != config.n_classes:
            raise ValueError("label name count does not match config")
        self.config = config
        self.concept_names = list(concept_names)
        self.label_names = list(label_names)
        self.prototypes = prototypes

        rng = np.random.default_rng(config.seed)
        self.bottleneck = bn.init_bottleneck(rng, prototypes)
        self.psi = {
            "ac.side_a": gr.init_psi(config.heads, config.buckets),
            "ac.side_b": gr.init_psi(config.heads, config.buckets),
            "ac.cross": gr.init_psi(config.heads, config.buckets),
            "aq.side_a": gr.init_psi(config.heads, config.buckets),
            "aq.side_b": gr.init_psi(config.heads, config.buckets),
            "aq.cross": gr.init_psi(config.heads, config.buckets),
            "reason": gr.init_psi(config.heads, config.buckets),
        }
        self.ac_layers = [
            init_sgt_layer(rng, config.dim, config.heads, config.effective_experts,
                           config.buckets, with_psi=i > 0)
            for i in range(config.n_context_layers)]
        self.aq_layers = [
            init_sgt_layer(rng, config.dim, config.heads, config.effective_experts,
                           config.buckets, with_psi=i > 0)
            for i in range(config.n_context_layers)]
        self.reason_layers = [
            init_sgt_layer(rng, config.reason_width, config.heads,
                           config.effective_experts, config.buckets, with_psi=i > 0)
            for i in range(config.n_reason_layers)]
        cls_in = config.reason_width + (config.n_concepts
                                        if config.use_z_in_classifier else 0)
        hidden = config.reason_width
        self.cls_w1, self.cls_b1 = ad.affine_init(rng, cls_in, hidden)
        self.cls_w2, self.cls_b2 = ad.affine_init(rng, hidden, config.n_classes)

        # static scaffolding: QA pair and default topologies
        pool = _pool_view(self.concept_names, self.prototypes)
        self.qa = gr.generate_qa(pool, seed=config.seed)
        self.g_aq = gr.build_question_answer_graph(
            self.qa, l_a=config.l_a, buckets=config.buckets, d_max=config.d_max)
        self.g_ac_default = gr.build_concept_answer_graph(
            self.prototypes, self.qa, region_centers=None, l_v=config.l_v,
            l_a=config.l_a, buckets=config.buckets, d_max=config.d_max)
        n_a = len(self.qa.answer_tokens)
        self.g_reason = gr.build_reasoning_graph(
            np.zeros((n_a, config.dim)), np.zeros((n_a, config.dim)),
            np.zeros((n_a, config.dim)), l_a=config.l_a,
            buckets=config.buckets, d_max=config.d_max)

    # -- parameters ---------------------------------------------------------

    def named_tensors(self) -> dict[str, Tensor]:
        out = dict(self.bottleneck.tensors())
        for name, t in self.psi.items():
            out[f"psi.{name}"] = t
        for i, layer in enumerate(self.ac_layers):
            out.update(layer.tensors(f"ac.layer{i}"))
        for i, layer in enumerate(self.aq_layers):
            out.update(layer.tensors(f"aq.layer{i}"))
        for i, layer in enumerate(self.reason_layers):
            out.update(layer.tensors(f"reason.layer{i}"))
        out["cls.w1"] = self.cls_w1
        out["cls.b1"] = self.cls_b1
        out["cls.w2"] = self.cls_w2
        out["cls.b2"] = self.cls_b2
        return out

    def count_params(self) -> int:
        return sum(t.size for t in self.named_tensors().values())

    def classifier_w1(self) -> Tensor:
        """The sparsity-penalized matrix: first affine map of the classifier."""
        return self.cls_w1

    def quantize(self):
        """Round every parameter to float32 precision in place. Shipped
        checkpoints store float32, so this makes in-memory and reloaded
        evaluation bit-identical."""
        for t in self.named_tensors().values():
            t.data = t.data.astype("<f4").astype(np.float64)
        self.prototypes = self.prototypes.astype("<f4").astype(np.float64)
        self.bottleneck.concept_embeddings = self.prototypes
        # fallback pair costs derive from prototypes; rebuild so the cached
        # topology matches what a reloaded checkpoint would compute
        cfg = self.config
        self.g_ac_default = gr.build_concept_answer_graph(
            self.prototypes, self.qa, region_centers=None, l_v=cfg.l_v,
            l_a=cfg.l_a, buckets=cfg.buckets, d_max=cfg.d_max)

    def debug_graphs(self, region_centers=None) -> dict:
        """Topologies plus current structural matrices, JSON-ready."""
        cfg = self.config
        if region_centers is not None:
            g_ac = gr.build_concept_answer_graph(
                self.prototypes, self.qa, region_centers=region_centers,
                l_v=cfg.l_v, l_a=cfg.l_a, buckets=cfg.buckets, d_max=cfg.d_max)
        else:
            g_ac = self.g_ac_default
        out = {
            "concept_answer": gr.graph_to_dict(
                g_ac, self._structural(g_ac, "ac.side_a", "ac.side_b",
                                       "ac.cross").data),
        }
        if cfg.use_qa_graph:
            out["question_answer"] = gr.graph_to_dict(
                self.g_aq, self._structural(self.g_aq, "aq.side_a",
                                            "aq.side_b", "aq.cross").data)
        reason_st = (gr.structural_matrix(self.g_reason, self.psi["reason"])
                     if cfg.use_structural_prior
                     else _zero_prior(cfg.heads, self.g_reason.n_nodes))
        out["reasoning"] = gr.graph_to_dict(self.g_reason, reason_st.data)
        return out

    # -- forward --------------------------------------------------------------

    def _structural(self, graph, side_a: str, side_b: str, cross: str):
        if not self.config.use_structural_prior:
            return _zero_prior(self.config.heads, graph.n_nodes)
        return gr.structural_matrix(graph, self.psi[side_a], self.psi[side_b],
                                    self.psi[cross])

    def forward(self, views: np.ndarray, annotations=None,
                hint_vec: np.ndarray | None = None,
                user_clamps: dict | None = None,
                region_centers=None) -> ForwardResult:
        cfg = self.config
        p = bn.predict_concepts(views, self.bottleneck)
        f = bn.prior_scores(views, self.bottleneck)
        f_target, clamps = bn.apply_interventions(
            f, annotations=annotations, hint=hint_vec,
            concept_embeddings=self.prototypes, tau_h=cfg.tau_h)
        if user_clamps:
            for k, val in user_clamps.items():
                if not (0 <= int(k) < cfg.n_concepts):
                    raise IndexError(f"clamp index {k} out of range")
                clamps[int(k)] = float(val)
        z = bn.assemble_z(p, clamps)

        # concept/answer stack: concept node k carries z_k-scaled prototype
        c_feat = ad.mul(ad.reshape(z, (cfg.n_concepts, 1)), Tensor(self.prototypes))
        v0_ac = ad.concat_rows([c_feat, Tensor(self.qa.answer_features)])
        if region_centers is not None:
            g_ac = gr.build_concept_answer_graph(
                self.prototypes, self.qa, region_centers=region_centers,
                l_v=cfg.l_v, l_a=cfg.l_a, buckets=cfg.buckets, d_max=cfg.d_max)
        else:
            g_ac = self.g_ac_default
        ac_outs = contextualize(
            v0_ac, self._structural(g_ac, "ac.side_a", "ac.side_b", "ac.cross"),
            self.ac_layers, cfg)
        answer_rows_ac = np.arange(g_ac.n1, g_ac.n_nodes)
        ac_guided = ad.gather_rows(ac_outs[-1].v_evo, answer_rows_ac)

        parts = [Tensor(self.qa.answer_features), ac_guided]
        aq_outs = []
        if cfg.use_qa_graph:
            v0_aq = Tensor(np.concatenate(
                [self.qa.question_features, self.qa.answer_features], axis=0))
            aq_outs = contextualize(
                v0_aq,
                self._structural(self.g_aq, "aq.side_a", "aq.side_b", "aq.cross"),
                self.aq_layers, cfg)
            answer_rows_aq = np.arange(self.g_aq.n1, self.g_aq.n_nodes)
            if answer_rows_aq.size != answer_rows_ac.size:
                raise ValueError("answer-row mismatch between graphs")
            parts.append(ad.gather_rows(aq_outs[-1].v_evo, answer_rows_aq))

        v0_reason = ad.concat_cols(parts)
        e_st_reason = (gr.structural_matrix(self.g_reason, self.psi["reason"])
                       if cfg.use_structural_prior
                       else _zero_prior(cfg.heads, self.g_reason.n_nodes))
        reason_outs = contextualize(v0_reason, e_st_reason,
                                    self.reason_layers, cfg)
        v_cls = reason_outs[-1].v_evo
        pooled = ad.mean_axis(v_cls, 0)

        feat_parts = [ad.reshape(pooled, (1, cfg.reason_width))]
        if cfg.use_z_in_classifier:
            feat_parts.append(ad.reshape(z, (1, cfg.n_concepts)))
        row = ad.concat_cols(feat_parts) if len(feat_parts) > 1 else feat_parts[0]
        hidden = ad.gelu(ad.affine(row, self.cls_w1, self.cls_b1))
        logits = ad.reshape(ad.affine(hidden, self.cls_w2, self.cls_b2),
                            (cfg.n_classes,))

        all_outs = ac_outs + aq_outs + reason_outs
        return ForwardResult(
            p=p, f=f, f_target=f_target, clamps=clamps, z=z, logits=logits,
            v_reason=v0_reason, v_cls=v_cls,
            attn_rows=[a for o in all_outs for a in o.head_attn],
            gate_rows=[o.gate_weights for o in all_outs],
        )


def _pool_view(names: list[str], prototypes: np.ndarray) -> ConceptPool:
    return ConceptPool(
        [ScoredConcept(n, prototypes[i], 0.0, 0.0, 0.0)
         for i, n in enumerate(names)],
        tau_c=0.0, tau_r=0.0, K=len(names))


def build_model(config: ModelConfig, pool: ConceptPool,
                label_names: list[str]) -> Model:
    config.n_concepts = len(pool)
    config.n_classes = len(label_names)
    if len(pool) and pool.dim != config.dim:
        raise ValueError("pool embedding width does not match config dim")
    return Model(config, pool.names, pool.embeddings, label_names)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: Model, train_config: dict | None = None) -> None:
    """magic · u32 header-len · header JSON · u32 index-len · index JSON ·
    concatenated float32 little-endian blobs, tensor names sorted."""
    named = dict(model.named_tensors())
    named["const.prototypes"] = Tensor(model.prototypes)
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "concept_names": model.concept_names,
        "label_names": model.label_names,
    }
    if train_config is not None:
        header["train_config"] = train_config
    index = {}
    blobs = bytearray()
    for name in sorted(named):
        data = np.ascontiguousarray(named[name].data, dtype="<f4")
        index[name] = {"offset": len(blobs), "shape": list(data.shape)}
        blobs += data.tobytes()
    header_b = json.dumps(header, sort_keys=True).encode("utf-8")
    index_b = json.dumps(index, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header_b)))
        fh.write(header_b)
        fh.write(struct.pack("<I", len(index_b)))
        fh.write(index_b)
        fh.write(bytes(blobs))


def load_checkpoint(path) -> Model:
    raw = Path(path).read_bytes()
    if len(raw) < len(CKPT_MAGIC) + 4 or raw[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError("not a checkpoint file")
    pos = len(CKPT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (ilen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    index = json.loads(raw[pos:pos + ilen].decode("utf-8"))
    pos += ilen
    blobs = raw[pos:]

    def read_blob(name):
        if name not in index:
            raise ValueError(f"checkpoint missing tensor {name}")
        rec = index[name]
        shape = tuple(rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = rec["offset"]
        if start + count * 4 > len(blobs):
            raise ValueError("corrupt checkpoint payload")
        flat = np.frombuffer(blobs, dtype="<f4", count=count, offset=start)
        return flat.reshape(shape).astype(np.float64)

    config = ModelConfig(**header["config"])
    prototypes = read_blob("const.prototypes")
    model = Model(config, header["concept_names"], prototypes,
                  header["label_names"])
    named = model.named_tensors()
    missing = set(named) - set(index)
    extra = set(index) - set(named) - {"const.prototypes"}
    if missing or extra:
        raise ValueError(f"checkpoint tensor set mismatch: missing={sorted(missing)} "
                         f"extra={sorted(extra)}")
    for name, t in named.items():
        data = read_blob(name)
        if data.shape != t.data.shape:
            raise ValueError(f"shape mismatch for {name}: "
                             f"{data.shape} vs {t.data.shape}")
        t.data = data
    return model


def read_header(path) -> dict:
    """Checkpoint metadata (config, names, training settings) without
    loading any tensors."""
    raw = Path(path).read_bytes()
    if len(raw) < len(CKPT_MAGIC) + 4 or raw[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError("not a checkpoint file")
    pos = len(CKPT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, pos)
    return json.loads(raw[pos + 4:pos + 4 + hlen].decode("utf-8"))


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
