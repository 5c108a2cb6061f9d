"""The cross-graph-attention classifier.

Pipeline per sample: project node features into a common space, run two
multi-head attention convolutions over each graph, gate nodes with a learned
scorer, attend claim nodes over evidence nodes, mean-pool three ways, and
squash a linear head into a support score in (0, 1).

Graphs are batched block-diagonally: node rows of many samples stack into one
matrix with a per-node membership index, so pooling and cross-attention stay
per-sample while the matmuls run once per batch.
"""

from __future__ import annotations

import json
import math
import struct as _struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import EDGE_FEATURE_DIM, STRUCT_DIM, FeaturedGraph

CONV_VARIANTS = ("gat", "gatv2", "transformer")
CHECKPOINT_FORMAT = "claimgraph-checkpoint"


class EmptyGraphError(ValueError):
    """A sample contained a zero-node graph and cannot be scored."""


@dataclass
class ModelConfig:
    text_dim: int = 768
    hidden_dim: int = 1024
    conv_variant: str = "transformer"
    heads: tuple[int, int] = (4, 2)
    use_edge_features: bool = False
    weighted_embeddings: bool = True
    dtype: str = "float32"

    @property
    def common_dim(self) -> int:
        return self.text_dim + STRUCT_DIM

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def validate(self) -> None:
        if self.conv_variant not in CONV_VARIANTS:
            raise ValueError(f"conv_variant must be one of {CONV_VARIANTS}")
        if self.text_dim not in (384, 768):
            raise ValueError(f"text_dim must be 384 or 768, got {self.text_dim}")
        for h in self.heads:
            if self.hidden_dim % h != 0:
                raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by {h} heads")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> dict:
        return {
            "text_dim": self.text_dim,
            "hidden_dim": self.hidden_dim,
            "conv_variant": self.conv_variant,
            "heads": list(self.heads),
            "use_edge_features": self.use_edge_features,
            "weighted_embeddings": self.weighted_embeddings,
            "dtype": self.dtype,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ModelConfig":
        cfg = ModelConfig(
            text_dim=int(obj["text_dim"]),
            hidden_dim=int(obj["hidden_dim"]),
            conv_variant=str(obj["conv_variant"]),
            heads=tuple(int(h) for h in obj["heads"]),
            use_edge_features=bool(obj["use_edge_features"]),
            weighted_embeddings=bool(obj["weighted_embeddings"]),
            dtype=str(obj["dtype"]),
        )
        cfg.validate()
        return cfg


@dataclass
class ProjectorParams:
    text_w: Tensor
    text_b: Tensor
    struct_w: Tensor
    struct_b: Tensor
    alpha: Tensor
    beta: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("projector.text_w", self.text_w),
            ("projector.text_b", self.text_b),
            ("projector.struct_w", self.struct_w),
            ("projector.struct_b", self.struct_b),
            ("projector.alpha", self.alpha),
            ("projector.beta", self.beta),
        ]


@dataclass
class ConvLayerParams:
    """One attention-convolution layer.

    ``proj`` holds the per-head projection weights fused column-wise: column
    block ``[i*head_dim, (i+1)*head_dim)`` belongs to head ``i``. The small
    per-head attention vectors of the gat/gatv2 variants live in ``head_vecs``.
    """

    variant: str
    n_heads: int
    head_dim: int
    proj: dict[str, Tensor]
    head_vecs: list[dict[str, Tensor]]

    def tensors(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.{key}", t) for key, t in self.proj.items()]
        for i, head in enumerate(self.head_vecs):
            for key, t in head.items():
                out.append((f"{prefix}.head{i}.{key}", t))
        return out


@dataclass
class ModelParams:
    config: ModelConfig
    projector: ProjectorParams
    conv1: ConvLayerParams
    conv2: ConvLayerParams
    scorer_w: Tensor
    scorer_b: Tensor
    cross_q: Tensor
    cross_k: Tensor
    cross_v: Tensor
    clf_w: Tensor
    clf_b: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = self.projector.tensors()
        out += self.conv1.tensors("conv1")
        out += self.conv2.tensors("conv2")
        out += [
            ("scorer.w", self.scorer_w),
            ("scorer.b", self.scorer_b),
            ("cross.q", self.cross_q),
            ("cross.k", self.cross_k),
            ("cross.v", self.cross_v),
            ("classifier.w", self.clf_w),
            ("classifier.b", self.clf_b),
        ]
        return out

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.tensors() if t.requires_grad]


def count_parameters(params: ModelParams) -> int:
    return sum(t.size for t in params.trainable())


_PROJ_KEYS = {
    "transformer": ("q_w", "k_w", "v_w"),
    "gat": ("w",),
    "gatv2": ("w_src", "w_dst"),
}
_VEC_KEYS = {
    "transformer": (),
    "gat": ("a_src", "a_dst"),
    "gatv2": ("a",),
}


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def _init_conv_layer(
    rng: np.random.Generator, variant: str, in_dim: int, n_heads: int, head_dim: int, dtype
) -> ConvLayerParams:
    out_dim = n_heads * head_dim
    proj = {
        key: Tensor(_glorot(rng, in_dim, out_dim, dtype), requires_grad=True)
        for key in _PROJ_KEYS[variant]
    }
    # query and key start as the same map, so attention opens as a similarity
    # kernel; training decouples them freely
    if variant == "transformer":
        proj["k_w"].data = proj["q_w"].data.copy()
    head_vecs = [
        {
            key: Tensor(_glorot(rng, head_dim, 1, dtype), requires_grad=True)
            for key in _VEC_KEYS[variant]
        }
        for _ in range(n_heads)
    ]
    if not _VEC_KEYS[variant]:
        head_vecs = []
    return ConvLayerParams(
        variant=variant, n_heads=n_heads, head_dim=head_dim, proj=proj, head_vecs=head_vecs
    )


def init_params(config: ModelConfig, seed: int, zero_head: bool = True) -> ModelParams:
    """Seeded initialization. The classifier head starts at zero by default so
    an untrained model scores exactly 0.5; pass ``zero_head=False`` where a
    non-degenerate head is needed (gradient checking)."""
    config.validate()
    dtype = config.np_dtype()
    rng = np.random.default_rng(seed)
    d_common = config.common_dim
    hidden = config.hidden_dim

    # Label embeddings arrive unit-L2-normalized, so per-entry scale is
    # 1/sqrt(text_dim); the text projection starts at unit weight variance to
    # restore unit-variance activations (glorot would shrink them ~30x).
    text_limit = math.sqrt(3.0)
    projector = ProjectorParams(
        text_w=Tensor(
            rng.uniform(-text_limit, text_limit, size=(config.text_dim, d_common)).astype(dtype),
            requires_grad=True,
        ),
        text_b=Tensor(np.zeros((1, d_common), dtype=dtype), requires_grad=True),
        struct_w=Tensor(_glorot(rng, STRUCT_DIM, d_common, dtype), requires_grad=True),
        struct_b=Tensor(np.zeros((1, d_common), dtype=dtype), requires_grad=True),
        alpha=Tensor(np.array(1.0, dtype=dtype), requires_grad=config.weighted_embeddings),
        beta=Tensor(np.array(1.0, dtype=dtype), requires_grad=config.weighted_embeddings),
    )
    conv1 = _init_conv_layer(
        rng, config.conv_variant, d_common, config.heads[0], hidden // config.heads[0], dtype
    )
    conv2 = _init_conv_layer(
        rng, config.conv_variant, hidden, config.heads[1], hidden // config.heads[1], dtype
    )
    clf_in = 3 * hidden + (2 * EDGE_FEATURE_DIM if config.use_edge_features else 0)
    if zero_head:
        # neutral start: every node gate and every sample score is exactly 0.5
        clf_w = np.zeros((clf_in, 1), dtype=dtype)
        clf_b = np.zeros((1, 1), dtype=dtype)
        scorer_w = np.zeros((hidden, 1), dtype=dtype)
    else:
        clf_w = _glorot(rng, clf_in, 1, dtype)
        clf_b = rng.uniform(-0.1, 0.1, size=(1, 1)).astype(dtype)
        scorer_w = _glorot(rng, hidden, 1, dtype)
    cross_q = _glorot(rng, hidden, hidden, dtype)  # key starts tied to query, as in the convs
    return ModelParams(
        config=config,
        projector=projector,
        conv1=conv1,
        conv2=conv2,
        scorer_w=Tensor(scorer_w, requires_grad=True),
        scorer_b=Tensor(np.zeros((1, 1), dtype=dtype), requires_grad=True),
        cross_q=Tensor(cross_q, requires_grad=True),
        cross_k=Tensor(cross_q.copy(), requires_grad=True),
        cross_v=Tensor(_glorot(rng, hidden, hidden, dtype), requires_grad=True),
        clf_w=Tensor(clf_w, requires_grad=True),
        clf_b=Tensor(clf_b, requires_grad=True),
    )


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


@dataclass
class GraphBatch:
    """Block-diagonal composition of featured graphs."""

    labels: np.ndarray  # total nodes x text_dim
    structs: np.ndarray  # total nodes x 5
    edge_src: np.ndarray  # unique directed pairs, self-loops included
    edge_dst: np.ndarray
    seg: np.ndarray  # node -> sample index
    n_graphs: int
    edge_feat_means: np.ndarray | None = None  # n_graphs x 7


def make_batch(graphs: list[FeaturedGraph], dtype=np.float64) -> GraphBatch:
    if not graphs:
        raise ValueError("empty batch")
    labels, structs, seg = [], [], []
    pairs: set[tuple[int, int]] = set()
    ef_means = []
    offset = 0
    want_edge_feats = all(g.edge_feats is not None for g in graphs)
    for gi, fg in enumerate(graphs):
        n = fg.n_nodes
        if n == 0:
            raise EmptyGraphError(f"graph {gi} in batch has no nodes")
        labels.append(fg.label_embeddings)
        structs.append(fg.struct)
        seg.extend([gi] * n)
        index = fg.graph.node_index()
        for e in fg.graph.edges:
            pairs.add((index[e.src] + offset, index[e.dst] + offset))
        for i in range(n):
            pairs.add((i + offset, i + offset))
        if want_edge_feats:
            ef = fg.edge_feats
            ef_means.append(ef.mean(axis=0) if len(ef) else np.zeros(EDGE_FEATURE_DIM))
        offset += n
    ordered = sorted(pairs)
    return GraphBatch(
        labels=np.concatenate(labels).astype(dtype),
        structs=np.concatenate(structs).astype(dtype),
        edge_src=np.array([p[0] for p in ordered], dtype=np.int64),
        edge_dst=np.array([p[1] for p in ordered], dtype=np.int64),
        seg=np.array(seg, dtype=np.int64),
        n_graphs=len(graphs),
        edge_feat_means=np.stack(ef_means).astype(dtype) if want_edge_feats else None,
    )


@dataclass
class ForwardDiagnostics:
    """Per-softmax normalization sums collected during a forward pass."""

    softmax_group_sums: list[tuple[str, np.ndarray]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------


def project_nodes(labels: Tensor, structs: Tensor, p: ProjectorParams) -> Tensor:
    """h0 = alpha * textproj(label) + beta * structproj(struct)."""
    ht = ad.add(ad.matmul(labels, p.text_w), p.text_b)
    hs = ad.add(ad.matmul(structs, p.struct_w), p.struct_b)
    return ad.add(ad.mul(ht, p.alpha), ad.mul(hs, p.beta))


def conv_forward(
    h: Tensor,
    edge_src: np.ndarray,
    edge_dst: np.ndarray,
    layer: ConvLayerParams,
    diagnostics: ForwardDiagnostics | None = None,
    tag: str = "conv",
) -> Tensor:
    """One multi-head attention convolution; heads concatenated.

    Each node attends over its in-neighbors plus itself (the caller's edge
    list carries the self-loops). transformer: scaled dot-product; gat:
    additive attention on the shared transform; gatv2: transform the pair,
    nonlinearity, then the attention vector.
    """
    n = h.shape[0]
    dh = layer.head_dim
    full = {key: ad.matmul(h, w) for key, w in layer.proj.items()}
    outs = []
    for hi in range(layer.n_heads):
        lo, hi_col = hi * dh, (hi + 1) * dh
        part = {key: ad.slice_cols(t, lo, hi_col) for key, t in full.items()}
        if layer.variant == "transformer":
            prod = ad.mul(
                ad.gather_rows(part["q_w"], edge_dst), ad.gather_rows(part["k_w"], edge_src)
            )
            scores = ad.scale(ad.row_sum(prod), 1.0 / math.sqrt(dh))
            att = ad.segment_softmax(scores, edge_dst, n)
            msg = ad.mul(ad.gather_rows(part["v_w"], edge_src), att)
        elif layer.variant == "gat":
            x = part["w"]
            vecs = layer.head_vecs[hi]
            s_src = ad.matmul(x, vecs["a_src"])
            s_dst = ad.matmul(x, vecs["a_dst"])
            e = ad.leaky_relu(
                ad.add(ad.gather_rows(s_src, edge_src), ad.gather_rows(s_dst, edge_dst))
            )
            att = ad.segment_softmax(e, edge_dst, n)
            msg = ad.mul(ad.gather_rows(x, edge_src), att)
        else:  # gatv2
            z = ad.leaky_relu(
                ad.add(
                    ad.gather_rows(part["w_src"], edge_src),
                    ad.gather_rows(part["w_dst"], edge_dst),
                )
            )
            e = ad.matmul(z, layer.head_vecs[hi]["a"])
            att = ad.segment_softmax(e, edge_dst, n)
            msg = ad.mul(ad.gather_rows(part["w_src"], edge_src), att)
        outs.append(ad.segment_sum(msg, edge_dst, n))
        if diagnostics is not None:
            sums = np.bincount(edge_dst, weights=att.data.reshape(-1), minlength=n)
            diagnostics.softmax_group_sums.append((f"{tag}.head{hi}", sums))
    return ad.concat(outs, axis=1)


def score_nodes(h: Tensor, scorer_w: Tensor, scorer_b: Tensor) -> Tensor:
    """Gate each node: h_v * sigmoid(linear(h_v))."""
    s = ad.sigmoid(ad.add(ad.matmul(h, scorer_w), scorer_b))
    return ad.mul(h, s)


def cross_attention(
    h_claim: Tensor,
    h_evidence: Tensor,
    params: ModelParams,
    mask: np.ndarray,
    diagnostics: ForwardDiagnostics | None = None,
) -> Tensor:
    """Claim nodes query; evidence nodes provide keys and values."""
    d = params.config.hidden_dim
    q = ad.matmul(h_claim, params.cross_q)
    k = ad.matmul(h_evidence, params.cross_k)
    v = ad.matmul(h_evidence, params.cross_v)
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d))
    att = ad.masked_row_softmax(scores, mask)
    if diagnostics is not None:
        diagnostics.softmax_group_sums.append(("cross", att.data.sum(axis=1)))
    return ad.matmul(att, v)


def forward_batch(
    evidence: GraphBatch,
    claim: GraphBatch,
    params: ModelParams,
    diagnostics: ForwardDiagnostics | None = None,
) -> Tensor:
    """Support scores for a batch, shape (n_graphs, 1), each in (0, 1)."""
    if evidence.n_graphs != claim.n_graphs:
        raise ValueError("evidence and claim batches disagree on sample count")
    cfg = params.config
    dtype = params.clf_w.data.dtype

    # Evidence and claim nodes ride through the shared projector/conv stack as
    # one block-diagonal stack (their edge sets stay disjoint), so every weight
    # matrix is fetched once per batch instead of once per side.
    ne = evidence.labels.shape[0]
    nc = claim.labels.shape[0]
    labels = np.concatenate([evidence.labels, claim.labels]).astype(dtype)
    structs = np.concatenate([evidence.structs, claim.structs]).astype(dtype)
    edge_src = np.concatenate([evidence.edge_src, claim.edge_src + ne])
    edge_dst = np.concatenate([evidence.edge_dst, claim.edge_dst + ne])

    h0 = project_nodes(Tensor(labels), Tensor(structs), params.projector)
    h1 = ad.elu(conv_forward(h0, edge_src, edge_dst, params.conv1, diagnostics, "conv1"))
    h2 = conv_forward(h1, edge_src, edge_dst, params.conv2, diagnostics, "conv2")
    scored = score_nodes(h2, params.scorer_w, params.scorer_b)
    h_ev = ad.gather_rows(scored, np.arange(ne))
    h_cl = ad.gather_rows(scored, np.arange(ne, ne + nc))

    mask = claim.seg[:, None] == evidence.seg[None, :]
    attended = cross_attention(h_cl, h_ev, params, mask, diagnostics)

    b = evidence.n_graphs
    parts = [
        ad.mean_rows(h_ev, evidence.seg, b),
        ad.mean_rows(h_cl, claim.seg, b),
        ad.mean_rows(attended, claim.seg, b),
    ]
    if cfg.use_edge_features:
        if evidence.edge_feat_means is None or claim.edge_feat_means is None:
            raise ValueError("edge features requested but batches carry none")
        parts.append(
            Tensor(
                np.concatenate([evidence.edge_feat_means, claim.edge_feat_means], axis=1).astype(dtype)
            )
        )
    f = ad.concat(parts, axis=1)
    return ad.sigmoid(ad.add(ad.matmul(f, params.clf_w), params.clf_b))


def forward_pair(
    evidence_fg: FeaturedGraph,
    claim_fg: FeaturedGraph,
    params: ModelParams,
    diagnostics: ForwardDiagnostics | None = None,
) -> Tensor:
    """Score one (evidence graph, claim graph) sample; raises on empty graphs."""
    if evidence_fg.n_nodes == 0:
        raise EmptyGraphError("evidence graph has no nodes")
    if claim_fg.n_nodes == 0:
        raise EmptyGraphError("claim graph has no nodes")
    dtype = params.config.np_dtype()
    ev = make_batch([evidence_fg], dtype=dtype)
    cl = make_batch([claim_fg], dtype=dtype)
    return forward_batch(ev, cl, params, diagnostics)


def score_pair(evidence_fg: FeaturedGraph, claim_fg: FeaturedGraph, params: ModelParams) -> float:
    return float(forward_pair(evidence_fg, claim_fg, params).data.reshape(-1)[0])


class StagedPairScorer:
    """Forward evaluator for finite-difference probing of one sample.

    The forward splits into stages keyed by the parameter group each consumes
    (projector, conv1, conv2, scorer, cross, classifier). Probing a parameter
    only re-runs its stage and everything downstream against activations
    cached from the unperturbed pass, which the probe never overwrites.
    Stages run through the same autodiff ops as the regular forward.
    """

    def __init__(self, evidence_fg: FeaturedGraph, claim_fg: FeaturedGraph, params: ModelParams):
        self.params = params
        dtype = params.config.np_dtype()
        ev = make_batch([evidence_fg], dtype=dtype)
        cl = make_batch([claim_fg], dtype=dtype)
        self.ne = ev.labels.shape[0]
        self.nc = cl.labels.shape[0]
        self.labels = Tensor(np.concatenate([ev.labels, cl.labels]).astype(dtype))
        self.structs = Tensor(np.concatenate([ev.structs, cl.structs]).astype(dtype))
        self.edge_src = np.concatenate([ev.edge_src, cl.edge_src + self.ne])
        self.edge_dst = np.concatenate([ev.edge_dst, cl.edge_dst + self.ne])
        self.mask = cl.seg[:, None] == ev.seg[None, :]
        self.ev_seg = ev.seg
        self.cl_seg = cl.seg
        if params.config.use_edge_features:
            self.extra = Tensor(
                np.concatenate([ev.edge_feat_means, cl.edge_feat_means], axis=1).astype(dtype)
            )
        else:
            self.extra = None
        self.cache: list = []
        self.refresh()

    def stage_of(self) -> list[int]:
        """Stage index for each entry of ``params.trainable()``, in order."""
        prefixes = ("projector.", "conv1.", "conv2.", "scorer.", "cross.", "classifier.")
        stages = []
        for name, t in self.params.tensors():
            if not t.requires_grad:
                continue
            stages.append(next(i for i, p in enumerate(prefixes) if name.startswith(p)))
        return stages

    def _stage(self, idx: int, prev):
        p = self.params
        if idx == 0:
            return project_nodes(self.labels, self.structs, p.projector)
        if idx == 1:
            return ad.elu(conv_forward(prev[0], self.edge_src, self.edge_dst, p.conv1))
        if idx == 2:
            return conv_forward(prev[1], self.edge_src, self.edge_dst, p.conv2)
        if idx == 3:
            scored = score_nodes(prev[2], p.scorer_w, p.scorer_b)
            h_ev = ad.gather_rows(scored, np.arange(self.ne))
            h_cl = ad.gather_rows(scored, np.arange(self.ne, self.ne + self.nc))
            return h_ev, h_cl
        if idx == 4:
            h_ev, h_cl = prev[3]
            return cross_attention(h_cl, h_ev, p, self.mask)
        h_ev, h_cl = prev[3]
        parts = [
            ad.mean_rows(h_ev, self.ev_seg, 1),
            ad.mean_rows(h_cl, self.cl_seg, 1),
            ad.mean_rows(prev[4], self.cl_seg, 1),
        ]
        if self.extra is not None:
            parts.append(self.extra)
        f = ad.concat(parts, axis=1)
        return ad.sigmoid(ad.add(ad.matmul(f, p.clf_w), p.clf_b))

    def refresh(self) -> float:
        """Recompute and cache every stage at the current parameter values."""
        vals = []
        for idx in range(6):
            vals.append(self._stage(idx, vals))
        self.cache = vals
        return float(vals[5].data.reshape(-1)[0])

    def eval_from(self, stage: int) -> float:
        """Score with stages before ``stage`` served from the cache."""
        vals = list(self.cache[:stage])
        for idx in range(stage, 6):
            vals.append(self._stage(idx, vals))
        return float(vals[5].data.reshape(-1)[0])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(params: ModelParams, stem: str | Path, seed: int) -> None:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (named f32 tensors)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    for name, t in params.tensors():
        nb = name.encode("utf-8")
        blob += _struct.pack("<I", len(nb))
        blob += nb
        dims = t.data.shape
        blob += _struct.pack("<I", len(dims))
        for d in dims:
            blob += _struct.pack("<I", d)
        blob += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "config": params.config.to_dict(),
        "param_count": count_parameters(params),
        "seed": seed,
        "blob": stem.name + ".bin",
    }
    Path(str(stem) + ".json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    Path(str(stem) + ".bin").write_bytes(bytes(blob))


def load_checkpoint(stem: str | Path) -> tuple[ModelParams, int]:
    """Read a checkpoint pair back; returns (params, seed)."""
    stem = Path(stem)
    manifest = json.loads(Path(str(stem) + ".json").read_text(encoding="utf-8"))
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{stem}.json is not a {CHECKPOINT_FORMAT} manifest")
    config = ModelConfig.from_dict(manifest["config"])
    seed = int(manifest.get("seed", 0))
    params = init_params(config, seed=seed)
    blob = (stem.parent / manifest["blob"]).read_bytes()
    dtype = config.np_dtype()
    off = 0
    loaded: dict[str, np.ndarray] = {}
    while off < len(blob):
        (name_len,) = _struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = _struct.unpack_from("<I", blob, off)
        off += 4
        dims = _struct.unpack_from(f"<{rank}I", blob, off) if rank else ()
        off += 4 * rank
        n = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        loaded[name] = arr.astype(dtype)
    for name, t in params.tensors():
        if name not in loaded:
            raise ValueError(f"checkpoint blob is missing tensor {name!r}")
        if loaded[name].shape != t.data.shape:
            raise ValueError(
                f"tensor {name!r}: checkpoint shape {loaded[name].shape} != model shape {t.data.shape}"
            )
        t.data = loaded[name]
    return params, seed
