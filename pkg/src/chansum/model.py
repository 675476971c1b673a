"""The query-focused summarization network.

Pipeline per video: temporal segments are encoded independently by two
convolutional blocks (parallel dilated branches, channel concatenation,
tanh, temporal max-pool). Each segment's encoding then feeds three
streams sharing one parameter set across segments:

* local self-attention inside the segment (per-dimension pairwise
  attention in a projected space),
* a query-conditioned segment summary vector (attention of the query
  over the segment's shots),
* global attention of every shot over all segment summaries.

The three streams are channel-concatenated and decoded by transposed
convolutions back to the original shot count, and each recovered shot
feature is scored against each query concept by projecting both into a
shared space, taking the elementwise product, and passing a small MLP
with a sigmoid output. A shot's query score is the mean of its two
concept scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .segmentation import SegmentBoundaries
from .tensor import (
    Tensor,
    add,
    concat,
    conv1d_dilated,
    matmul,
    max_pool1d,
    mul,
    no_grad,
    reshape,
    scale,
    sigmoid,
    softmax,
    sum_along,
    tanh,
    transposed_conv1d,
)

CHECKPOINT_VERSION = 1


class UnknownConceptError(KeyError):
    """A concept id has no embedding vector."""


@dataclass
class ChanConfig:
    """Architecture hyperparameters.

    Defaults are the full-scale settings; tests shrink every dimension.
    Each convolutional block runs one branch per (kernel_size, dilation)
    pair and splits the block's output channels evenly across branches.
    """

    input_dim: int = 2048
    conv_channels: tuple = (256, 512)
    kernel_sizes: tuple = (3, 5)
    dilations: tuple = (1, 2)
    pool_window: int = 2
    attention_dim: int = 256
    fusion_space_dim: int = 512
    mlp_hidden: int = 256
    concept_embed_dim: int = 300
    selection_policy: str = "threshold"  # "threshold" or "budget"
    threshold: float = 0.5
    budget: int = 30
    seed: int = 0

    @property
    def n_branches(self) -> int:
        return len(self.kernel_sizes)

    @property
    def encoder_dim(self) -> int:
        return self.conv_channels[-1]

    @property
    def fused_dim(self) -> int:
        # conv stream + local stream + global stream
        return self.encoder_dim + self.attention_dim + self.encoder_dim

    @property
    def deconv_taps(self) -> int:
        return 2 * self.pool_window

    def validate(self):
        dims = {
            "input_dim": self.input_dim,
            "attention_dim": self.attention_dim,
            "fusion_space_dim": self.fusion_space_dim,
            "mlp_hidden": self.mlp_hidden,
            "concept_embed_dim": self.concept_embed_dim,
            "pool_window": self.pool_window,
        }
        for name, value in dims.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if len(self.kernel_sizes) != len(self.dilations):
            raise ValueError("kernel_sizes and dilations must pair up")
        if not self.conv_channels:
            raise ValueError("need at least one convolutional block")
        for c in self.conv_channels:
            if c <= 0 or c % self.n_branches != 0:
                raise ValueError(
                    f"block channels {c} must divide evenly across {self.n_branches} branches"
                )
        for k in self.kernel_sizes:
            if k % 2 == 0 or k <= 0:
                raise ValueError(f"kernel size {k} must be odd and positive")
        if self.selection_policy not in ("threshold", "budget"):
            raise ValueError(f"unknown selection policy {self.selection_policy!r}")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie strictly between 0 and 1")
        if self.budget <= 0:
            raise ValueError("budget must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ChanConfig":
        cfg = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})
        cfg.validate()
        return cfg


@dataclass
class QueryEmbedding:
    """A concept pair with its vectors; h_q is their arithmetic mean."""

    concept_ids: tuple
    concept_vectors: np.ndarray  # 2 x embed_dim
    h_q: np.ndarray  # embed_dim

    @classmethod
    def from_table(cls, embeddings: dict, concept_a: str, concept_b: str) -> "QueryEmbedding":
        for c in (concept_a, concept_b):
            if c not in embeddings:
                raise UnknownConceptError(c)
        vecs = np.stack([np.asarray(embeddings[concept_a], dtype=np.float64),
                         np.asarray(embeddings[concept_b], dtype=np.float64)])
        return cls((concept_a, concept_b), vecs, vecs.mean(axis=0))


def _xavier(rng, shape, fan_in, fan_out, dtype) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class ChanParams:
    """All trainable parameters, in a fixed documented order.

    The order of :meth:`named_parameters` defines the checkpoint layout:
    conv filters (block-major, then branch), the local-attention input
    projection, local-attention P/W1/W2/b, segment-attention v/W1/W2/b,
    global-attention v/W1/W2/b, deconv filters, the two relevance
    projections, then the MLP. Attention parameters are one shared set
    used by every segment.
    """

    def __init__(self, config: ChanConfig, dtype=np.float32, rng=None):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype)
        if rng is None:
            rng = np.random.default_rng(config.seed)
        d_c = config.attention_dim
        enc = config.encoder_dim
        emb = config.concept_embed_dim
        fus = config.fusion_space_dim
        taps = config.deconv_taps

        self.conv_filters = []
        in_ch = config.input_dim
        for channels in config.conv_channels:
            branch_out = channels // config.n_branches
            branches = []
            for k in config.kernel_sizes:
                branches.append(
                    _xavier(rng, (k, in_ch, branch_out), k * in_ch, k * branch_out, self.dtype)
                )
            self.conv_filters.append(branches)
            in_ch = channels

        self.local_in_proj = _xavier(rng, (enc, d_c), enc, d_c, self.dtype)
        self.local_P = _xavier(rng, (d_c, d_c), d_c, d_c, self.dtype)
        self.local_W1 = _xavier(rng, (d_c, d_c), d_c, d_c, self.dtype)
        self.local_W2 = _xavier(rng, (d_c, d_c), d_c, d_c, self.dtype)
        self.local_b = _zeros((d_c,), self.dtype)

        self.seg_v = _xavier(rng, (d_c, 1), d_c, 1, self.dtype)
        self.seg_W1 = _xavier(rng, (enc, d_c), enc, d_c, self.dtype)
        self.seg_W2 = _xavier(rng, (emb, d_c), emb, d_c, self.dtype)
        self.seg_b = _zeros((d_c,), self.dtype)

        self.glob_v = _xavier(rng, (d_c, 1), d_c, 1, self.dtype)
        self.glob_W1 = _xavier(rng, (enc, d_c), enc, d_c, self.dtype)
        self.glob_W2 = _xavier(rng, (enc, d_c), enc, d_c, self.dtype)
        self.glob_b = _zeros((d_c,), self.dtype)

        self.deconv_filters = []
        in_ch = config.fused_dim
        for _ in config.conv_channels:
            self.deconv_filters.append(
                _xavier(rng, (taps, in_ch, fus), taps * in_ch, taps * fus, self.dtype)
            )
            in_ch = fus

        self.score_Wf = _xavier(rng, (fus, fus), fus, fus, self.dtype)
        self.score_Wc = _xavier(rng, (emb, fus), emb, fus, self.dtype)
        self.mlp_W1 = _xavier(rng, (fus, config.mlp_hidden), fus, config.mlp_hidden, self.dtype)
        self.mlp_b1 = _zeros((config.mlp_hidden,), self.dtype)
        self.mlp_W2 = _xavier(rng, (config.mlp_hidden, 1), config.mlp_hidden, 1, self.dtype)
        self.mlp_b2 = _zeros((1,), self.dtype)

    def named_parameters(self) -> list:
        items = []
        for b, branches in enumerate(self.conv_filters):
            for i, f in enumerate(branches):
                items.append((f"conv{b}.branch{i}.filter", f))
        items += [
            ("local.in_proj", self.local_in_proj),
            ("local.P", self.local_P),
            ("local.W1", self.local_W1),
            ("local.W2", self.local_W2),
            ("local.b", self.local_b),
            ("seg.v", self.seg_v),
            ("seg.W1", self.seg_W1),
            ("seg.W2", self.seg_W2),
            ("seg.b", self.seg_b),
            ("glob.v", self.glob_v),
            ("glob.W1", self.glob_W1),
            ("glob.W2", self.glob_W2),
            ("glob.b", self.glob_b),
        ]
        for j, f in enumerate(self.deconv_filters):
            items.append((f"deconv{j}.filter", f))
        items += [
            ("score.W_f", self.score_Wf),
            ("score.W_c", self.score_Wc),
            ("mlp.W1", self.mlp_W1),
            ("mlp.b1", self.mlp_b1),
            ("mlp.W2", self.mlp_W2),
            ("mlp.b2", self.mlp_b2),
        ]
        return items

    def astype(self, dtype) -> "ChanParams":
        """Copy with every parameter cast to ``dtype``."""
        clone = ChanParams(self.config, dtype=dtype)
        for (_, dst), (_, src) in zip(clone.named_parameters(), self.named_parameters()):
            dst.data = src.data.astype(clone.dtype)
        return clone

    def state_arrays(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_arrays(self, state: dict):
        for name, p in self.named_parameters():
            src = state[name]
            if src.shape != p.data.shape:
                raise ValueError(f"{name}: shape {src.shape} does not match {p.data.shape}")
            p.data = src.astype(self.dtype).copy()


def conv_block_forward(x: Tensor, params: ChanParams, block_index: int) -> Tensor:
    """One block: parallel dilated branches, concat, tanh, max-pool."""
    if x.shape[0] == 0:
        raise ValueError("empty segment")
    cfg = params.config
    branches = [
        conv1d_dilated(x, f, dilation=cfg.dilations[i])
        for i, f in enumerate(params.conv_filters[block_index])
    ]
    h = branches[0] if len(branches) == 1 else concat(branches, axis=1)
    return max_pool1d(tanh(h), cfg.pool_window)


def encode_segment(x: Tensor, params: ChanParams) -> Tensor:
    for block_index in range(len(params.config.conv_channels)):
        x = conv_block_forward(x, params, block_index)
    return x


def local_self_attention(projected: Tensor, params: ChanParams) -> Tensor:
    """Per-dimension pairwise attention among a segment's shots.

    ``projected`` is t x d_c (already through the input projection). The
    alignment volume is t x t x d_c; softmax runs over the second axis,
    so each output position mixes all positions per dimension.
    """
    t, d_c = projected.shape
    if t == 0:
        raise ValueError("empty segment")
    a = matmul(projected, params.local_W1)
    b = matmul(projected, params.local_W2)
    pair = add(add(reshape(a, (t, 1, d_c)), reshape(b, (1, t, d_c))), params.local_b)
    scores = matmul(tanh(pair), params.local_P)  # t x t x d_c
    gamma = softmax(scores, axis=1)
    return sum_along(mul(gamma, reshape(projected, (1, t, d_c))), axis=1)


def segment_query_attention(encoded: Tensor, h_q: Tensor, params: ChanParams):
    """Query-conditioned summary of one segment.

    Returns (summary vector, attention weights); the summary is a convex
    combination of the segment's shot encodings.
    """
    t = encoded.shape[0]
    if t == 0:
        raise ValueError("empty segment")
    emb = params.config.concept_embed_dim
    a = matmul(encoded, params.seg_W1)
    bq = matmul(reshape(h_q, (1, emb)), params.seg_W2)
    e = matmul(tanh(add(add(a, bq), params.seg_b)), params.seg_v)  # t x 1
    gamma = softmax(e, axis=0)
    summary = sum_along(mul(gamma, encoded), axis=0)
    return summary, gamma


def global_attention_all(encoded: Tensor, summaries: Tensor, params: ChanParams):
    """Attention of each shot over all segment summaries.

    ``encoded`` is t x d, ``summaries`` is m x d. Returns (t x d output,
    t x m attention weights).
    """
    t = encoded.shape[0]
    m = summaries.shape[0]
    d_c = params.config.attention_dim
    a = matmul(encoded, params.glob_W1)
    b = matmul(summaries, params.glob_W2)
    pair = add(add(reshape(a, (t, 1, d_c)), reshape(b, (1, m, d_c))), params.glob_b)
    e = reshape(matmul(tanh(pair), params.glob_v), (t, m))
    gamma = softmax(e, axis=1)
    return matmul(gamma, summaries), gamma


def global_attention(shot_feature: Tensor, summaries: Tensor, params: ChanParams) -> Tensor:
    """Single-shot form of :func:`global_attention_all`."""
    d = shot_feature.shape[0]
    out, _ = global_attention_all(reshape(shot_feature, (1, d)), summaries, params)
    return reshape(out, (d,))


def _length_chain(seg_len: int, pool_window: int, n_blocks: int) -> list:
    chain = [seg_len]
    for _ in range(n_blocks):
        chain.append(-(-chain[-1] // pool_window))
    return chain


def fuse_and_decode(
    encoded: Tensor, local: Tensor, global_feat: Tensor, seg_len: int, params: ChanParams
) -> Tensor:
    """Concatenate the three streams and decode back to seg_len shots."""
    cfg = params.config
    fused = concat([encoded, local, global_feat], axis=1)
    chain = _length_chain(seg_len, cfg.pool_window, len(cfg.conv_channels))
    if fused.shape[0] != chain[-1]:
        raise RuntimeError(
            f"pooled length {fused.shape[0]} does not match expected {chain[-1]}"
        )
    h = fused
    for j, f in enumerate(params.deconv_filters):
        target = chain[len(params.deconv_filters) - 1 - j]
        h = tanh(transposed_conv1d(h, f, stride=cfg.pool_window, target_length=target))
    if h.shape[0] != seg_len:
        raise RuntimeError(f"decoded length {h.shape[0]} does not match segment length {seg_len}")
    return h


def relevance_scores(decoded: Tensor, concept_vec: Tensor, params: ChanParams) -> Tensor:
    """Sigmoid relevance of every decoded shot to one concept vector."""
    emb = params.config.concept_embed_dim
    pf = matmul(decoded, params.score_Wf)
    pc = matmul(reshape(concept_vec, (1, emb)), params.score_Wc)
    d = mul(pf, pc)
    h = tanh(add(matmul(d, params.mlp_W1), params.mlp_b1))
    return sigmoid(add(matmul(h, params.mlp_W2), params.mlp_b2))


def concept_score(shot_feature: Tensor, concept_vec: Tensor, params: ChanParams) -> Tensor:
    """Relevance of one decoded shot feature to one concept, in (0,1)."""
    fus = params.config.fusion_space_dim
    out = relevance_scores(reshape(shot_feature, (1, fus)), concept_vec, params)
    return reshape(out, (1,))


def query_score(shot_feature: Tensor, query_vecs, params: ChanParams) -> Tensor:
    """Mean of the two concept scores; symmetric in concept order."""
    a, b = query_vecs
    return scale(add(concept_score(shot_feature, a, params), concept_score(shot_feature, b, params)), 0.5)


def forward(
    params: ChanParams,
    features: np.ndarray,
    boundaries: SegmentBoundaries,
    query: QueryEmbedding,
    disable_local: bool = False,
    disable_global: bool = False,
) -> Tensor:
    """Score every shot of a video against a query. Returns an n-vector.

    The ablation switches replace the local or global stream with zeros
    of the same shape, so the fused dimension and every parameter shape
    stay unchanged.
    """
    cfg = params.config
    dtype = params.dtype
    feats = np.asarray(features)
    if feats.ndim != 2 or feats.shape[1] != cfg.input_dim:
        raise ValueError(f"features must be n x {cfg.input_dim}, got {feats.shape}")
    if feats.shape[0] != boundaries.n_shots:
        raise ValueError(
            f"{feats.shape[0]} shots but boundaries describe {boundaries.n_shots}"
        )
    h_q = Tensor(query.h_q.astype(dtype))
    c1 = Tensor(query.concept_vectors[0].astype(dtype))
    c2 = Tensor(query.concept_vectors[1].astype(dtype))

    encodings, locals_, lengths, summaries = [], [], [], []
    for a, b in boundaries.segments():
        seg = Tensor(feats[a:b].astype(dtype))
        enc = encode_segment(seg, params)
        t = enc.shape[0]
        if disable_local:
            loc = Tensor(np.zeros((t, cfg.attention_dim), dtype=dtype))
        else:
            loc = local_self_attention(matmul(enc, params.local_in_proj), params)
        summary, _ = segment_query_attention(enc, h_q, params)
        encodings.append(enc)
        locals_.append(loc)
        lengths.append(b - a)
        summaries.append(reshape(summary, (1, cfg.encoder_dim)))

    summary_mat = summaries[0] if len(summaries) == 1 else concat(summaries, axis=0)
    decoded_parts = []
    for enc, loc, seg_len in zip(encodings, locals_, lengths):
        if disable_global:
            glob = Tensor(np.zeros((enc.shape[0], cfg.encoder_dim), dtype=dtype))
        else:
            glob, _ = global_attention_all(enc, summary_mat, params)
        decoded_parts.append(fuse_and_decode(enc, loc, glob, seg_len, params))
    decoded = decoded_parts[0] if len(decoded_parts) == 1 else concat(decoded_parts, axis=0)

    s1 = relevance_scores(decoded, c1, params)
    s2 = relevance_scores(decoded, c2, params)
    return reshape(scale(add(s1, s2), 0.5), (feats.shape[0],))


def score_shots(
    params: ChanParams,
    features: np.ndarray,
    boundaries: SegmentBoundaries,
    query: QueryEmbedding,
    disable_local: bool = False,
    disable_global: bool = False,
) -> np.ndarray:
    """Inference-mode forward: plain float array, no gradient graph."""
    with no_grad():
        out = forward(params, features, boundaries, query, disable_local, disable_global)
    return out.data.copy()


@dataclass
class SummaryResult:
    """Scores plus the selected shot indices (ascending)."""

    selected: list
    scores: np.ndarray
    policy: str


def select_shots(scores: np.ndarray, policy: str, threshold: float = 0.5, budget: int = 30) -> list:
    """Apply a selection policy to a score vector.

    Threshold keeps every shot scoring at least ``threshold``; budget
    keeps the ``budget`` highest scores, ties resolved to the lower
    index. Indices come back sorted ascending.
    """
    scores = np.asarray(scores)
    if policy == "threshold":
        return [int(i) for i in np.nonzero(scores >= threshold)[0]]
    if policy == "budget":
        k = min(budget, scores.shape[0])
        order = np.argsort(-scores, kind="stable")[:k]
        return sorted(int(i) for i in order)
    raise ValueError(f"unknown selection policy {policy!r}")


def summarize(
    params: ChanParams,
    features: np.ndarray,
    boundaries: SegmentBoundaries,
    query: QueryEmbedding,
    policy: str = None,
    threshold: float = None,
    budget: int = None,
    disable_local: bool = False,
    disable_global: bool = False,
) -> SummaryResult:
    """Score a video against a query and select summary shots."""
    cfg = params.config
    policy = cfg.selection_policy if policy is None else policy
    threshold = cfg.threshold if threshold is None else threshold
    budget = cfg.budget if budget is None else budget
    scores = score_shots(params, features, boundaries, query, disable_local, disable_global)
    return SummaryResult(select_shots(scores, policy, threshold, budget), scores, policy)


def save_checkpoint(path, params: ChanParams, extra: dict = None) -> None:
    """Write a checkpoint directory: manifest.json + params.bin.

    The binary blob is every parameter raveled in row-major order and
    concatenated in :meth:`ChanParams.named_parameters` order, stored as
    little-endian 32-bit floats.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    named = params.named_parameters()
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "dtype": str(params.dtype),
        "parameters": [{"name": n, "shape": list(p.shape)} for n, p in named],
    }
    if extra:
        manifest["extra"] = extra
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(root / "params.bin", "wb") as fh:
        for _, p in named:
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path) -> ChanParams:
    """Read a checkpoint directory back into parameters."""
    root = Path(path)
    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{root}: unsupported checkpoint version {manifest.get('version')!r}")
    config = ChanConfig.from_dict(manifest["config"])
    params = ChanParams(config, dtype=np.dtype(manifest["dtype"]))
    with open(root / "params.bin", "rb") as fh:
        blob = fh.read()
    offset = 0
    state = {}
    for spec_entry, (name, p) in zip(manifest["parameters"], params.named_parameters()):
        if spec_entry["name"] != name or tuple(spec_entry["shape"]) != p.shape:
            raise ValueError(f"{root}: parameter layout mismatch at {name}")
        count = int(np.prod(p.shape)) if p.shape else 1
        chunk = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        state[name] = chunk.reshape(p.shape).astype(params.dtype)
    if offset != len(blob):
        raise ValueError(f"{root}: params.bin has {len(blob) - offset} trailing bytes")
    params.load_state_arrays(state)
    return params
