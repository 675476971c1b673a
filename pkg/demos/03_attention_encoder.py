"""Anatomy of the query-focused scoring network.

Pushes one short video through the pipeline a stage at a time: the
convolutional segment encoder, the local and query-conditioned
attentions, the global stream, and the decode back to per-shot scores.
"""

import numpy as np

from chansum.model import (
    ChanConfig,
    ChanParams,
    QueryEmbedding,
    encode_segment,
    forward,
    global_attention_all,
    local_self_attention,
    segment_query_attention,
)
from chansum.segmentation import SegmentBoundaries
from chansum.tensor import Tensor, matmul

config = ChanConfig(
    input_dim=16,
    conv_channels=(8, 16),
    kernel_sizes=(3, 5),
    dilations=(1, 2),
    attention_dim=8,
    fusion_space_dim=16,
    mlp_hidden=8,
    concept_embed_dim=6,
    seed=0,
)
params = ChanParams(config, dtype=np.float64)
rng = np.random.default_rng(1)

n_shots = 23
features = rng.standard_normal((n_shots, config.input_dim))
boundaries = SegmentBoundaries((9, 16), n_shots)
vecs = rng.standard_normal((2, config.concept_embed_dim))
query = QueryEmbedding(("street", "food"), vecs, vecs.mean(axis=0))

print("== segment encoder ==")
a, b = boundaries.segments()[0]
seg = Tensor(features[a:b])
enc = encode_segment(seg, params)
print(f"segment shots {b - a}  ->  encoded {enc.shape}  (two conv blocks, pool /4)")

print()
print("== local self-attention keeps per-dimension weights on the simplex ==")
loc_in = matmul(enc, params.local_in_proj)
loc = local_self_attention(loc_in, params)
print(f"projected {loc_in.shape}  ->  attended {loc.shape}")
lo, hi = loc_in.data.min(axis=0), loc_in.data.max(axis=0)
inside = ((loc.data >= lo - 1e-12) & (loc.data <= hi + 1e-12)).all()
print(f"outputs inside the convex hull of inputs: {inside}")

print()
print("== query-conditioned segment summary ==")
h_q = Tensor(query.h_q)
summary, gamma = segment_query_attention(enc, h_q, params)
print(f"summary {summary.shape}  attention weights {np.round(gamma.data.ravel(), 3)}")
print(f"weights sum to {gamma.data.sum():.6f}")

print()
print("== global stream: each shot attends over all segment summaries ==")
summaries = Tensor(np.vstack([
    segment_query_attention(encode_segment(Tensor(features[s:e]), params), h_q, params)[0].data
    for s, e in boundaries.segments()
]))
glob, g = global_attention_all(enc, summaries, params)
print(f"{enc.shape[0]} shots x {summaries.shape[0]} segments  ->  weights {g.shape}")
print(f"row sums {np.round(g.data.sum(axis=1), 6)}")

print()
print("== end to end: one score per original shot ==")
scores = forward(params, features, boundaries, query)
print(f"{n_shots} shots in  ->  {scores.shape[0]} scores out, all in (0, 1)")
print(f"scores {np.round(scores.data[:8], 3)} ...")
for name, flag in (("without local stream", "disable_local"),
                   ("without global stream", "disable_global")):
    alt = forward(params, features, boundaries, query, **{flag: True})
    print(f"{name:22s} max score shift {np.abs(alt.data - scores.data).max():.4f}")
