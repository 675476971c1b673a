"""Training loop: mini-batches, learning-rate decay, early stopping.

A training example is one (video, query) pair; its per-shot label is
the fraction of the query's two concepts present in the shot, so labels
live in {0, 0.5, 1}. Batches average the per-pair losses and take one
optimizer step. After every epoch the learning rate is multiplied by
the decay factor and the model is scored on the validation video; the
parameters with the best validation F1 are kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .data import Dataset, query_key, split_protocol
from .evaluation import DatasetMetrics, evaluate_dataset
from .model import ChanConfig, ChanParams, QueryEmbedding, forward, summarize
from .optim import Adam
from .segmentation import kts_segment
from .tensor import Tensor, add, bce_loss, scale


@dataclass
class TrainSettings:
    """Optimization and protocol knobs, separate from the architecture."""

    epochs: int = 30
    batch_size: int = 5
    learning_rate: float = 1e-4
    decay_factor: float = 0.8
    patience: int = 10
    fold: int = 0
    seed: int = 0
    dtype: str = "float32"
    max_segments: int = 20
    max_segment_len: int = 200
    penalty: float = 1.0
    disable_local: bool = False
    disable_global: bool = False

    def validate(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.patience <= 0:
            raise ValueError("epochs, batch_size and patience must be positive")
        if self.learning_rate <= 0 or not 0 < self.decay_factor <= 1:
            raise ValueError("learning_rate must be positive and decay_factor in (0,1]")

    def to_dict(self) -> dict:
        return asdict(self)


def shot_labels(concepts, query_pair) -> np.ndarray:
    """Fraction of the query's concepts present in each shot."""
    pair = set(query_pair)
    return np.asarray([len(pair & set(shot)) / 2.0 for shot in concepts])


def segment_videos(dataset: Dataset, settings: TrainSettings) -> dict:
    """Temporal boundaries for every video, computed once and reused."""
    return {
        v.id: kts_segment(
            v.features,
            max_segments=settings.max_segments,
            max_segment_len=settings.max_segment_len,
            penalty=settings.penalty,
        )
        for v in dataset.videos
    }


def query_embeddings(dataset: Dataset) -> dict:
    return {
        q: QueryEmbedding.from_table(dataset.embeddings, q[0], q[1]) for q in dataset.queries
    }


def evaluate_model(
    dataset: Dataset,
    video_ids,
    params: ChanParams,
    boundaries: dict,
    embeddings: dict = None,
    policy: str = None,
    threshold: float = None,
    budget: int = None,
    disable_local: bool = False,
    disable_global: bool = False,
) -> DatasetMetrics:
    """Summarize every (video, query) pair and score against references."""
    embeddings = query_embeddings(dataset) if embeddings is None else embeddings
    candidates, references, annotations = {}, {}, {}
    for vid in video_ids:
        video = dataset.video(vid)
        refs = dataset.references.get(vid, {})
        candidates[vid] = {}
        references[vid] = {}
        annotations[vid] = video.concepts
        for pair in dataset.queries:
            key = query_key(*pair)
            if key not in refs:
                continue
            result = summarize(
                params,
                video.features,
                boundaries[vid],
                embeddings[pair],
                policy=policy,
                threshold=threshold,
                budget=budget,
                disable_local=disable_local,
                disable_global=disable_global,
            )
            candidates[vid][key] = result.selected
            references[vid][key] = refs[key]
    return evaluate_dataset(candidates, references, annotations)


def _trainable_parameters(params, settings):
    """Parameters that participate in the graph under the ablation flags.

    A disabled stream contributes zeros, so its weights never receive
    gradients; the optimizer's missing-gradient check requires they be
    left out.  Segment summaries feed only the global stream, so
    disabling it idles the segment-attention weights too.
    """
    skip = []
    if settings.disable_local:
        skip.append("local.")
    if settings.disable_global:
        skip.extend(["seg.", "glob."])
    named = params.named_parameters()
    return [(name, p) for name, p in named if not any(name.startswith(s) for s in skip)]


def fit(dataset: Dataset, config: ChanConfig, settings: TrainSettings):
    """Train on the fold's two training videos; keep the best-val params.

    Returns (params, history) where history is a list of JSON-ready
    records: one per optimizer step (epoch, step, loss, lr) and one per
    epoch end carrying the validation F1.
    """
    config.validate()
    settings.validate()
    if not dataset.videos or not dataset.queries:
        raise ValueError("empty dataset: need videos and queries to train on")
    split = split_protocol(dataset.video_ids, settings.fold)
    boundaries = segment_videos(dataset, settings)
    embeddings = query_embeddings(dataset)

    params = ChanParams(config, dtype=np.dtype(settings.dtype), rng=np.random.default_rng(settings.seed))
    optimizer = Adam(
        _trainable_parameters(params, settings),
        learning_rate=settings.learning_rate,
        decay_factor=settings.decay_factor,
    )
    pairs = [(vid, q) for vid in split["train"] for q in dataset.queries]
    label_cache = {
        (vid, q): shot_labels(dataset.video(vid).concepts, q).astype(params.dtype)
        for vid, q in pairs
    }
    shuffle_rng = np.random.default_rng(settings.seed + 1)

    history = []
    best_f1, best_state, stale = -1.0, None, 0
    step = 0
    for epoch in range(settings.epochs):
        order = shuffle_rng.permutation(len(pairs))
        for start in range(0, len(order), settings.batch_size):
            batch = order[start : start + settings.batch_size]
            optimizer.zero_grad()
            losses = []
            for idx in batch:
                vid, q = pairs[idx]
                video = dataset.video(vid)
                scores = forward(
                    params,
                    video.features,
                    boundaries[vid],
                    embeddings[q],
                    disable_local=settings.disable_local,
                    disable_global=settings.disable_global,
                )
                losses.append(bce_loss(scores, Tensor(label_cache[(vid, q)])))
            loss = losses[0]
            for extra in losses[1:]:
                loss = add(loss, extra)
            loss = scale(loss, 1.0 / len(losses))
            loss.backward()
            optimizer.step()
            history.append(
                {
                    "epoch": epoch,
                    "step": step,
                    "loss": float(loss.data),
                    "lr": optimizer.state.learning_rate,
                }
            )
            step += 1
        val = evaluate_model(
            dataset,
            split["val"],
            params,
            boundaries,
            embeddings,
            disable_local=settings.disable_local,
            disable_global=settings.disable_global,
        )
        history.append(
            {
                "epoch": epoch,
                "event": "epoch_end",
                "val_f1": val.f1,
                "val_precision": val.precision,
                "val_recall": val.recall,
                "lr": optimizer.state.learning_rate,
            }
        )
        if val.f1 > best_f1:
            best_f1, best_state, stale = val.f1, params.state_arrays(), 0
        else:
            stale += 1
        optimizer.decay_lr()
        if stale >= settings.patience:
            break
    if best_state is not None:
        params.load_state_arrays(best_state)
    return params, history


def save_history(path, history) -> None:
    """Write training history as JSON lines, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in history:
            fh.write(json.dumps(record) + "\n")
