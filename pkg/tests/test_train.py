"""Training loop: labels, schedule, determinism, overfit, ablation wiring."""

import json

import numpy as np
import pytest

from chansum.data import SynthConfig, synth_generate
from chansum.model import ChanConfig
from chansum.train import (
    TrainSettings,
    evaluate_model,
    fit,
    query_embeddings,
    save_history,
    segment_videos,
    shot_labels,
)

OVERFIT_DATA = SynthConfig(
    n_videos=4,
    shots_per_video=24,
    n_concepts=2,
    n_queries=1,
    feature_dim=12,
    concept_embed_dim=6,
    signal_strength=6.0,
    noise_level=0.3,
    scene_min_len=3,
    scene_max_len=5,
    reference_budget=20,
    # scenes carry either both concepts or neither, so supervision
    # against the single query is fully binary
    concept_count_probs=(0.5, 0.0, 0.5, 0.0),
    min_relevant_shots=2,
    seed=21,
)

TINY_MODEL = dict(
    input_dim=12,
    conv_channels=(4, 8),
    kernel_sizes=(3, 5),
    dilations=(1, 2),
    attention_dim=4,
    fusion_space_dim=8,
    mlp_hidden=8,
    concept_embed_dim=6,
    selection_policy="budget",
    budget=10,
    seed=0,
)

TINY_TRAIN = dict(
    batch_size=2,
    learning_rate=3e-3,
    decay_factor=1.0,
    seed=0,
    fold=0,
    max_segments=6,
    max_segment_len=10,
)


@pytest.fixture(scope="module")
def dataset():
    return synth_generate(OVERFIT_DATA)


def test_shot_labels_are_overlap_fractions():
    concepts = [set(), {"a"}, {"a", "b"}, {"b", "c"}, {"c"}]
    labels = shot_labels(concepts, ("a", "b"))
    np.testing.assert_array_equal(labels, [0.0, 0.5, 1.0, 0.5, 0.0])


def test_settings_validation():
    with pytest.raises(ValueError):
        TrainSettings(epochs=0).validate()
    with pytest.raises(ValueError):
        TrainSettings(learning_rate=-1.0).validate()
    with pytest.raises(ValueError):
        TrainSettings(decay_factor=1.5).validate()


def test_segment_videos_covers_every_video(dataset):
    settings = TrainSettings(**TINY_TRAIN, epochs=1, patience=1)
    bounds = segment_videos(dataset, settings)
    assert set(bounds) == set(dataset.video_ids)
    for vid, b in bounds.items():
        assert sum(b.segment_lengths()) == dataset.video(vid).n_shots
        assert max(b.segment_lengths()) <= TINY_TRAIN["max_segment_len"]


def test_query_embeddings_cover_every_query(dataset):
    table = query_embeddings(dataset)
    assert set(table) == set(dataset.queries)
    for pair, q in table.items():
        assert q.concept_vectors.shape == (2, dataset.concept_embed_dim)
        np.testing.assert_allclose(q.h_q, q.concept_vectors.mean(axis=0))


def test_fit_overfits_binary_labels(dataset):
    settings = TrainSettings(**TINY_TRAIN, epochs=100, patience=100)
    _, history = fit(dataset, ChanConfig(**TINY_MODEL), settings)
    losses = [h["loss"] for h in history if "loss" in h]
    assert len(losses) == 100  # 2 train videos x 1 query / batch 2 = 1 step per epoch
    assert losses[-1] < 0.05
    assert losses[-1] < losses[0]


def test_fit_is_deterministic(dataset):
    settings = TrainSettings(**TINY_TRAIN, epochs=8, patience=8)
    p1, h1 = fit(dataset, ChanConfig(**TINY_MODEL), settings)
    p2, h2 = fit(dataset, ChanConfig(**TINY_MODEL), settings)
    assert h1 == h2
    for (_, a), (_, b) in zip(p1.named_parameters(), p2.named_parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def test_learning_rate_schedule(dataset):
    settings = TrainSettings(**{**TINY_TRAIN, "decay_factor": 0.8}, epochs=4, patience=4)
    _, history = fit(dataset, ChanConfig(**TINY_MODEL), settings)
    for h in history:
        if "loss" in h:
            np.testing.assert_allclose(h["lr"], 3e-3 * 0.8 ** h["epoch"], rtol=1e-12)


def test_epoch_records_carry_validation_metrics(dataset):
    settings = TrainSettings(**TINY_TRAIN, epochs=3, patience=3)
    _, history = fit(dataset, ChanConfig(**TINY_MODEL), settings)
    epoch_ends = [h for h in history if h.get("event") == "epoch_end"]
    assert len(epoch_ends) == 3
    for h in epoch_ends:
        assert 0.0 <= h["val_f1"] <= 1.0
        assert 0.0 <= h["val_precision"] <= 1.0
        assert 0.0 <= h["val_recall"] <= 1.0


def test_returned_params_are_the_best_validation_state(dataset):
    settings = TrainSettings(**TINY_TRAIN, epochs=12, patience=12)
    params, history = fit(dataset, ChanConfig(**TINY_MODEL), settings)
    best = max(h["val_f1"] for h in history if h.get("event") == "epoch_end")
    bounds = segment_videos(dataset, settings)
    val_id = dataset.video_ids[1]  # fold 0 validates on the second video
    metrics = evaluate_model(dataset, [val_id], params, bounds)
    np.testing.assert_allclose(metrics.f1, best, atol=1e-12)


def test_early_stopping_cuts_epochs(dataset):
    impatient = TrainSettings(**TINY_TRAIN, epochs=60, patience=2)
    _, history = fit(dataset, ChanConfig(**TINY_MODEL), impatient)
    epoch_ends = [h for h in history if h.get("event") == "epoch_end"]
    assert len(epoch_ends) < 60


def test_ablated_fit_runs_and_keeps_disabled_weights_frozen(dataset):
    cfg = ChanConfig(**TINY_MODEL)
    for flag, prefixes in [
        ("disable_local", ("local.",)),
        ("disable_global", ("seg.", "glob.")),
    ]:
        settings = TrainSettings(**TINY_TRAIN, epochs=2, patience=2, **{flag: True})
        params, _ = fit(dataset, cfg, settings)
        init = type(params)(cfg, dtype=params.dtype, rng=np.random.default_rng(settings.seed))
        for (name, p), (_, q) in zip(params.named_parameters(), init.named_parameters()):
            if name.startswith(prefixes):
                np.testing.assert_array_equal(p.data, q.data, err_msg=name)


def test_fit_rejects_bad_datasets(dataset):
    empty = type(dataset)(
        root=dataset.root,
        feature_dim=dataset.feature_dim,
        concept_embed_dim=dataset.concept_embed_dim,
        vocabulary=dataset.vocabulary,
        embeddings=dataset.embeddings,
        queries=[],
        videos=[],
        references={},
    )
    with pytest.raises(ValueError):
        fit(empty, ChanConfig(**TINY_MODEL), TrainSettings(**TINY_TRAIN, epochs=1, patience=1))
    three = type(dataset)(
        root=dataset.root,
        feature_dim=dataset.feature_dim,
        concept_embed_dim=dataset.concept_embed_dim,
        vocabulary=dataset.vocabulary,
        embeddings=dataset.embeddings,
        queries=dataset.queries,
        videos=dataset.videos[:3],
        references=dataset.references,
    )
    with pytest.raises(ValueError):
        fit(three, ChanConfig(**TINY_MODEL), TrainSettings(**TINY_TRAIN, epochs=1, patience=1))


def test_evaluate_model_reports_requested_videos(dataset):
    params_cfg = ChanConfig(**TINY_MODEL)
    settings = TrainSettings(**TINY_TRAIN, epochs=1, patience=1)
    params, _ = fit(dataset, params_cfg, settings)
    bounds = segment_videos(dataset, settings)
    ids = dataset.video_ids[:2]
    metrics = evaluate_model(dataset, ids, params, bounds)
    assert [v.video_id for v in metrics.videos] == ids
    assert 0.0 <= metrics.f1 <= 1.0


def test_save_history_writes_jsonl(dataset, tmp_path):
    settings = TrainSettings(**TINY_TRAIN, epochs=2, patience=2)
    _, history = fit(dataset, ChanConfig(**TINY_MODEL), settings)
    path = tmp_path / "log.jsonl"
    save_history(path, history)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(history)
    assert all(isinstance(json.loads(line), dict) for line in lines)
