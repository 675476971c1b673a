"""Binary feature format, manifest validation, synthetic generator, split."""

import json
import shutil
import struct

import numpy as np
import pytest

from chansum.data import (
    MAGIC,
    BadMagicError,
    NonFiniteValueError,
    SynthConfig,
    TruncatedPayloadError,
    ValidationError,
    load_dataset,
    load_features,
    load_glove,
    query_key,
    split_protocol,
    synth_generate,
    write_dataset,
    write_features,
)

SMALL = dict(
    n_videos=4,
    shots_per_video=60,
    n_concepts=8,
    n_queries=5,
    feature_dim=16,
    concept_embed_dim=8,
    scene_min_len=3,
    scene_max_len=6,
    reference_budget=20,
    min_relevant_shots=3,
    seed=11,
)


# ---------------------------------------------------------------------------
# binary feature format


def test_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(12)
    arr = rng.standard_normal((17, 5)).astype(np.float32)
    path = tmp_path / "x.chf"
    write_features(path, arr)
    back = load_features(path)
    assert back.dtype == np.float32
    assert arr.tobytes() == back.tobytes()


def test_handwritten_file_decodes(tmp_path):
    values = [0.0, 1.5, -2.0, 3.25, 4.0, -0.5]
    blob = MAGIC + struct.pack("<II", 3, 2) + struct.pack("<6f", *values)
    path = tmp_path / "hand.chf"
    path.write_bytes(blob)
    out = load_features(path)
    np.testing.assert_array_equal(out, np.array(values, dtype=np.float32).reshape(3, 2))


def test_empty_matrix_round_trips(tmp_path):
    path = tmp_path / "empty.chf"
    write_features(path, np.empty((0, 4), dtype=np.float32))
    assert load_features(path).shape == (0, 4)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.chf"
    path.write_bytes(b"XHF1" + struct.pack("<II", 1, 1) + struct.pack("<f", 0.0))
    with pytest.raises(BadMagicError):
        load_features(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "short.chf"
    path.write_bytes(MAGIC + b"\x01\x00")
    with pytest.raises(TruncatedPayloadError):
        load_features(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "cut.chf"
    write_features(path, np.ones((3, 2), dtype=np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(TruncatedPayloadError):
        load_features(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "long.chf"
    write_features(path, np.ones((3, 2), dtype=np.float32))
    path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(TruncatedPayloadError):
        load_features(path)


def test_non_finite_payload_rejected(tmp_path):
    path = tmp_path / "nan.chf"
    blob = MAGIC + struct.pack("<II", 1, 2) + struct.pack("<2f", 1.0, float("nan"))
    path.write_bytes(blob)
    with pytest.raises(NonFiniteValueError):
        load_features(path)


def test_write_refuses_non_finite(tmp_path):
    arr = np.ones((2, 2), dtype=np.float32)
    arr[0, 0] = np.inf
    with pytest.raises(NonFiniteValueError):
        write_features(tmp_path / "inf.chf", arr)


def test_write_refuses_wrong_rank(tmp_path):
    with pytest.raises(ValueError):
        write_features(tmp_path / "r.chf", np.ones(5, dtype=np.float32))


# ---------------------------------------------------------------------------
# helpers


def test_query_key_is_order_free():
    assert query_key("tree", "car") == "car|tree"
    assert query_key("car", "tree") == "car|tree"


def test_load_glove_filters_vocabulary(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("car 1.0 2.0\nsky 0.5 0.25\ntree 3.0 4.0\n", encoding="utf-8")
    table = load_glove(path, {"car", "tree"})
    assert set(table) == {"car", "tree"}
    np.testing.assert_array_equal(table["car"], [1.0, 2.0])
    assert table["tree"].dtype == np.float64


# ---------------------------------------------------------------------------
# synthetic generator


def test_generator_is_deterministic():
    a = synth_generate(SynthConfig(**SMALL))
    b = synth_generate(SynthConfig(**SMALL))
    for va, vb in zip(a.videos, b.videos):
        np.testing.assert_array_equal(va.features, vb.features)
        assert va.concepts == vb.concepts
    assert a.queries == b.queries
    assert a.references == b.references


def test_seed_changes_output():
    a = synth_generate(SynthConfig(**SMALL))
    b = synth_generate(SynthConfig(**{**SMALL, "seed": 12}))
    assert any(
        not np.array_equal(va.features, vb.features) for va, vb in zip(a.videos, b.videos)
    )


def test_zero_noise_makes_same_concepts_identical():
    ds = synth_generate(SynthConfig(**{**SMALL, "noise_level": 0.0}))
    for video in ds.videos:
        by_set = {}
        for t, shot in enumerate(video.concepts):
            by_set.setdefault(frozenset(shot), []).append(t)
        for idxs in by_set.values():
            first = video.features[idxs[0]]
            for t in idxs[1:]:
                np.testing.assert_array_equal(video.features[t], first)


def test_concepts_are_temporally_coherent():
    ds = synth_generate(SynthConfig(**SMALL))
    for video in ds.videos:
        transitions = sum(1 for a, b in zip(video.concepts, video.concepts[1:]) if a != b)
        # scenes are at least scene_min_len shots, so transitions are
        # bounded by the scene count
        assert transitions <= -(-SMALL["shots_per_video"] // SMALL["scene_min_len"])


def test_signal_is_linearly_recoverable():
    # at signal/noise = 4 a least-squares probe fit on three videos must
    # rank the held-out video's shots almost perfectly
    ds = synth_generate(SynthConfig(**{**SMALL, "seed": 3}))
    train = np.concatenate([v.features for v in ds.videos[:3]]).astype(np.float64)
    test = ds.videos[3]
    for concept in ds.vocabulary[:4]:
        y_train = np.concatenate(
            [[1.0 if concept in s else 0.0 for s in v.concepts] for v in ds.videos[:3]]
        )
        if y_train.sum() == 0:
            continue
        w, *_ = np.linalg.lstsq(train, y_train, rcond=None)
        scores = test.features.astype(np.float64) @ w
        y = np.array([1.0 if concept in s else 0.0 for s in test.concepts])
        if y.sum() == 0 or y.sum() == len(y):
            continue
        pos, neg = scores[y == 1], scores[y == 0]
        auc = (pos[:, None] > neg[None, :]).mean()
        assert auc > 0.9, f"{concept}: AUC {auc:.3f}"


def test_references_meet_the_relevance_floor():
    ds = synth_generate(SynthConfig(**SMALL))
    for table in ds.references.values():
        for key, shots in table.items():
            assert len(shots) >= SMALL["min_relevant_shots"]
            assert len(shots) <= SMALL["reference_budget"]
            assert shots == sorted(shots)


def test_references_contain_only_relevant_shots():
    ds = synth_generate(SynthConfig(**SMALL))
    for video in ds.videos:
        for a, b in ds.queries:
            for t in ds.references[video.id][query_key(a, b)]:
                assert a in video.concepts[t] or b in video.concepts[t]


def test_infeasible_query_floor_raises():
    with pytest.raises(ValueError):
        synth_generate(SynthConfig(**{**SMALL, "min_relevant_shots": 1000}))


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(**{**SMALL, "concept_count_probs": (0.5, 0.5, 0.5, 0.5)}).validate()
    with pytest.raises(ValueError):
        SynthConfig(**{**SMALL, "scene_min_len": 7, "scene_max_len": 3}).validate()
    with pytest.raises(ValueError):
        SynthConfig(**{**SMALL, "n_concepts": 3, "n_queries": 10}).validate()
    with pytest.raises(ValueError):
        SynthConfig(**{**SMALL, "noise_level": -1.0}).validate()


# ---------------------------------------------------------------------------
# dataset directory round trip and validation


@pytest.fixture(scope="module")
def written(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    synth_generate(SynthConfig(**SMALL), out_dir=root)
    return root


def test_written_dataset_matches_memory(written):
    mem = synth_generate(SynthConfig(**SMALL))
    disk = load_dataset(written)
    assert disk.vocabulary == mem.vocabulary
    assert disk.queries == mem.queries
    assert disk.references == mem.references
    for a, b in zip(disk.videos, mem.videos):
        np.testing.assert_array_equal(a.features, b.features)
        assert a.concepts == b.concepts
    for c in mem.vocabulary:
        np.testing.assert_array_equal(disk.embeddings[c], mem.embeddings[c])


def test_reload_is_idempotent(written):
    a = load_dataset(written)
    b = load_dataset(written)
    assert a.references == b.references
    np.testing.assert_array_equal(a.videos[0].features, b.videos[0].features)


def corrupt(written, tmp_path, edit):
    """Copy the dataset, apply ``edit`` to the parsed manifest, rewrite."""
    root = tmp_path / "ds"
    shutil.copytree(written, root)
    manifest = json.loads((root / "manifest.json").read_text())
    edit(manifest)
    (root / "manifest.json").write_text(json.dumps(manifest))
    return root


@pytest.mark.parametrize(
    "edit",
    [
        lambda m: m.update(version=99),
        lambda m: m.pop("version"),
        lambda m: m["vocabulary"].append(m["vocabulary"][0]),
        lambda m: m["queries"].append(["concept_00", "no_such_concept"]),
        lambda m: m["queries"].append(["concept_00"]),
        lambda m: m["references"].update(ghost_video=next(iter(m["references"].values()))),
        lambda m: next(iter(m["references"].values())).update({"a|b": [0]}),
        lambda m: next(iter(m["references"].values())).__setitem__(
            next(iter(next(iter(m["references"].values())))), [10**6]
        ),
        lambda m: m["embeddings"]["inline"].pop(m["vocabulary"][0]),
        lambda m: m["embeddings"]["inline"].__setitem__(m["vocabulary"][0], [1.0]),
        lambda m: m["videos"][0].update(n_shots=3),
    ],
    ids=[
        "bad-version",
        "missing-version",
        "duplicate-vocab",
        "dangling-query-concept",
        "one-word-query",
        "dangling-reference-video",
        "dangling-reference-query",
        "reference-shot-out-of-range",
        "missing-embedding",
        "wrong-embedding-dim",
        "wrong-shot-count",
    ],
)
def test_manifest_corruption_is_rejected(written, tmp_path, edit):
    root = corrupt(written, tmp_path, edit)
    with pytest.raises(ValidationError):
        load_dataset(root)


def test_annotation_corruption_is_rejected(written, tmp_path):
    root = tmp_path / "ds"
    shutil.copytree(written, root)
    ann_path = root / "annotations" / "video_0.json"
    ann = json.loads(ann_path.read_text())
    ann["concepts"][0] = ["no_such_concept"]
    ann_path.write_text(json.dumps(ann))
    with pytest.raises(ValidationError):
        load_dataset(root)


def test_missing_manifest_is_rejected(tmp_path):
    with pytest.raises(ValidationError):
        load_dataset(tmp_path / "nowhere")


# ---------------------------------------------------------------------------
# split protocol


def test_split_rotates_roles():
    ids = ["a", "b", "c", "d"]
    for fold in range(4):
        split = split_protocol(ids, fold)
        assert split["test"] == [ids[fold]]
        assert split["val"] == [ids[(fold + 1) % 4]]
        assert len(split["train"]) == 2
        everything = split["train"] + split["val"] + split["test"]
        assert sorted(everything) == sorted(ids)


def test_each_video_tests_exactly_once():
    ids = ["a", "b", "c", "d"]
    tested = [split_protocol(ids, f)["test"][0] for f in range(4)]
    assert sorted(tested) == sorted(ids)


def test_split_errors():
    with pytest.raises(ValueError):
        split_protocol(["a", "b", "c"], 0)
    with pytest.raises(ValueError):
        split_protocol(["a", "b", "c", "d"], 4)
