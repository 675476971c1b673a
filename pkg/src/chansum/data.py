"""Dataset formats, loaders, split protocol, and a synthetic generator.

Directory layout of a dataset::

    <root>/
        manifest.json
        features/<video_id>.chf
        annotations/<video_id>.json

Feature files are binary: magic bytes ``CHF1``, then the shot count and
feature dimension as unsigned 32-bit little-endian integers, then
``n * d`` little-endian 32-bit floats, row-major by shot.

``manifest.json`` schema (``version`` is mandatory, currently 1)::

    {
      "version": 1,
      "feature_dim": int,
      "concept_embed_dim": int,
      "vocabulary": [concept, ...],
      "embeddings": {"inline": {concept: [float, ...]}}
                    or {"glove_path": "relative/path.txt"},
      "queries": [[concept, concept], ...],
      "videos": [{"id": str, "features": path, "annotations": path,
                  "n_shots": int}, ...],
      "references": {video_id: {query_key: [shot index, ...]}}
    }

Per-video ``annotations/<id>.json``::

    {"version": 1, "video_id": str, "concepts": [[concept, ...], ...]}

with one concept list per shot. Query keys are the two concepts sorted
and joined with ``|`` (see :func:`query_key`). One shot stands for five
seconds of video; shot index 0 is the first five seconds.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"CHF1"
MANIFEST_VERSION = 1


class DatasetError(Exception):
    """Base class for dataset format and validation failures."""


class BadMagicError(DatasetError):
    """Feature file does not start with the expected magic bytes."""


class TruncatedPayloadError(DatasetError):
    """Feature file ends before the header-declared payload does."""


class NonFiniteValueError(DatasetError):
    """Feature payload contains NaN or infinity."""


class ValidationError(DatasetError):
    """Manifest or annotation cross-references are inconsistent."""


def write_features(path, features) -> None:
    """Write a shot-feature matrix in the binary feature format."""
    arr = np.ascontiguousarray(np.asarray(features, dtype=np.float32))
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValueError(f"refusing to write non-finite features to {path}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4").tobytes())


def load_features(path) -> np.ndarray:
    """Read a binary feature file back into an ``n x d`` float32 matrix."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, got {blob[:4]!r}")
    if len(blob) < 12:
        raise TruncatedPayloadError(f"{path}: header cut short at {len(blob)} bytes")
    n, d = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * n * d
    if len(blob) != expected:
        raise TruncatedPayloadError(
            f"{path}: header declares {n}x{d} ({expected} bytes), file has {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(n, d)
    if not np.isfinite(data).all():
        raise NonFiniteValueError(f"{path}: payload contains non-finite values")
    return np.ascontiguousarray(data.astype(np.float32))


def query_key(concept_a: str, concept_b: str) -> str:
    """Canonical key for an unordered concept pair."""
    return "|".join(sorted((concept_a, concept_b)))


def load_glove(path, vocabulary) -> dict:
    """Read word vectors from a GloVe-style text file.

    Each line is a word followed by its vector components, separated by
    spaces. Only words in ``vocabulary`` are kept.
    """
    wanted = set(vocabulary)
    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if parts[0] in wanted:
                table[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
    return table


@dataclass
class VideoRecord:
    """One video: features plus dense per-shot concept annotation."""

    id: str
    features: np.ndarray  # n_shots x feature_dim, float32, finite
    concepts: list  # n_shots concept sets

    @property
    def n_shots(self) -> int:
        return self.features.shape[0]


@dataclass
class Dataset:
    """A fully validated dataset in memory."""

    root: Path
    feature_dim: int
    concept_embed_dim: int
    vocabulary: list
    embeddings: dict  # concept -> float64 vector
    queries: list  # (concept, concept) tuples, sorted within the pair
    videos: list = field(default_factory=list)  # VideoRecord, manifest order
    references: dict = field(default_factory=dict)  # video id -> query key -> index list

    def video(self, video_id: str) -> VideoRecord:
        for v in self.videos:
            if v.id == video_id:
                return v
        raise KeyError(f"unknown video id {video_id!r}")

    @property
    def video_ids(self) -> list:
        return [v.id for v in self.videos]


def _require(condition: bool, message: str):
    if not condition:
        raise ValidationError(message)


def _check_version(doc: dict, path):
    _require("version" in doc, f"{path}: missing mandatory 'version' field")
    _require(
        doc["version"] == MANIFEST_VERSION,
        f"{path}: unsupported version {doc['version']!r} (expected {MANIFEST_VERSION})",
    )


def load_dataset(root) -> Dataset:
    """Load and validate a dataset directory.

    Rejects dangling cross-references: queries naming unknown concepts,
    references naming unknown videos, queries, or out-of-range shots,
    annotations naming unknown concepts, and vocabulary entries without
    an embedding vector.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"{manifest_path}: no such manifest")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    _check_version(manifest, manifest_path)

    vocabulary = list(manifest["vocabulary"])
    vocab_set = set(vocabulary)
    _require(len(vocab_set) == len(vocabulary), f"{manifest_path}: duplicate vocabulary entries")

    embed_spec = manifest["embeddings"]
    if "inline" in embed_spec:
        embeddings = {
            c: np.asarray(v, dtype=np.float64) for c, v in embed_spec["inline"].items()
        }
    elif "glove_path" in embed_spec:
        embeddings = load_glove(root / embed_spec["glove_path"], vocab_set)
    else:
        raise ValidationError(f"{manifest_path}: embeddings need 'inline' or 'glove_path'")
    embed_dim = int(manifest["concept_embed_dim"])
    for concept in vocabulary:
        _require(concept in embeddings, f"{manifest_path}: no embedding for {concept!r}")
        _require(
            embeddings[concept].shape == (embed_dim,),
            f"{manifest_path}: embedding for {concept!r} is not {embed_dim}-dimensional",
        )

    queries = []
    for pair in manifest["queries"]:
        _require(len(pair) == 2, f"{manifest_path}: query {pair!r} is not a concept pair")
        for concept in pair:
            _require(concept in vocab_set, f"{manifest_path}: query concept {concept!r} dangles")
        queries.append(tuple(sorted(pair)))

    feature_dim = int(manifest["feature_dim"])
    videos = []
    for entry in manifest["videos"]:
        features = load_features(root / entry["features"])
        _require(
            features.shape == (int(entry["n_shots"]), feature_dim),
            f"{entry['id']}: feature file shape {features.shape} does not match manifest",
        )
        ann_path = root / entry["annotations"]
        with open(ann_path, "r", encoding="utf-8") as fh:
            ann = json.load(fh)
        _check_version(ann, ann_path)
        _require(ann["video_id"] == entry["id"], f"{ann_path}: video id mismatch")
        concepts = [set(shot) for shot in ann["concepts"]]
        _require(
            len(concepts) == features.shape[0],
            f"{ann_path}: {len(concepts)} annotation rows for {features.shape[0]} shots",
        )
        for i, shot in enumerate(concepts):
            for concept in shot:
                _require(concept in vocab_set, f"{ann_path}: shot {i} concept {concept!r} dangles")
        videos.append(VideoRecord(entry["id"], features, concepts))
    video_ids = {v.id: v for v in videos}
    _require(len(video_ids) == len(videos), f"{manifest_path}: duplicate video ids")

    query_keys = {query_key(a, b) for a, b in queries}
    references = {}
    for video_id, per_query in manifest["references"].items():
        _require(video_id in video_ids, f"{manifest_path}: reference video {video_id!r} dangles")
        n_shots = video_ids[video_id].n_shots
        table = {}
        for key, shots in per_query.items():
            _require(key in query_keys, f"{manifest_path}: reference query {key!r} dangles")
            for idx in shots:
                _require(
                    0 <= int(idx) < n_shots,
                    f"{manifest_path}: reference shot {idx} out of range for {video_id!r}",
                )
            table[key] = sorted(int(i) for i in shots)
        references[video_id] = table

    return Dataset(
        root=root,
        feature_dim=feature_dim,
        concept_embed_dim=embed_dim,
        vocabulary=vocabulary,
        embeddings=embeddings,
        queries=queries,
        videos=videos,
        references=references,
    )


def split_protocol(video_ids, fold: int) -> dict:
    """Rotate 4 videos through train(2)/val(1)/test(1) roles by fold.

    Fold f tests on video f, validates on video (f+1) mod 4, trains on
    the other two; over the 4 folds every video is the test video once.
    """
    ids = list(video_ids)
    if len(ids) != 4:
        raise ValueError(f"the split protocol needs exactly 4 videos, got {len(ids)}")
    if not 0 <= fold <= 3:
        raise ValueError(f"fold must be 0..3, got {fold}")
    test = ids[fold]
    val = ids[(fold + 1) % 4]
    train = [v for v in ids if v not in (test, val)]
    return {"train": train, "val": [val], "test": [test]}


@dataclass
class SynthConfig:
    """Knobs for the synthetic dataset generator.

    Each concept is planted as a random unit direction in feature space;
    a shot's feature is the sum of its concepts' directions scaled by
    ``signal_strength`` plus isotropic Gaussian noise scaled by
    ``noise_level``. Videos are built scene by scene: a scene spans
    ``scene_min_len`` to ``scene_max_len`` consecutive shots sharing one
    concept set, so concept presence is temporally coherent the way real
    footage is (the encoder pools over time and could not resolve
    per-shot labels from temporally independent shots).
    ``concept_count_probs`` gives the distribution of concepts per scene
    (0, 1, 2, 3 concepts). Queries are drawn from the concept pairs with
    at least ``min_relevant_shots`` relevant shots in every video, so no
    (video, query) reference is degenerate. The reference summary for a
    query keeps the shots containing either concept, preferring shots
    containing both, capped at ``reference_budget``.
    """

    n_videos: int = 4
    shots_per_video: int = 300
    n_concepts: int = 20
    n_queries: int = 20
    feature_dim: int = 32
    concept_embed_dim: int = 32
    signal_strength: float = 4.0
    noise_level: float = 1.0
    scene_min_len: int = 4
    scene_max_len: int = 8
    reference_budget: int = 60
    concept_count_probs: tuple = (0.25, 0.40, 0.25, 0.10)
    min_relevant_shots: int = 4
    seed: int = 0

    def validate(self):
        for name in (
            "n_videos",
            "shots_per_video",
            "n_concepts",
            "n_queries",
            "feature_dim",
            "concept_embed_dim",
            "reference_budget",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.signal_strength <= 0:
            raise ValueError("signal_strength must be positive")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        if not 1 <= self.scene_min_len <= self.scene_max_len:
            raise ValueError("need 1 <= scene_min_len <= scene_max_len")
        if self.min_relevant_shots < 0:
            raise ValueError("min_relevant_shots must be non-negative")
        if len(self.concept_count_probs) != 4 or abs(sum(self.concept_count_probs) - 1) > 1e-9:
            raise ValueError("concept_count_probs must be 4 probabilities summing to 1")
        max_pairs = self.n_concepts * (self.n_concepts - 1) // 2
        if self.n_queries > max_pairs:
            raise ValueError(
                f"cannot draw {self.n_queries} distinct pairs from {self.n_concepts} concepts"
            )


def _unit_rows(rng, n, dim) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def synth_generate(config: SynthConfig, out_dir=None) -> Dataset:
    """Generate a synthetic dataset; optionally write it to ``out_dir``.

    Deterministic per seed. The returned dataset is the loaded form; if
    ``out_dir`` is given, the directory is written first and then loaded
    back through the validating loader, so generator output is
    guaranteed loadable.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    vocabulary = [f"concept_{i:02d}" for i in range(config.n_concepts)]
    directions = _unit_rows(rng, config.n_concepts, config.feature_dim)
    # per-dimension unit variance, the scale real word vectors come in
    embeddings = rng.standard_normal((config.n_concepts, config.concept_embed_dim))

    videos = []
    for v in range(config.n_videos):
        video_id = f"video_{v}"
        concepts = []
        features = np.zeros((config.shots_per_video, config.feature_dim))
        t = 0
        while t < config.shots_per_video:
            scene_len = int(rng.integers(config.scene_min_len, config.scene_max_len + 1))
            scene_len = min(scene_len, config.shots_per_video - t)
            count = int(rng.choice(4, p=config.concept_count_probs))
            picked = sorted(rng.choice(config.n_concepts, size=count, replace=False))
            scene_set = {vocabulary[c] for c in picked}
            for _ in range(scene_len):
                concepts.append(scene_set.copy())
                for c in picked:
                    features[t] += config.signal_strength * directions[c]
                t += 1
        features += config.noise_level * rng.standard_normal(features.shape)
        videos.append(VideoRecord(video_id, features.astype(np.float32), concepts))

    # a query is only useful if every video has shots to summarize for it
    def relevant_shots(video, a, b):
        return [t for t, shot in enumerate(video.concepts) if a in shot or b in shot]

    feasible = [
        (vocabulary[i], vocabulary[j])
        for i in range(config.n_concepts)
        for j in range(i + 1, config.n_concepts)
        if all(
            len(relevant_shots(video, vocabulary[i], vocabulary[j])) >= config.min_relevant_shots
            for video in videos
        )
    ]
    if len(feasible) < config.n_queries:
        raise ValueError(
            f"only {len(feasible)} concept pairs have {config.min_relevant_shots}+ relevant "
            f"shots in every video; cannot draw {config.n_queries} queries"
        )
    chosen = rng.choice(len(feasible), size=config.n_queries, replace=False)
    queries = [feasible[i] for i in sorted(chosen)]

    references = {}
    for video in videos:
        table = {}
        for a, b in queries:
            relevant = relevant_shots(video, a, b)
            if len(relevant) > config.reference_budget:
                # keep both-concept shots first, then earlier shots
                relevant.sort(key=lambda t: (-len({a, b} & video.concepts[t]), t))
                relevant = sorted(relevant[: config.reference_budget])
            table[query_key(a, b)] = relevant
        references[video.id] = table

    dataset = Dataset(
        root=Path(out_dir) if out_dir is not None else Path("."),
        feature_dim=config.feature_dim,
        concept_embed_dim=config.concept_embed_dim,
        vocabulary=vocabulary,
        embeddings={c: embeddings[i] for i, c in enumerate(vocabulary)},
        queries=queries,
        videos=videos,
        references=references,
    )
    if out_dir is not None:
        write_dataset(dataset, out_dir)
        return load_dataset(out_dir)
    return dataset


def write_dataset(dataset: Dataset, out_dir) -> None:
    """Write a dataset directory in the documented layout."""
    root = Path(out_dir)
    (root / "features").mkdir(parents=True, exist_ok=True)
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    entries = []
    for video in dataset.videos:
        feat_rel = f"features/{video.id}.chf"
        ann_rel = f"annotations/{video.id}.json"
        write_features(root / feat_rel, video.features)
        with open(root / ann_rel, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "version": MANIFEST_VERSION,
                    "video_id": video.id,
                    "concepts": [sorted(shot) for shot in video.concepts],
                },
                fh,
            )
        entries.append(
            {
                "id": video.id,
                "features": feat_rel,
                "annotations": ann_rel,
                "n_shots": video.n_shots,
            }
        )
    manifest = {
        "version": MANIFEST_VERSION,
        "feature_dim": dataset.feature_dim,
        "concept_embed_dim": dataset.concept_embed_dim,
        "vocabulary": dataset.vocabulary,
        "embeddings": {
            "inline": {c: [float(x) for x in v] for c, v in dataset.embeddings.items()}
        },
        "queries": [list(q) for q in dataset.queries],
        "videos": entries,
        "references": dataset.references,
    }
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
