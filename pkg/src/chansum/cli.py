"""Command-line entry point.

Subcommands: gen-data, segment, train, summarize, evaluate, gradcheck.
Every flag mirrors a run-configuration field; --config supplies the
same fields from a JSON file ({"chan": {...}, "train": {...}}) with
command-line flags taking precedence. The resolved configuration is
written next to every artifact a run produces, so a run can be repeated
from its artifacts alone. All randomness flows from --seed.

Structured output is JSON on stdout, or to --out when given (the
human-readable table of `evaluate` then goes to stdout, otherwise to
stderr). The CHAN_LOG_LEVEL environment variable (error, warn, info,
debug) controls diagnostics on stderr. Exit codes: 0 success, 1 failed
check, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import DatasetError, SynthConfig, load_dataset, load_features, query_key, synth_generate
from .evaluation import evaluate_dataset, format_metrics_table
from .gradcheck import gradient_check
from .model import (
    ChanConfig,
    ChanParams,
    QueryEmbedding,
    forward,
    load_checkpoint,
    save_checkpoint,
    summarize,
)
from .segmentation import SegmentationError, SegmentBoundaries, kts_segment
from .tensor import Tensor, bce_loss
from .train import TrainSettings, fit, save_history

log = logging.getLogger("chansum")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

# fields that may not be overridden per subcommand flag section
_CHAN_FIELDS = {f.name: f for f in dataclasses.fields(ChanConfig)}
_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainSettings)}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_model_flags(parser: argparse.ArgumentParser):
    """One flag per configuration field; defaults None so that only
    explicitly passed flags override the config file."""
    group = parser.add_argument_group("model configuration")
    for name, f in _CHAN_FIELDS.items():
        if name == "seed":
            continue
        if name in ("conv_channels", "kernel_sizes", "dilations"):
            group.add_argument(_flag(name), type=str, default=None,
                               help=f"comma-separated ints (default {','.join(map(str, f.default))})")
        elif name == "selection_policy":
            group.add_argument(_flag(name), choices=["threshold", "budget"], default=None)
        elif f.type in ("float", float):
            group.add_argument(_flag(name), type=float, default=None)
        else:
            group.add_argument(_flag(name), type=int, default=None)
    group = parser.add_argument_group("training configuration")
    for name, f in _TRAIN_FIELDS.items():
        if name == "seed":
            continue
        if name in ("disable_local", "disable_global"):
            group.add_argument(_flag(name), action=argparse.BooleanOptionalAction, default=None)
        elif name == "dtype":
            group.add_argument(_flag(name), choices=["float32", "float64"], default=None)
        elif f.type in ("float", float):
            group.add_argument(_flag(name), type=float, default=None)
        else:
            group.add_argument(_flag(name), type=int, default=None)
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file with chan/train sections; flags override it")
    parser.add_argument("--seed", type=int, default=None, help="seed for all randomness")


def _parse_int_tuple(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def resolve_run_config(args) -> tuple:
    """Merge defaults, the --config file, and explicit flags."""
    chan = dataclasses.asdict(ChanConfig())
    train = dataclasses.asdict(TrainSettings())
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        chan.update(doc.get("chan", {}))
        train.update(doc.get("train", {}))
    for name in _CHAN_FIELDS:
        value = getattr(args, name, None)
        if value is None:
            continue
        if name in ("conv_channels", "kernel_sizes", "dilations"):
            value = _parse_int_tuple(value)
        chan[name] = value
    for name in _TRAIN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            train[name] = value
    if getattr(args, "seed", None) is not None:
        chan["seed"] = args.seed
        train["seed"] = args.seed
    config = ChanConfig.from_dict(chan)
    settings = TrainSettings(**train)
    settings.validate()
    return config, settings


def run_config_dict(config: ChanConfig, settings: TrainSettings) -> dict:
    return {"version": 1, "chan": config.to_dict(), "train": settings.to_dict()}


def _emit(doc: dict, out_path) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_gen_data(args) -> int:
    config = SynthConfig(
        n_videos=args.n_videos,
        shots_per_video=args.shots_per_video,
        n_concepts=args.n_concepts,
        n_queries=args.n_queries,
        feature_dim=args.feature_dim,
        concept_embed_dim=args.concept_embed_dim,
        signal_strength=args.signal_strength,
        noise_level=args.noise_level,
        scene_min_len=args.scene_min_len,
        scene_max_len=args.scene_max_len,
        reference_budget=args.reference_budget,
        min_relevant_shots=args.min_relevant_shots,
        seed=args.seed,
    )
    dataset = synth_generate(config, out_dir=args.out)
    log.info("wrote synthetic dataset to %s", args.out)
    _emit(
        {
            "out": str(args.out),
            "n_videos": len(dataset.videos),
            "shots_per_video": [v.n_shots for v in dataset.videos],
            "n_concepts": len(dataset.vocabulary),
            "n_queries": len(dataset.queries),
            "feature_dim": dataset.feature_dim,
        },
        None,
    )
    return 0


def cmd_segment(args) -> int:
    features = load_features(args.features)
    boundaries = kts_segment(
        features,
        max_segments=args.max_segments,
        max_segment_len=args.max_segment_len,
        penalty=args.penalty,
    )
    _emit(
        {
            "version": 1,
            "n_shots": boundaries.n_shots,
            "n_segments": boundaries.n_segments,
            "change_points": list(boundaries.change_points),
            "segments": [[a, b] for a, b in boundaries.segments()],
        },
        args.out,
    )
    return 0


def _adopt_dataset_dims(config: ChanConfig, dataset, args) -> ChanConfig:
    """Architecture input dims follow the dataset unless explicitly set."""
    replace = {}
    if getattr(args, "input_dim", None) is None and config.input_dim != dataset.feature_dim:
        replace["input_dim"] = dataset.feature_dim
    if (
        getattr(args, "concept_embed_dim", None) is None
        and config.concept_embed_dim != dataset.concept_embed_dim
    ):
        replace["concept_embed_dim"] = dataset.concept_embed_dim
    if replace:
        log.info("adopting dataset dimensions: %s", replace)
        config = dataclasses.replace(config, **replace)
        config.validate()
    return config


def cmd_train(args) -> int:
    config, settings = resolve_run_config(args)
    dataset = load_dataset(args.dataset)
    config = _adopt_dataset_dims(config, dataset, args)
    params, history = fit(dataset, config, settings)
    out = Path(args.out)
    run_cfg = run_config_dict(config, settings)
    save_checkpoint(out, params, extra={"run_config": run_cfg, "dataset": str(args.dataset)})
    with open(out / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(run_cfg, fh, indent=1, sort_keys=True)
    log_path = args.log if args.log else out / "train_log.jsonl"
    save_history(log_path, history)
    epoch_records = [r for r in history if r.get("event") == "epoch_end"]
    best_val = max((r["val_f1"] for r in epoch_records), default=0.0)
    _emit(
        {
            "checkpoint": str(out),
            "log": str(log_path),
            "epochs_run": len(epoch_records),
            "steps": sum(1 for r in history if "event" not in r),
            "best_val_f1": best_val,
            "final_loss": next(
                (r["loss"] for r in reversed(history) if "loss" in r), None
            ),
        },
        None,
    )
    return 0


def _resolve_query(text: str) -> tuple:
    sep = "|" if "|" in text else ","
    parts = [p.strip() for p in text.split(sep) if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"query must name two concepts, got {text!r}")
    return tuple(parts)


def cmd_summarize(args) -> int:
    params = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    video = dataset.video(args.video)
    pair = _resolve_query(args.query)
    embedding = QueryEmbedding.from_table(dataset.embeddings, pair[0], pair[1])
    boundaries = kts_segment(
        video.features,
        max_segments=args.max_segments,
        max_segment_len=args.max_segment_len,
        penalty=args.penalty,
    )
    result = summarize(
        params,
        video.features,
        boundaries,
        embedding,
        policy=args.selection_policy,
        threshold=args.threshold,
        budget=args.budget,
        disable_local=bool(args.disable_local),
        disable_global=bool(args.disable_global),
    )
    _emit(
        {
            "version": 1,
            "video": video.id,
            "query": query_key(*pair),
            "policy": result.policy,
            "selected": result.selected,
            "scores": [round(float(s), 6) for s in result.scores],
        },
        args.out,
    )
    return 0


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_evaluate(args) -> int:
    candidates = _load_json(args.candidates)["summaries"]
    if args.dataset:
        dataset = load_dataset(args.dataset)
        references = {vid: dict(refs) for vid, refs in dataset.references.items()}
        annotations = {v.id: v.concepts for v in dataset.videos}
    else:
        references, annotations = None, None
    if args.references:
        references = _load_json(args.references)["summaries"]
    if args.annotations:
        doc = _load_json(args.annotations)["concepts"]
        annotations = {vid: [set(shot) for shot in shots] for vid, shots in doc.items()}
    if references is None or annotations is None:
        raise ValueError("evaluate needs --dataset or both --references and --annotations")
    for vid, per_query in candidates.items():
        if vid not in references:
            raise ValueError(f"candidate video {vid!r} has no reference summaries")
        if vid not in annotations:
            raise ValueError(f"candidate video {vid!r} has no annotations")
        for key in per_query:
            if key not in references[vid]:
                raise ValueError(f"candidate query {key!r} has no reference for video {vid!r}")
    references = {
        vid: {k: v for k, v in references[vid].items() if k in candidates[vid]}
        for vid in candidates
    }
    metrics = evaluate_dataset(candidates, references, annotations)
    _emit(metrics.to_dict(), args.out)
    table = format_metrics_table(metrics)
    print(table, file=sys.stdout if args.out else sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    """Finite-difference check of the full model at toy scale."""
    config = ChanConfig(
        input_dim=8,
        conv_channels=(4, 8),
        kernel_sizes=(3, 5),
        dilations=(1, 2),
        attention_dim=4,
        fusion_space_dim=8,
        mlp_hidden=4,
        concept_embed_dim=4,
        seed=args.seed,
    )
    rng = np.random.default_rng(args.seed)
    params = ChanParams(config, dtype=np.float64, rng=rng)
    boundaries = SegmentBoundaries((6,), 12)
    features = rng.standard_normal((12, config.input_dim))
    embeddings = {
        "a": rng.standard_normal(config.concept_embed_dim),
        "b": rng.standard_normal(config.concept_embed_dim),
    }
    query = QueryEmbedding.from_table(embeddings, "a", "b")
    labels = Tensor(rng.uniform(0.05, 0.95, size=12))

    def loss_fn():
        return bce_loss(forward(params, features, boundaries, query), labels)

    report = gradient_check(
        loss_fn,
        params.named_parameters(),
        step=args.step,
        tolerance=args.tolerance,
        max_coords=args.max_coords,
        rng=np.random.default_rng(args.seed + 1),
    )
    _emit(report.to_dict(), args.out)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chansum",
        description="Query-focused video summarization: data, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    p.add_argument("--out", required=True)
    defaults = SynthConfig()
    p.add_argument("--n-videos", type=int, default=defaults.n_videos)
    p.add_argument("--shots-per-video", type=int, default=defaults.shots_per_video)
    p.add_argument("--n-concepts", type=int, default=defaults.n_concepts)
    p.add_argument("--n-queries", type=int, default=defaults.n_queries)
    p.add_argument("--feature-dim", type=int, default=defaults.feature_dim)
    p.add_argument("--concept-embed-dim", type=int, default=defaults.concept_embed_dim)
    p.add_argument("--signal-strength", type=float, default=defaults.signal_strength)
    p.add_argument("--noise-level", type=float, default=defaults.noise_level)
    p.add_argument("--scene-min-len", type=int, default=defaults.scene_min_len)
    p.add_argument("--scene-max-len", type=int, default=defaults.scene_max_len)
    p.add_argument("--reference-budget", type=int, default=defaults.reference_budget)
    p.add_argument("--min-relevant-shots", type=int, default=defaults.min_relevant_shots)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("segment", help="temporal segmentation of one feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--max-segments", type=int, default=TrainSettings.max_segments)
    p.add_argument("--max-segment-len", type=int, default=TrainSettings.max_segment_len)
    p.add_argument("--penalty", type=float, default=TrainSettings.penalty)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory to write")
    p.add_argument("--log", default=None, help="training log path (default <out>/train_log.jsonl)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="score one video against one query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--query", required=True, help="two concepts, 'a|b' or 'a,b'")
    p.add_argument("--out", default=None)
    p.add_argument("--selection-policy", choices=["threshold", "budget"], default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--max-segments", type=int, default=TrainSettings.max_segments)
    p.add_argument("--max-segment-len", type=int, default=TrainSettings.max_segment_len)
    p.add_argument("--penalty", type=float, default=TrainSettings.penalty)
    p.add_argument("--disable-local", action="store_true")
    p.add_argument("--disable-global", action="store_true")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="score candidate summaries against references")
    p.add_argument("--candidates", required=True, help='JSON {"summaries": {video: {query: [shots]}}}')
    p.add_argument("--dataset", default=None, help="dataset directory for references+annotations")
    p.add_argument("--references", default=None, help="JSON summaries file overriding the dataset")
    p.add_argument("--annotations", default=None, help='JSON {"concepts": {video: [[...], ...]}}')
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the toy-scale model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--max-coords", type=int, default=50, help="coordinates sampled per parameter")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CHAN_LOG_LEVEL", "warn").lower()
    if level not in _LOG_LEVELS:
        print(json.dumps({"error": "usage", "message": f"bad CHAN_LOG_LEVEL {level!r}"}),
              file=sys.stderr)
        return 2
    logging.basicConfig(level=_LOG_LEVELS[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, SegmentationError, KeyError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
