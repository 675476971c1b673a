"""Query-focused video summarization with hierarchical attention.

The package is organized as a small numpy-backed library:

* :mod:`chansum.tensor` - reverse-mode autodiff engine and operators
* :mod:`chansum.optim` - Adam with per-epoch learning-rate decay
* :mod:`chansum.gradcheck` - central finite-difference gradient checks
* :mod:`chansum.segmentation` - change-point temporal segmentation
* :mod:`chansum.model` - the summarization network
* :mod:`chansum.train` - training loop and model evaluation
* :mod:`chansum.evaluation` - concept-IoU matching metrics
* :mod:`chansum.data` - file formats, loaders, synthetic generator
* :mod:`chansum.cli` - the ``chansum`` command
"""

from .data import (
    BadMagicError,
    Dataset,
    DatasetError,
    NonFiniteValueError,
    SynthConfig,
    TruncatedPayloadError,
    VideoRecord,
    load_dataset,
    load_features,
    query_key,
    split_protocol,
    synth_generate,
    write_features,
)
from .evaluation import (
    DatasetMetrics,
    MatchReport,
    brute_force_matching,
    concept_iou,
    evaluate_dataset,
    evaluate_summary,
    format_metrics_table,
    max_weight_matching,
    random_baseline_f1,
)
from .gradcheck import GradCheckReport, gradient_check
from .model import (
    ChanConfig,
    ChanParams,
    QueryEmbedding,
    SummaryResult,
    UnknownConceptError,
    forward,
    load_checkpoint,
    save_checkpoint,
    score_shots,
    select_shots,
    summarize,
)
from .optim import Adam, AdamState, MissingGradientError
from .segmentation import (
    SegmentBoundaries,
    SegmentationError,
    brute_force_segment,
    kts_segment,
    total_cost,
)
from .tensor import ShapeError, Tensor, no_grad
from .train import TrainSettings, evaluate_model, fit, shot_labels

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AdamState",
    "BadMagicError",
    "ChanConfig",
    "ChanParams",
    "Dataset",
    "DatasetError",
    "DatasetMetrics",
    "GradCheckReport",
    "MatchReport",
    "MissingGradientError",
    "NonFiniteValueError",
    "QueryEmbedding",
    "SegmentBoundaries",
    "SegmentationError",
    "ShapeError",
    "SummaryResult",
    "SynthConfig",
    "Tensor",
    "TrainSettings",
    "TruncatedPayloadError",
    "UnknownConceptError",
    "VideoRecord",
    "brute_force_matching",
    "brute_force_segment",
    "concept_iou",
    "evaluate_dataset",
    "evaluate_model",
    "evaluate_summary",
    "fit",
    "format_metrics_table",
    "forward",
    "gradient_check",
    "kts_segment",
    "load_checkpoint",
    "load_dataset",
    "load_features",
    "max_weight_matching",
    "no_grad",
    "query_key",
    "random_baseline_f1",
    "save_checkpoint",
    "score_shots",
    "select_shots",
    "shot_labels",
    "split_protocol",
    "summarize",
    "synth_generate",
    "total_cost",
    "write_features",
]
