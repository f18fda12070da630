"""omnidet - Omni-supervised lesion detection.

This library provides:
- A small anchor-based one-stage detector with focal loss and NMS decoding
- Dual attention alignment pooling from image-level labels
- Prototype alignment losses with confidence-weighted EMA prototypes
- Mean-teacher distillation with the soft focal loss
- Synthetic mixed-granularity datasets, evaluation over IoU 0.40-0.75
- A unified trainer routing each sample to the losses it qualifies for
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import Config, build_config, load_config, save_config
from .daa import (
    AttentionPair,
    AttentionPooling,
    DualAttentionPooling,
    GlobalAveragePooling,
    build_local_attention,
    daa_pool,
    get_pooling,
    normalize_attention,
    weak_loss,
)
from .distill import MeanTeacher, ema_update, soft_focal_loss, teacher_predict
from .evaluation import THRESHOLDS, evaluate, iou, match_detections
from .exceptions import (
    CheckpointError,
    ConfigError,
    ConfigMismatchError,
    DatasetError,
    GranularityError,
    LabelLeakageError,
    OmniDetectionError,
    ParseError,
    ShapeMismatchError,
    UnknownClassError,
)
from .gpa import (
    CategoryFeatures,
    PrototypeBank,
    aggregate_features,
    inter_loss,
    intra_loss,
    update_prototypes,
)
from .model import OmniDetector, OmniOutputs
from .models import (
    AreaRange,
    BatchComposition,
    DatasetManifest,
    Detection,
    EvalResult,
    Granularity,
    GroundTruthBox,
    LossReport,
    Sample,
    SampleRecord,
)
from .protocols import LossTermProtocol, PoolingProtocol
from .schedule import lr_schedule
from .term_registry import TermRegistry, get_default_registry
from .terms import (
    DistillationTerm,
    LossTerm,
    PrototypeTerm,
    StepContext,
    SupervisedTerm,
    TermOutput,
    WeakTerm,
)
from .trainer import OmniSupervisedTrainer, build_trainer

__version__ = "0.1.0"

__all__ = [
    # Version
    "__version__",
    # Configuration
    "Config",
    "build_config",
    "load_config",
    "save_config",
    # Domain models
    "AreaRange",
    "BatchComposition",
    "DatasetManifest",
    "Detection",
    "EvalResult",
    "Granularity",
    "GroundTruthBox",
    "LossReport",
    "Sample",
    "SampleRecord",
    # Exceptions
    "CheckpointError",
    "ConfigError",
    "ConfigMismatchError",
    "DatasetError",
    "GranularityError",
    "LabelLeakageError",
    "OmniDetectionError",
    "ParseError",
    "ShapeMismatchError",
    "UnknownClassError",
    # Network
    "OmniDetector",
    "OmniOutputs",
    # Dual attention alignment
    "AttentionPair",
    "AttentionPooling",
    "DualAttentionPooling",
    "GlobalAveragePooling",
    "build_local_attention",
    "daa_pool",
    "get_pooling",
    "normalize_attention",
    "weak_loss",
    # Prototype alignment
    "CategoryFeatures",
    "PrototypeBank",
    "aggregate_features",
    "inter_loss",
    "intra_loss",
    "update_prototypes",
    # Distillation
    "MeanTeacher",
    "ema_update",
    "soft_focal_loss",
    "teacher_predict",
    # Evaluation
    "THRESHOLDS",
    "evaluate",
    "iou",
    "match_detections",
    # Loss terms
    "LossTerm",
    "StepContext",
    "TermOutput",
    "SupervisedTerm",
    "WeakTerm",
    "PrototypeTerm",
    "DistillationTerm",
    "TermRegistry",
    "get_default_registry",
    # Protocols
    "LossTermProtocol",
    "PoolingProtocol",
    # Training
    "Checkpoint",
    "OmniSupervisedTrainer",
    "build_trainer",
    "load_checkpoint",
    "lr_schedule",
    "save_checkpoint",
]
