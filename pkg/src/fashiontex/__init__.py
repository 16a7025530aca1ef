"""FashionTex: multi-modal virtual try-on in the latent space of a style-based generator.

A portrait is inverted into a per-layer latent code, a trainable editing
mapper turns cloth-type text and texture patches into latent offsets, and an
identity recovery pass fine-tunes a private generator copy so the final
image keeps the subject's identity.
"""

from .latent import (
    DEFAULT_GROUP_BOUNDS,
    GroupBounds,
    LatentCode,
    LatentOffset,
    apply_offsets,
    default_group_bounds,
    load_latent,
    save_latent,
    split_latent,
    style_mix,
)
from .backbones import BackboneSet, Embedding, FeaturePyramid, ParsingMask, load_backbones
from .mapper import EditCondition, FashionMapper, edit, split_text
from .losses import LossReport, LossWeights, total_loss
from .recovery import RecoveryConfig, fuse_guided, recover, recovery_objective
from .training import (DatasetIndex, TrainConfig, VOCABULARY, build_prompt,
                       ingest_dataset, synthesize_dataset, train)
from .evaluation import EvalConfig, EvalReport, evaluate, fid, lpips_mean, type_accuracy
from .config import Config, dump_config, load_config, train_config

__all__ = [
    "DEFAULT_GROUP_BOUNDS",
    "GroupBounds",
    "LatentCode",
    "LatentOffset",
    "apply_offsets",
    "default_group_bounds",
    "load_latent",
    "save_latent",
    "split_latent",
    "style_mix",
    "BackboneSet",
    "Embedding",
    "FeaturePyramid",
    "ParsingMask",
    "load_backbones",
    "EditCondition",
    "FashionMapper",
    "edit",
    "split_text",
    "LossReport",
    "LossWeights",
    "total_loss",
    "RecoveryConfig",
    "fuse_guided",
    "recover",
    "recovery_objective",
    "DatasetIndex",
    "TrainConfig",
    "VOCABULARY",
    "build_prompt",
    "ingest_dataset",
    "synthesize_dataset",
    "train",
    "EvalConfig",
    "EvalReport",
    "evaluate",
    "fid",
    "lpips_mean",
    "type_accuracy",
    "Config",
    "dump_config",
    "load_config",
    "train_config",
]
