"""Multi-subject brain-signal encoder toolkit.

Voxel vectors of different lengths (one length per subject) are mapped through
subject-specific tokenizers and a shared latent-bottleneck encoder into a
fixed-shape feature grid. This package re-exports the compiled core.
"""

from ._brainalign import (
    EncoderConfig,
    EncoderState,
    adapt_subject,
    bleu_k,
    compose_batch,
    desk_encoder_config,
    grounding_accuracy,
    init_encoder,
    iou,
    load_checkpoint,
    retrieval_report,
    rouge_l,
    save_checkpoint,
    synthetic_dataset,
    train_align,
)

__all__ = [
    "EncoderConfig",
    "EncoderState",
    "adapt_subject",
    "bleu_k",
    "compose_batch",
    "desk_encoder_config",
    "grounding_accuracy",
    "init_encoder",
    "iou",
    "load_checkpoint",
    "retrieval_report",
    "rouge_l",
    "save_checkpoint",
    "synthetic_dataset",
    "train_align",
]
