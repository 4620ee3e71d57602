"""Synthetic pain-expression data, ViT training and evaluation."""

from ._painforge import (
    BuildResult,
    ConfigError,
    DataError,
    DimensionError,
    IntegrityError,
    IoError,
    LabelError,
    NumericError,
    PainforgeError,
    ParameterError,
    UndefinedMetricError,
    au_cross_attention,
    binarize_pspi,
    binary_auroc,
    build_dataset,
    config_hash,
    evaluate,
    f1_binary,
    generate,
    load_checkpoint_config,
    macro_auroc,
    pipeline,
    pspi_score,
    sample_au_config,
    subject_kfold,
    tolerance_accuracy,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
