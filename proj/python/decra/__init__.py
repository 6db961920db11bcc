"""Low-resource text classification with k-beta augmentation.

Thin Python wrapper over the C++ core. The heavy lifting (autodiff,
transformer encoder, training loops, subset protocol) lives in the
compiled ``_decra`` extension; this package just re-exports it.
"""

from ._decra import (
    AugmentConfig,
    EpochReport,
    Example,
    ExperimentReport,
    LabeledDataset,
    Model,
    ModelConfig,
    SoftSequence,
    SubsetSpec,
    SynthSpec,
    TrainConfig,
    TrainMode,
    TrainResult,
    Vocabulary,
    decode,
    encode,
    evaluate,
    export_augmentations,
    export_embeddings,
    fit_config,
    gen_synthetic_jsonl,
    init_model,
    kbeta_augment,
    load_checkpoint,
    load_jsonl,
    predict_class,
    pretrain_lm,
    run_ablation,
    run_experiment,
    sample_subsets,
    save_checkpoint,
    tokenize,
    topk_renormalize,
    train,
)

__all__ = [
    "AugmentConfig",
    "EpochReport",
    "Example",
    "ExperimentReport",
    "LabeledDataset",
    "Model",
    "ModelConfig",
    "SoftSequence",
    "SubsetSpec",
    "SynthSpec",
    "TrainConfig",
    "TrainMode",
    "TrainResult",
    "Vocabulary",
    "decode",
    "encode",
    "evaluate",
    "export_augmentations",
    "export_embeddings",
    "fit_config",
    "gen_synthetic_jsonl",
    "init_model",
    "kbeta_augment",
    "load_checkpoint",
    "load_jsonl",
    "predict_class",
    "pretrain_lm",
    "run_ablation",
    "run_experiment",
    "sample_subsets",
    "save_checkpoint",
    "tokenize",
    "topk_renormalize",
    "train",
]
