from ._core import (
    DomainError,
    GmmModel,
    ImageKeyIndex,
    ToySpec,
    Vocabulary,
    accuracy,
    checkpoint_config,
    fit_gmm,
    mask_tokens,
    spearman,
    tokenize,
    write_toy_corpus,
)

__all__ = [
    "DomainError",
    "GmmModel",
    "ImageKeyIndex",
    "ToySpec",
    "Vocabulary",
    "accuracy",
    "checkpoint_config",
    "fit_gmm",
    "mask_tokens",
    "spearman",
    "tokenize",
    "write_toy_corpus",
]
