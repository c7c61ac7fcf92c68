"""Entity role labeling for memes: CRF tagging, BLOCK fusion, augmentation."""

from ._core import (
    __version__,
    DataError,
    NumericError,
    ProviderError,
    FusionModel,
    CrfModel,
    assemble_full_tensor,
    balance,
    bilinear_contract,
    block_fusion_forward,
    class_distribution,
    crf_log_partition,
    crf_viterbi,
    evaluate,
    flatten_to_instances,
    from_bio,
    load_dataset,
    majority_baseline,
    read_table,
    sequence_evaluate,
    substitute,
    to_bio,
    tokenize,
    train_crf,
    train_fusion,
    write_table,
)

__all__ = [name for name in dir() if not name.startswith("_")]
