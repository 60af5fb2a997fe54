"""Cross-modal contrastive losses, influence scoring and retrieval metrics.

Arrays are float64 NumPy matrices with one sample per row. Loss functions
return ``(value, grad_zx, grad_zy)``.
"""

from ._core import (
    CrossclrError,
    LossConfig,
    MemoryQueue,
    clip_symmetric,
    connectivity,
    crossclr_batch,
    crossclr_multipos,
    crossclr_queue,
    evaluate_retrieval,
    generate_synthetic,
    influential_mask,
    max_margin,
    ntxent,
    retrieval_report,
    run_command,
    sample_weights,
)

__all__ = [
    "CrossclrError",
    "LossConfig",
    "MemoryQueue",
    "clip_symmetric",
    "connectivity",
    "crossclr_batch",
    "crossclr_multipos",
    "crossclr_queue",
    "evaluate_retrieval",
    "generate_synthetic",
    "influential_mask",
    "max_margin",
    "ntxent",
    "retrieval_report",
    "run_command",
    "sample_weights",
]
