"""Embedding-gated CNN helpfulness regression."""

from ._egcnn import (
    ContractError,
    Error,
    FormatError,
    IndexError,
    LabelError,
    ShapeError,
    TrainingError,
    UndefinedCorrelation,
    fit_aspects,
    grad_check,
    matrix_sqrt_psd,
    omega_update,
    pearson,
    run,
    spearman,
    tokenize,
    trace_gradient,
    trace_term,
    word_aspect_rep,
)

__all__ = [
    "ContractError",
    "Error",
    "FormatError",
    "IndexError",
    "LabelError",
    "ShapeError",
    "TrainingError",
    "UndefinedCorrelation",
    "fit_aspects",
    "grad_check",
    "matrix_sqrt_psd",
    "omega_update",
    "pearson",
    "run",
    "spearman",
    "tokenize",
    "trace_gradient",
    "trace_term",
    "word_aspect_rep",
]
