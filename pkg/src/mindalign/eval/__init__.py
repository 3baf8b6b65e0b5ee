from .metrics import (
    MetricsReport,
    evaluate,
    predict,
    retrieval_top1,
    score_matrix,
    token_cosine,
    two_way_identification,
)

__all__ = ["MetricsReport", "evaluate", "predict", "retrieval_top1", "score_matrix", "token_cosine",
           "two_way_identification"]
