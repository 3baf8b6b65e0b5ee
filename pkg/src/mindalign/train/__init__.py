from .loop import CSV_HEADER, FitResult, fit, train_epoch, train_step, write_metrics_csv
from .optim import OptimizerState, TrainConfig, adamw_step

__all__ = ["CSV_HEADER", "FitResult", "OptimizerState", "TrainConfig", "adamw_step", "fit",
           "train_epoch", "train_step", "write_metrics_csv"]
