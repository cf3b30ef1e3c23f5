"""Optimization, synthetic data, and the training/evaluation loop."""

from .data import (SyntheticDataset, SyntheticSample, gen_dataset, make_splits,
                   mean_pool_baseline_accuracy)
from .loop import (EvalResult, GroupStats, NumericalError, TrainResult,
                   evaluate, layer_attention_stats, stats_to_csv, train_loop,
                   worker_count)
from .optim import AdamState, adam_step, dropout, lr_at

__all__ = [
    "AdamState", "EvalResult", "GroupStats", "NumericalError",
    "SyntheticDataset", "SyntheticSample", "TrainResult", "adam_step",
    "dropout", "evaluate", "gen_dataset", "layer_attention_stats", "lr_at",
    "make_splits", "mean_pool_baseline_accuracy", "stats_to_csv",
    "train_loop", "worker_count",
]
