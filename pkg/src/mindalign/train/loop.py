from __future__ import annotations

import csv
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..data.dataset import Dataset, TrialRecord
from ..errors import DataError, NonFiniteError
from ..eval.metrics import METRIC_FIELDS, MetricsReport, evaluate
from ..model import ModelConfig, decays, forward_batch, init_params, save_checkpoint, trainable_names
from ..numerics import Tensor, backward
from ..objective import LossConfig, total_loss
from .optim import OptimizerState, TrainConfig, adamw_step, clip_by_global_norm

log = logging.getLogger(__name__)

CSV_HEADER = ("epoch", "split") + METRIC_FIELDS


def check_trials(trials: Sequence[TrialRecord], cfg: ModelConfig) -> None:
    counts = dict(cfg.subjects)
    for i, t in enumerate(trials):
        if t.subject_id not in counts:
            raise DataError(f"trial {i}: subject {t.subject_id!r} is not registered with the model")
        if t.voxels.shape != (counts[t.subject_id],):
            raise DataError(f"trial {i}: expected {counts[t.subject_id]} voxels for subject "
                            f"{t.subject_id!r}, got {t.voxels.shape}")


def train_step(params, cfg: ModelConfig, voxels, subjects, targets, state: OptimizerState,
               train_cfg: TrainConfig, loss_cfg: LossConfig):
    """Forward, backward and one AdamW update on a single batch."""
    z = forward_batch(voxels, subjects, params, cfg)
    loss, parts = total_loss(z, targets, loss_cfg)
    backward(loss)
    names = trainable_names(params, cfg)
    grads = {k: params[k].grad for k in names}
    # subjects absent from the batch receive no gradient; treat as zero
    for k, g in grads.items():
        if g is None:
            grads[k] = np.zeros_like(params[k].data)
    if train_cfg.clip_grad_norm is not None:
        clip_by_global_norm(grads, train_cfg.clip_grad_norm)
    updated, state = adamw_step(OrderedDict((k, params[k]) for k in names), grads, state, train_cfg, decays)
    new_params = OrderedDict((k, updated.get(k, p)) for k, p in params.items())
    return new_params, state, parts


def train_epoch(params, cfg: ModelConfig, dataset: Dataset, trials: Sequence[TrialRecord],
                state: OptimizerState, train_cfg: TrainConfig, loss_cfg: LossConfig, epoch: int):
    """One pass over ``trials``; returns updated params and running-mean losses."""
    if not trials:
        raise DataError("no training trials")
    order = np.arange(len(trials))
    if train_cfg.shuffle:
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(len(trials))
    sums = {"total": 0.0, "l1": 0.0, "contrastive": 0.0}
    bs = train_cfg.batch_size
    for start in range(0, len(order), bs):
        batch = [trials[i] for i in order[start:start + bs]]
        voxels, subjects, targets = dataset.arrays(batch)
        try:
            params, state, parts = train_step(params, cfg, voxels, subjects, targets, state,
                                              train_cfg, loss_cfg)
        except NonFiniteError as exc:
            raise NonFiniteError(f"epoch {epoch}, step {state.t + 1}: {exc}") from None
        for k in sums:
            sums[k] += parts[k] * len(batch)
    means = {k: v / len(trials) for k, v in sums.items()}
    return params, means


@dataclass
class FitResult:
    params: "OrderedDict[str, Tensor]"
    best_params: "OrderedDict[str, Tensor]"
    best_epoch: int
    best: MetricsReport
    rows: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None


def _row(epoch, split, losses: Mapping[str, float], report: MetricsReport) -> dict:
    return {
        "epoch": epoch, "split": split,
        "total_loss": losses["total"], "l1_loss": losses["l1"], "contrastive_loss": losses["contrastive"],
        "cosine_mean": report.cosine_mean, "top1_retrieval": report.top1_retrieval,
        "two_way_id": report.two_way_id,
    }


def _report_losses(r: MetricsReport) -> dict:
    return {"total": r.total_loss, "l1": r.l1_loss, "contrastive": r.contrastive_loss}


def write_metrics_csv(path, rows: Sequence[Mapping], extra: Sequence[str] = ()) -> None:
    header = tuple(extra) + CSV_HEADER
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in header])


def fit(model_cfg: ModelConfig, train_cfg: TrainConfig, dataset: Dataset, eval_dataset: Dataset | None = None,
        out_dir=None, loss_cfg: LossConfig | None = None, init=None, eval_subjects=None,
        eval_train: bool = True) -> FitResult:
    """Train for ``train_cfg.epochs`` epochs, evaluating on the held-out split after each.

    CSV rows per epoch: ``train`` (running-mean training losses, identification
    metrics on the training split) and ``test`` (full held-out evaluation). A
    final ``best`` row repeats the held-out metrics of the best epoch, chosen by
    top-1 retrieval with cosine as tie-break. The best parameters are
    checkpointed to ``out_dir/checkpoint.mft``.
    """
    loss_cfg = loss_cfg or LossConfig(alpha=train_cfg.alpha)
    eval_dataset = eval_dataset or dataset
    train_trials = dataset.select("train", model_cfg.subject_ids)
    check_trials(train_trials, model_cfg)
    params = init if init is not None else init_params(model_cfg)
    state = OptimizerState()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    best = best_params = None
    best_epoch = 0
    ckpt = out / "checkpoint.mft" if out is not None else None
    for epoch in range(1, train_cfg.epochs + 1):
        params, losses = train_epoch(params, model_cfg, dataset, train_trials, state, train_cfg, loss_cfg, epoch)
        if not all(math.isfinite(v) for v in losses.values()):
            raise NonFiniteError(f"epoch {epoch}: non-finite loss {losses}")
        if eval_train:
            tr = evaluate(params, model_cfg, dataset, "train", loss_cfg, subjects=eval_subjects)
            rows.append(_row(epoch, "train", losses, tr))
        te = evaluate(params, model_cfg, eval_dataset, "test", loss_cfg, subjects=eval_subjects)
        rows.append(_row(epoch, "test", _report_losses(te), te))
        log.info("epoch %d train %.4f test top1 %.3f cos %.3f", epoch, losses["total"],
                 te.top1_retrieval, te.cosine_mean)
        if best is None or (te.top1_retrieval, te.cosine_mean) > (best.top1_retrieval, best.cosine_mean):
            best, best_params, best_epoch = te, params, epoch
            if ckpt is not None:
                save_checkpoint(ckpt, params, model_cfg, {"epoch": epoch, "metrics": te.to_dict()})
    rows.append(_row(best_epoch, "best", _report_losses(best), best))
    if out is not None:
        write_metrics_csv(out / "metrics.csv", rows)
    return FitResult(params, best_params, best_epoch, best, rows, ckpt)
