"""Embedding-space evaluation statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from ..data.dataset import Dataset
from ..errors import ShapeError
from ..model import ModelConfig, forward_batch
from ..numerics import Tensor, no_grad
from ..objective import LossConfig, total_loss

METRIC_FIELDS = ("total_loss", "l1_loss", "contrastive_loss", "cosine_mean", "top1_retrieval", "two_way_id")


@dataclass(frozen=True)
class MetricsReport:
    split: str
    n_samples: int
    total_loss: float
    l1_loss: float
    contrastive_loss: float
    cosine_mean: float
    top1_retrieval: float
    two_way_id: float

    def to_dict(self) -> dict:
        return asdict(self)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def token_cosine(preds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-sample mean over tokens of cos(z_i, e_i) for paired ``(B, N, d)`` arrays."""
    return (_unit_rows(preds) * _unit_rows(targets)).sum(-1).mean(-1)


def score_matrix(preds, targets, score: str = "cosine") -> np.ndarray:
    """``S[i, j]`` = similarity of prediction i to candidate target j."""
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim != 3 or t.ndim != 3 or p.shape[1:] != t.shape[1:]:
        raise ShapeError(f"preds {p.shape} and targets {t.shape} must both be (n, N, d)")
    if score == "cosine":
        return np.einsum("ind,jnd->ij", _unit_rows(p), _unit_rows(t)) / p.shape[1]
    if score == "neg_l1":
        return -np.abs(p[:, None] - t[None]).sum(-1).mean(-1)
    raise ValueError(f"unknown score {score!r}")


def _truth(n_preds: int, n_targets: int, truth) -> np.ndarray:
    if truth is None:
        if n_preds != n_targets:
            raise ShapeError(f"{n_preds} predictions for {n_targets} targets")
        truth = np.arange(n_preds)
    truth = np.asarray(truth)
    if truth.shape != (n_preds,):
        raise ShapeError("truth must give one target index per prediction")
    if n_targets < 2:
        raise ShapeError("at least two candidate targets are required")
    return truth


def retrieval_top1(preds, targets, score: str = "cosine", truth=None) -> float:
    """Fraction of predictions whose true target scores highest; ties go to the lowest index."""
    s = score_matrix(preds, targets, score)
    truth = _truth(s.shape[0], s.shape[1], truth)
    return float(np.mean(np.argmax(s, axis=1) == truth))


def two_way_identification(preds, targets, score: str = "cosine", truth=None) -> float:
    """Fraction of (prediction, distractor) pairs where the true target scores strictly higher."""
    s = score_matrix(preds, targets, score)
    truth = _truth(s.shape[0], s.shape[1], truth)
    own = s[np.arange(len(truth)), truth][:, None]
    wins = (own > s).sum()
    return float(wins / (s.shape[0] * (s.shape[1] - 1)))


def _pooled_identification(preds, stim_ids, subjects, embeddings, score):
    """Retrieval/two-way pooled over subjects, ranking within each subject's own stimuli."""
    hits = wins = pairs = 0
    for sid in dict.fromkeys(subjects):
        idx = [i for i, s in enumerate(subjects) if s == sid]
        cands = list(dict.fromkeys(stim_ids[i] for i in idx))
        if len(cands) < 2:
            continue
        pos = {c: j for j, c in enumerate(cands)}
        truth = np.array([pos[stim_ids[i]] for i in idx])
        s = score_matrix(preds[idx], np.stack([embeddings[c] for c in cands]), score)
        hits += int((np.argmax(s, axis=1) == truth).sum())
        own = s[np.arange(len(idx)), truth][:, None]
        wins += int((own > s).sum())
        pairs += len(idx) * (len(cands) - 1)
    n = len(preds)
    return (hits / n if n else 0.0), (wins / pairs if pairs else 0.0)


def predict(params: Mapping[str, Tensor], cfg: ModelConfig, voxels: Sequence, subjects: Sequence[str],
            batch_size: int = 256) -> np.ndarray:
    out = []
    with no_grad():
        for i in range(0, len(voxels), batch_size):
            out.append(forward_batch(voxels[i:i + batch_size], subjects[i:i + batch_size], params, cfg).data)
    if not out:
        return np.zeros((0, cfg.n_tokens, cfg.token_dim), dtype=np.float32)
    return np.concatenate(out)


def evaluate(params: Mapping[str, Tensor], cfg: ModelConfig, dataset: Dataset, split: str,
             loss_cfg: LossConfig = LossConfig(), subjects: Sequence[str] | None = None,
             score: str = "cosine") -> MetricsReport:
    trials = dataset.select(split, subjects)
    if not trials:
        raise ShapeError(f"no {split!r} trials to evaluate")
    voxels, subs, targets = dataset.arrays(trials)
    preds = predict(params, cfg, voxels, subs)
    with no_grad():
        _, parts = total_loss(Tensor(preds), targets, loss_cfg)
    top1, two_way = _pooled_identification(preds, [t.stimulus_id for t in trials], subs,
                                           dataset.embeddings, score)
    return MetricsReport(
        split=split,
        n_samples=len(trials),
        total_loss=parts["total"],
        l1_loss=parts["l1"],
        contrastive_loss=parts["contrastive"],
        cosine_mean=float(token_cosine(preds.astype(np.float64), targets.astype(np.float64)).mean()),
        top1_retrieval=top1,
        two_way_id=two_way,
    )
