"""Feature-matching objective: token-wise L1 plus a within-sample contrastive term.

Both losses accept ``(N, d)`` or batched ``(B, N, d)`` inputs; batched inputs
return the mean of the per-sample losses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import Tensor, as_tensor, log_softmax_rows, matmul, mean, mul, swapaxes, tabs, tsum


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    dot_scale: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if not self.dot_scale > 0:
            raise ConfigError(f"dot_scale must be positive, got {self.dot_scale}")
        if self.alpha == 0:
            warnings.warn("alpha=0 disables the contrastive term", stacklevel=2)


def _check(z: Tensor, e: Tensor) -> None:
    if z.shape != e.shape:
        raise ShapeError(f"prediction {z.shape} and target {e.shape} differ")
    if z.ndim not in (2, 3) or z.shape[-2] < 1:
        raise ShapeError(f"expected (N, d) or (B, N, d), got {z.shape}")


def l1_loss(z: Tensor, e) -> Tensor:
    """``(1/N) sum_i ||z_i - e_i||_1``; the per-token L1 norm is not divided by d."""
    e = as_tensor(e, like=z)
    _check(z, e)
    per_token = tsum(tabs(z - e), axis=-1)
    return mean(per_token)


def contrastive_loss(z: Tensor, e, cfg: LossConfig = LossConfig()) -> Tensor:
    """Mean over tokens of ``-log softmax_j(z_i . e_j)[i]`` with j over the same sample's tokens."""
    e = as_tensor(e, like=z)
    _check(z, e)
    logits = matmul(z, swapaxes(e, -1, -2))
    if cfg.dot_scale != 1.0:
        logits = logits * cfg.dot_scale
    logp = log_softmax_rows(logits)
    n = z.shape[-2]
    diag = mul(logp, Tensor(np.eye(n, dtype=logp.dtype)))
    return mean(tsum(tsum(diag, axis=-1), axis=-1)) * (-1.0 / n)


def total_loss(z: Tensor, e, cfg: LossConfig = LossConfig()) -> tuple[Tensor, dict[str, float]]:
    """``L1 + alpha * contrastive``; also returns the float components for logging."""
    l1 = l1_loss(z, e)
    con = contrastive_loss(z, e, cfg)
    total = l1 + con * cfg.alpha if cfg.alpha else l1 + con * 0.0
    return total, {"total": total.item(), "l1": l1.item(), "contrastive": con.item()}
