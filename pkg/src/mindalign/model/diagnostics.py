"""End-to-end gradient verification of encoder plus objective."""

from __future__ import annotations

import numpy as np

from ..numerics import finite_diff_check
from ..objective import LossConfig, total_loss
from .config import ModelConfig
from .encoder import forward_batch
from .params import cast_params, init_params

GRADCHECK_SUBJECTS = (("A", 12), ("B", 7))


def gradcheck_config(seed: int = 0) -> ModelConfig:
    """The 64-bit check scale: N=2, d=8, L=2, H=2, F_s <= 12."""
    return ModelConfig(n_tokens=2, token_dim=8, depth=2, heads=2, mlp_ratio=2.0,
                       subjects=GRADCHECK_SUBJECTS, seed=seed)


def flip_one_sign(grads: list[np.ndarray]) -> list[np.ndarray]:
    """Sabotage hook: negate the largest analytic gradient coordinate."""
    grads = [g.copy() for g in grads]
    i = int(np.argmax([np.abs(g).max(initial=0.0) for g in grads]))
    j = np.unravel_index(np.argmax(np.abs(grads[i])), grads[i].shape)
    grads[i][j] = -grads[i][j]
    return grads


def end_to_end_gradcheck(cfg: ModelConfig | None = None, h: float = 1e-6, seed: int = 0,
                         alpha: float = 0.7, inject_sign_flip: bool = False) -> float:
    """Max relative error of every parameter gradient of the total loss on one mixed-subject batch.

    Parameters are perturbed away from their initialisation so that LayerNorm
    gains, biases and tokens all carry signal.
    """
    cfg = cfg or gradcheck_config(seed)
    rng = np.random.default_rng(seed)
    params = cast_params(init_params(cfg), np.float64)
    for p in params.values():
        p.data += rng.normal(scale=0.3, size=p.shape)
    subjects = [sid for sid, _ in cfg.subjects]
    voxels = [rng.normal(size=cfg.voxel_count(s)) for s in subjects]
    target = rng.normal(size=(len(subjects), cfg.n_tokens, cfg.token_dim))
    loss_cfg = LossConfig(alpha=alpha)

    def f():
        return total_loss(forward_batch(voxels, subjects, params, cfg), target, loss_cfg)[0]

    hook = flip_one_sign if inject_sign_flip else None
    return finite_diff_check(f, list(params.values()), h=h, grad_hook=hook)
