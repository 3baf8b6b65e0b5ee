"""Parameter initialisation, naming and counting."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..numerics import Tensor
from .config import ModelConfig

Params = "OrderedDict[str, Tensor]"

INIT_STD = 0.02


# std of a unit normal truncated to [-2, 2]
_TRUNC2_STD = 0.8796256610342398


def truncated_normal(rng: np.random.Generator, shape, std: float = INIT_STD, bound: float = 2.0) -> np.ndarray:
    """Samples with standard deviation ``std`` from a normal truncated at ``bound`` scale units.

    The underlying scale is widened so that the truncated samples, not the
    parent distribution, have the requested std. Only ``bound=2`` is calibrated.
    """
    scale = std / _TRUNC2_STD if bound == 2.0 else std
    out = rng.normal(0.0, scale, size=shape)
    bad = np.abs(out) > bound * scale
    while bad.any():
        out[bad] = rng.normal(0.0, scale, size=int(bad.sum()))
        bad = np.abs(out) > bound * scale
    return out


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Every parameter name with its shape, in initialisation order."""
    n, d, h = cfg.n_tokens, cfg.token_dim, cfg.mlp_hidden
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    for sid, f in cfg.subjects:
        shapes[f"subject.{sid}.weight"] = (n * d, f)
        shapes[f"subject.{sid}.bias"] = (n * d,)
        shapes[f"subject.{sid}.token"] = (d,)
    shapes["pos_embed"] = (n + 1, d)
    for i in range(cfg.depth):
        b = f"block.{i}"
        shapes[f"{b}.ln1.gamma"] = (d,)
        shapes[f"{b}.ln1.beta"] = (d,)
        for proj in "qkvo":
            shapes[f"{b}.attn.{proj}.weight"] = (d, d)
            shapes[f"{b}.attn.{proj}.bias"] = (d,)
        shapes[f"{b}.ln2.gamma"] = (d,)
        shapes[f"{b}.ln2.beta"] = (d,)
        shapes[f"{b}.mlp.fc1.weight"] = (h, d)
        shapes[f"{b}.mlp.fc1.bias"] = (h,)
        shapes[f"{b}.mlp.fc2.weight"] = (d, h)
        shapes[f"{b}.mlp.fc2.bias"] = (d,)
    shapes["final_ln.gamma"] = (d,)
    shapes["final_ln.beta"] = (d,)
    return shapes


def init_params(cfg: ModelConfig, dtype=np.float32) -> "OrderedDict[str, Tensor]":
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    params: OrderedDict[str, Tensor] = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "token" and not cfg.subject_tokens:
            value = np.zeros(shape)
        elif leaf in ("weight", "token") or name == "pos_embed":
            value = truncated_normal(rng, shape)
        elif leaf == "gamma":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params[name] = Tensor(value.astype(dtype), requires_grad=True, name=name)
    return params


def is_frozen(name: str, cfg: ModelConfig) -> bool:
    return name.endswith(".token") and not cfg.subject_tokens


def trainable_names(params, cfg: ModelConfig) -> list[str]:
    return [k for k in params if not is_frozen(k, cfg)]


def decays(name: str) -> bool:
    """Weight decay applies to projection/MLP weights only."""
    return name.endswith(".weight")


def cast_params(params, dtype) -> "OrderedDict[str, Tensor]":
    return OrderedDict(
        (k, Tensor(np.array(p.data, dtype=dtype), requires_grad=p.requires_grad, name=k))
        for k, p in params.items()
    )


def block_param_count(d: int, h: int) -> int:
    ln = 2 * d
    attn = 4 * (d * d + d)
    mlp = (h * d + h) + (d * h + d)
    return 2 * ln + attn + mlp


def subject_increment(voxel_count: int, n_tokens: int, token_dim: int) -> int:
    """Parameters added by registering one more subject."""
    return voxel_count * n_tokens * token_dim + n_tokens * token_dim + token_dim


def param_count(cfg: ModelConfig) -> tuple[int, dict]:
    """Closed-form parameter count with a per-group breakdown."""
    n, d, h = cfg.n_tokens, cfg.token_dim, cfg.mlp_hidden
    per_subject = {sid: subject_increment(f, n, d) for sid, f in cfg.subjects}
    groups = {
        "subject_linear": sum(f * n * d + n * d for _, f in cfg.subjects),
        "subject_tokens": d * len(cfg.subjects),
        "pos_embed": (n + 1) * d,
        "blocks": cfg.depth * block_param_count(d, h),
        "final_ln": 2 * d,
    }
    total = sum(groups.values())
    return total, {"groups": groups, "per_subject": per_subject, "total": total}


def enumerate_count(params) -> int:
    """Count by walking the actual tensors."""
    return int(sum(p.data.size for p in params.values()))
