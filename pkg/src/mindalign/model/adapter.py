from __future__ import annotations

from collections import OrderedDict
from typing import Mapping

import numpy as np

from ..errors import ShapeError
from ..numerics import Tensor, gelu, linear, reshape
from .config import AdapterConfig
from .params import truncated_normal


def init_adapter(acfg: AdapterConfig, n_tokens: int, token_dim: int, seed: int = 0,
                 dtype=np.float32) -> "OrderedDict[str, Tensor]":
    rng = np.random.default_rng(seed)
    in_dim = n_tokens * token_dim
    out_dim = acfg.out_tokens * acfg.out_dim
    shapes = [
        ("adapter.fc1.weight", (acfg.hidden, in_dim)),
        ("adapter.fc1.bias", (acfg.hidden,)),
        ("adapter.fc2.weight", (out_dim, acfg.hidden)),
        ("adapter.fc2.bias", (out_dim,)),
    ]
    params = OrderedDict()
    for name, shape in shapes:
        value = truncated_normal(rng, shape) if name.endswith("weight") else np.zeros(shape)
        params[name] = Tensor(value.astype(dtype), requires_grad=True, name=name)
    return params


def adapter_forward(z: Tensor, params: Mapping[str, Tensor], acfg: AdapterConfig) -> Tensor:
    """Flatten ``Z`` (``(N, d)`` or ``(B, N, d)``), apply linear-GELU-linear, reshape to ``(M, d')``."""
    w1 = params["adapter.fc1.weight"]
    lead = z.shape[:-2]
    if z.ndim not in (2, 3) or z.shape[-2] * z.shape[-1] != w1.shape[1]:
        raise ShapeError(f"adapter expects Z with {w1.shape[1]} entries per sample, got {z.shape}")
    flat = reshape(z, (lead or (1,)) + (w1.shape[1],))
    h = gelu(linear(flat, w1, params["adapter.fc1.bias"]))
    out = linear(h, params["adapter.fc2.weight"], params["adapter.fc2.bias"])
    return reshape(out, lead + (acfg.out_tokens, acfg.out_dim))
