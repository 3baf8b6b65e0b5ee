from __future__ import annotations

import dataclasses
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import ConfigError, ContractError
from ..numerics import Tensor


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 4
    epochs: int = 50
    alpha: float = 1.0
    seed: int = 0
    shuffle: bool = True
    clip_grad_norm: float | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        for b in ("beta1", "beta2"):
            if not 0 <= getattr(self, b) < 1:
                raise ConfigError(f"{b} must lie in [0, 1), got {getattr(self, b)}")
        if not self.eps > 0 or self.weight_decay < 0:
            raise ConfigError("eps must be positive and weight_decay non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.clip_grad_norm is not None and not self.clip_grad_norm > 0:
            raise ConfigError("clip_grad_norm must be positive when set")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: OptimizerState,
    cfg: TrainConfig,
    decays: Callable[[str], bool] = lambda name: True,
) -> tuple["OrderedDict[str, Tensor]", OptimizerState]:
    """One AdamW update over every tensor in ``params``.

    Weight decay is decoupled (``p -= lr * wd * p``) and only applied where
    ``decays(name)`` holds. Returns fresh tensors; ``state`` is updated in place.
    """
    missing = [k for k in params if grads.get(k) is None]
    if missing:
        raise ContractError(f"missing gradients for {missing[:5]}{'...' if len(missing) > 5 else ''}")
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    out: OrderedDict[str, Tensor] = OrderedDict()
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=p.dtype)
        if g.shape != p.shape:
            raise ContractError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        new = p.data
        if cfg.weight_decay and decays(name):
            new = new - cfg.lr * cfg.weight_decay * p.data
        new = new - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        out[name] = Tensor(new.astype(p.dtype, copy=False), requires_grad=p.requires_grad, name=name)
    return out, state


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return norm
