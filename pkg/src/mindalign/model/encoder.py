"""Shared pre-norm transformer encoder with per-subject input projections."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from ..errors import ShapeError, SubjectError
from ..numerics import (
    Tensor,
    broadcast_to,
    concat,
    gelu,
    getitem,
    layer_norm,
    linear,
    matmul,
    reshape,
    softmax_rows,
    swapaxes,
    transpose,
)
from .config import ModelConfig


def _subject_weights(params: Mapping[str, Tensor], s: str):
    try:
        return params[f"subject.{s}.weight"], params[f"subject.{s}.bias"], params[f"subject.{s}.token"]
    except KeyError:
        raise SubjectError(f"unknown subject {s!r}") from None


def _as_voxels(v, f: int, s: str, dtype) -> np.ndarray:
    arr = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=dtype)
    if arr.ndim != 1 or arr.shape[0] != f:
        raise ShapeError(f"subject {s!r} expects {f} voxels, got shape {arr.shape}")
    return arr


def subject_project(v, s: str, params: Mapping[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Map one voxel vector to an ``N x d`` token matrix with the subject's linear layer."""
    w, b, _ = _subject_weights(params, s)
    v = _as_voxels(v, w.shape[1], s, w.dtype)
    x = linear(Tensor(v[None, :], dtype=w.dtype), w, b)
    return reshape(x, (cfg.n_tokens, cfg.token_dim))


def attention_block(y: Tensor, params: Mapping[str, Tensor], prefix: str, heads: int,
                    return_weights: bool = False):
    """Unmasked multi-head scaled dot-product self-attention plus output projection.

    ``y`` is ``(T, d)`` or ``(B, T, d)``; ``prefix`` selects ``{prefix}.{q,k,v,o}.*``.
    """
    squeeze = y.ndim == 2
    if squeeze:
        y = reshape(y, (1,) + y.shape)
    b, t, d = y.shape
    if d % heads:
        raise ShapeError(f"token dim {d} not divisible by {heads} heads")
    dh = d // heads

    def split(proj):
        z = linear(y, params[f"{prefix}.{proj}.weight"], params[f"{prefix}.{proj}.bias"])
        return transpose(reshape(z, (b, t, heads, dh)), (0, 2, 1, 3))

    q, k, v = split("q"), split("k"), split("v")
    scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
    attn = softmax_rows(scores)
    mixed = reshape(transpose(matmul(attn, v), (0, 2, 1, 3)), (b, t, d))
    out = linear(mixed, params[f"{prefix}.o.weight"], params[f"{prefix}.o.bias"])
    if squeeze:
        out = reshape(out, (t, d))
        attn = reshape(attn, attn.shape[1:])
    return (out, attn) if return_weights else out


def mlp_block(y: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    hidden = gelu(linear(y, params[f"{prefix}.fc1.weight"], params[f"{prefix}.fc1.bias"]))
    return linear(hidden, params[f"{prefix}.fc2.weight"], params[f"{prefix}.fc2.bias"])


def embed_tokens(voxels: Sequence, subjects: Sequence[str], params: Mapping[str, Tensor],
                 cfg: ModelConfig) -> Tensor:
    """Project, prepend each sample's subject token and add position embeddings.

    Returns ``(B, N + 1, d)`` with row 0 the subject token.
    """
    if len(voxels) != len(subjects):
        raise ShapeError(f"{len(voxels)} voxel vectors for {len(subjects)} subject ids")
    n, d = cfg.n_tokens, cfg.token_dim
    groups: dict[str, list[int]] = {}
    for i, s in enumerate(subjects):
        groups.setdefault(s, []).append(i)

    pieces, order = [], []
    for s, idx in groups.items():
        w, b, tok = _subject_weights(params, s)
        f = w.shape[1]
        v = np.stack([_as_voxels(voxels[i], f, s, w.dtype) for i in idx])
        x = reshape(linear(Tensor(v, dtype=w.dtype), w, b), (len(idx), n, d))
        t = broadcast_to(reshape(tok, (1, 1, d)), (len(idx), 1, d))
        pieces.append(concat([t, x], axis=1))
        order.extend(idx)

    seq = pieces[0] if len(pieces) == 1 else concat(pieces, axis=0)
    if order != sorted(order):
        seq = getitem(seq, np.argsort(order))
    return seq + params["pos_embed"]


def encode(tokens: Tensor, params: Mapping[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Run the block stack and final norm over ``(B, T, d)`` tokens."""
    y = tokens
    for i in range(cfg.depth):
        p = f"block.{i}"
        h = layer_norm(y, params[f"{p}.ln1.gamma"], params[f"{p}.ln1.beta"], cfg.ln_eps)
        y = y + attention_block(h, params, f"{p}.attn", cfg.heads)
        h = layer_norm(y, params[f"{p}.ln2.gamma"], params[f"{p}.ln2.beta"], cfg.ln_eps)
        y = y + mlp_block(h, params, f"{p}.mlp")
    return layer_norm(y, params["final_ln.gamma"], params["final_ln.beta"], cfg.ln_eps)


def forward_batch(voxels: Sequence, subjects: Sequence[str], params: Mapping[str, Tensor],
                  cfg: ModelConfig) -> Tensor:
    """Encode a mixed-subject batch; returns ``Z`` of shape ``(B, N, d)``."""
    y = encode(embed_tokens(voxels, subjects, params, cfg), params, cfg)
    return getitem(y, (slice(None), slice(1, None)))


def forward(v, s: str, params: Mapping[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Encode one trial; returns ``Z`` of shape ``(N, d)``."""
    z = forward_batch([v], [s], params, cfg)
    return reshape(z, z.shape[1:])
