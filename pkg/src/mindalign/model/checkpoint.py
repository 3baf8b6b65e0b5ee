"""Checkpoints: one MFT1 entry per parameter plus a JSON header beside it."""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np

from ..data.mft import read_mft, write_mft
from ..errors import FormatError
from ..numerics import Tensor
from .config import ModelConfig
from .params import param_shapes


def header_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(path, params: Mapping[str, Tensor], cfg: ModelConfig, meta: dict | None = None) -> None:
    path = Path(path)
    write_mft(path, OrderedDict((k, p.data) for k, p in params.items()))
    header = {"format": "MFT1", "model_config": cfg.to_dict(), "meta": meta or {}}
    header_path(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path, dtype=None) -> tuple["OrderedDict[str, Tensor]", ModelConfig, dict]:
    path = Path(path)
    try:
        header = json.loads(header_path(path).read_text())
        cfg = ModelConfig.from_dict(header["model_config"])
    except FileNotFoundError:
        raise FormatError(f"missing checkpoint header {header_path(path)}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad checkpoint header {header_path(path)}: {exc}") from None
    arrays = read_mft(path)
    params: OrderedDict[str, Tensor] = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        if name not in arrays:
            raise FormatError(f"checkpoint {path} is missing entry {name!r}")
        arr = arrays.pop(name)
        if arr.shape != shape:
            raise FormatError(f"checkpoint entry {name!r} has shape {arr.shape}, expected {shape}")
        if not np.isfinite(arr).all():
            raise FormatError(f"checkpoint entry {name!r} holds non-finite values")
        params[name] = Tensor(arr if dtype is None else arr.astype(dtype), requires_grad=True, name=name)
    if arrays:
        raise FormatError(f"checkpoint {path} has unexpected entries {sorted(arrays)}")
    return params, cfg, header.get("meta", {})
