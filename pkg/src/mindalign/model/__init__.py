from .adapter import adapter_forward, init_adapter
from .checkpoint import load_checkpoint, save_checkpoint
from .diagnostics import end_to_end_gradcheck, gradcheck_config
from .config import DESK_SUBJECTS, PRESETS, AdapterConfig, ModelConfig, preset_config
from .encoder import attention_block, embed_tokens, encode, forward, forward_batch, subject_project
from .params import (
    cast_params,
    decays,
    enumerate_count,
    init_params,
    param_count,
    param_shapes,
    subject_increment,
    trainable_names,
)

__all__ = [
    "AdapterConfig", "DESK_SUBJECTS", "ModelConfig", "PRESETS", "adapter_forward",
    "attention_block", "cast_params", "decays", "embed_tokens", "encode", "end_to_end_gradcheck", "gradcheck_config", "enumerate_count",
    "forward", "forward_batch", "init_adapter", "init_params", "load_checkpoint", "param_count",
    "param_shapes", "preset_config", "save_checkpoint", "subject_increment", "subject_project",
    "trainable_names",
]
