from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field

from ..errors import ConfigError

_SUBJECT_ID = re.compile(r"^[A-Za-z0-9_-]+$")

# voxel counts of the four synthetic desk subjects
DESK_SUBJECTS: tuple[tuple[str, int], ...] = (("S1", 120), ("S2", 100), ("S3", 90), ("S4", 80))


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``subjects`` is an ordered tuple of ``(subject_id, voxel_count)`` pairs.
    With ``subject_tokens=False`` the token slot is kept but pinned at zero and
    never trained, so parameter shapes match the tokenised model exactly.
    """

    n_tokens: int = 16
    token_dim: int = 768
    depth: int = 12
    heads: int = 8
    mlp_ratio: float = 4.0
    subjects: tuple[tuple[str, int], ...] = field(default_factory=tuple)
    ln_eps: float = 1e-6
    seed: int = 0
    subject_tokens: bool = True

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple((str(s), int(f)) for s, f in self.subjects))
        self.validate()

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.mlp_ratio * self.token_dim))

    @property
    def head_dim(self) -> int:
        return self.token_dim // self.heads

    @property
    def subject_ids(self) -> list[str]:
        return [s for s, _ in self.subjects]

    def voxel_count(self, subject_id: str) -> int:
        return dict(self.subjects)[subject_id]

    def validate(self) -> None:
        for name in ("n_tokens", "token_dim", "depth", "heads"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.token_dim % self.heads:
            raise ConfigError(f"token_dim {self.token_dim} is not divisible by heads {self.heads}")
        if not self.mlp_ratio > 0 or self.mlp_hidden < 1:
            raise ConfigError(f"mlp_ratio must give a positive hidden width, got {self.mlp_ratio}")
        if not self.ln_eps > 0:
            raise ConfigError("ln_eps must be positive")
        if not self.subjects:
            raise ConfigError("at least one subject is required")
        seen = set()
        for sid, f in self.subjects:
            if not _SUBJECT_ID.match(sid):
                raise ConfigError(f"subject id {sid!r} must match [A-Za-z0-9_-]+")
            if sid in seen:
                raise ConfigError(f"duplicate subject id {sid!r}")
            seen.add(sid)
            if f < 1:
                raise ConfigError(f"subject {sid!r} needs at least one voxel, got {f}")

    def with_subjects(self, subjects) -> "ModelConfig":
        return ModelConfig(**{**self.to_dict(), "subjects": tuple(subjects)})

    def replace(self, **changes) -> "ModelConfig":
        return ModelConfig(**{**self.to_dict(), **changes})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subjects"] = [list(s) for s in self.subjects]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        if "subjects" in known:
            known["subjects"] = tuple(tuple(s) for s in known["subjects"])
        return cls(**known)


PRESETS = {
    "desk": dict(n_tokens=4, token_dim=16, depth=2, heads=2, mlp_ratio=4.0),
    "full": dict(n_tokens=16, token_dim=768, depth=12, heads=8, mlp_ratio=4.0),
}


def preset_config(name: str, subjects=DESK_SUBJECTS, **overrides) -> ModelConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ModelConfig(**{**base, "subjects": tuple(subjects), **overrides})


@dataclass(frozen=True)
class AdapterConfig:
    """Two-layer MLP mapping an encoder output onto ``out_tokens x out_dim``."""

    out_tokens: int
    out_dim: int
    hidden: int

    def __post_init__(self):
        for name in ("out_tokens", "out_dim", "hidden"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"adapter {name} must be a positive integer, got {v!r}")
