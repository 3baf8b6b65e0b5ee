"""Seeded multi-subject generator with a known linear forward model.

For every stimulus a latent ``c ~ N(0, I_k)`` is drawn. Its target embedding is
``reshape(G c, N x d)`` for one shared projection ``G``; subject ``s`` observes
``A_s c + b_s + noise``. The subject offsets ``b_s`` are the inter-subject
variation the subject tokens are meant to absorb.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..model.config import DESK_SUBJECTS
from .dataset import Dataset, TrialRecord, save_dataset


@dataclass(frozen=True)
class SyntheticSpec:
    subjects: tuple[tuple[str, int], ...] = DESK_SUBJECTS
    n_tokens: int = 4
    token_dim: int = 16
    latent_dim: int = 12
    noise_std: float = 0.1
    bias_std: float = 1.0
    n_stimuli: int = 600
    n_test: int = 100
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple((str(s), int(f)) for s, f in self.subjects))
        if not self.noise_std >= 0:
            raise ConfigError("noise_std must be >= 0")
        if not self.bias_std >= 0:
            raise ConfigError("bias_std must be >= 0")
        if self.repetitions < 1 or self.latent_dim < 1 or self.n_tokens < 1 or self.token_dim < 1:
            raise ConfigError("repetitions, latent_dim, n_tokens and token_dim must be >= 1")
        if not 0 <= self.n_test < self.n_stimuli:
            raise ConfigError(f"n_test must lie in [0, n_stimuli), got {self.n_test} of {self.n_stimuli}")
        if not self.subjects:
            raise ConfigError("at least one subject is required")

    @property
    def n_train(self) -> int:
        return self.n_stimuli - self.n_test

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subjects"] = [list(s) for s in self.subjects]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic spec fields: {sorted(unknown)}")
        d = dict(d)
        if "subjects" in d:
            d["subjects"] = tuple(tuple(s) for s in d["subjects"])
        return cls(**d)


@dataclass
class SyntheticOracle:
    """Ground-truth generator state, kept for verification."""

    projection: np.ndarray                  # G, (N*d, k)
    latents: np.ndarray                     # (n_stimuli, k)
    mixing: dict[str, np.ndarray] = field(default_factory=dict)   # A_s, (F_s, k)
    biases: dict[str, np.ndarray] = field(default_factory=dict)   # b_s, (F_s,)


def stimulus_id(i: int) -> str:
    return f"stim{i:05d}"


def synthesize(spec: SyntheticSpec) -> tuple[Dataset, SyntheticOracle]:
    rng = np.random.default_rng(spec.seed)
    k, n, d = spec.latent_dim, spec.n_tokens, spec.token_dim
    g = rng.normal(0.0, 1.0 / np.sqrt(k), size=(n * d, k))
    mixing, biases = {}, {}
    for sid, f in spec.subjects:
        mixing[sid] = rng.normal(0.0, 1.0 / np.sqrt(k), size=(f, k))
        biases[sid] = rng.normal(0.0, spec.bias_std, size=f) if spec.bias_std > 0 else np.zeros(f)
    latents = rng.normal(size=(spec.n_stimuli, k))
    targets = (latents @ g.T).reshape(spec.n_stimuli, n, d).astype(np.float32)
    embeddings = {stimulus_id(i): targets[i] for i in range(spec.n_stimuli)}

    trials = []
    for sid, f in spec.subjects:
        clean = latents @ mixing[sid].T + biases[sid]
        for r in range(spec.repetitions):
            noisy = clean + rng.normal(0.0, spec.noise_std, size=clean.shape) if spec.noise_std else clean
            for i in range(spec.n_stimuli):
                split = "test" if i >= spec.n_train else "train"
                trials.append(TrialRecord(sid, stimulus_id(i), noisy[i], split=split))
    dataset = Dataset(n, d, spec.subjects, trials, embeddings, "separate")
    return dataset, SyntheticOracle(g, latents, mixing, biases)


def generate_synthetic(spec: SyntheticSpec, out_dir) -> Path:
    """Write a synthetic dataset to ``out_dir``; returns the manifest path."""
    dataset, _ = synthesize(spec)
    path = save_dataset(dataset, out_dir)
    (Path(out_dir) / "synthetic_spec.json").write_text(json.dumps(spec.to_dict(), indent=1, sort_keys=True) + "\n")
    return path
