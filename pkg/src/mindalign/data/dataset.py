from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import DataError
from .mft import write_mft

SPLITS = ("train", "test")
MANIFEST_VERSION = 1


class TrialRecord:
    """One fMRI presentation. Voxels may be loaded lazily on first access."""

    __slots__ = ("subject_id", "stimulus_id", "split", "_voxels", "_loader")

    def __init__(self, subject_id: str, stimulus_id: str, voxels=None, split: str = "train",
                 loader: Callable[[], np.ndarray] | None = None):
        if not stimulus_id:
            raise DataError("stimulus_id must be non-empty")
        if split not in SPLITS:
            raise DataError(f"split must be one of {SPLITS}, got {split!r}")
        self.subject_id = subject_id
        self.stimulus_id = stimulus_id
        self.split = split
        self._voxels = None if voxels is None else np.asarray(voxels, dtype=np.float32)
        self._loader = loader

    @property
    def voxels(self) -> np.ndarray:
        if self._voxels is None:
            self._voxels = np.asarray(self._loader(), dtype=np.float32)
        return self._voxels

    def __repr__(self):
        return f"TrialRecord({self.subject_id!r}, {self.stimulus_id!r}, split={self.split!r})"


@dataclass(frozen=True)
class TargetEmbedding:
    stimulus_id: str
    matrix: np.ndarray  # (N, d)


class Dataset:
    """Validated trials plus one target embedding per stimulus."""

    def __init__(self, n_tokens: int, token_dim: int, subjects: Sequence[tuple[str, int]],
                 trials: Sequence[TrialRecord], embeddings: dict[str, np.ndarray],
                 repetition_policy: str = "separate"):
        self.n_tokens = n_tokens
        self.token_dim = token_dim
        self.subjects = tuple((str(s), int(f)) for s, f in subjects)
        self.trials = list(trials)
        self.embeddings = embeddings
        self.repetition_policy = repetition_policy
        self.check()

    def check(self) -> None:
        counts = dict(self.subjects)
        for i, t in enumerate(self.trials):
            if t.subject_id not in counts:
                raise DataError(f"trial {i}: undeclared subject {t.subject_id!r}")
            if t.stimulus_id not in self.embeddings:
                raise DataError(f"trial {i}: no embedding for stimulus {t.stimulus_id!r}")
            if t._voxels is not None and t._voxels.shape != (counts[t.subject_id],):
                raise DataError(f"trial {i}: subject {t.subject_id!r} expects {counts[t.subject_id]} "
                                f"voxels, got shape {t._voxels.shape}")
        for sid, e in self.embeddings.items():
            if e.shape != (self.n_tokens, self.token_dim):
                raise DataError(f"embedding for stimulus {sid!r} has shape {e.shape}, "
                                f"expected {(self.n_tokens, self.token_dim)}")

    @property
    def subject_ids(self) -> list[str]:
        return [s for s, _ in self.subjects]

    def __len__(self):
        return len(self.trials)

    def select(self, split: str | None = None, subjects: Iterable[str] | None = None) -> list[TrialRecord]:
        if split is not None and split not in SPLITS:
            raise DataError(f"unknown split {split!r}; expected one of {SPLITS}")
        keep = None if subjects is None else set(subjects)
        return [t for t in self.trials
                if (split is None or t.split == split) and (keep is None or t.subject_id in keep)]

    def restrict(self, subjects: Iterable[str]) -> "Dataset":
        """Dataset limited to the given subjects (in the given order)."""
        subjects = list(subjects)
        counts = dict(self.subjects)
        missing = [s for s in subjects if s not in counts]
        if missing:
            raise DataError(f"unknown subjects {missing}")
        keep = set(subjects)
        return Dataset(self.n_tokens, self.token_dim, [(s, counts[s]) for s in subjects],
                       [t for t in self.trials if t.subject_id in keep], self.embeddings,
                       self.repetition_policy)

    def arrays(self, trials: Sequence[TrialRecord]):
        """Voxel list, subject list and stacked ``(B, N, d)`` targets for ``trials``."""
        voxels = [t.voxels for t in trials]
        subjects = [t.subject_id for t in trials]
        if trials:
            targets = np.stack([self.embeddings[t.stimulus_id] for t in trials]).astype(np.float32)
        else:
            targets = np.zeros((0, self.n_tokens, self.token_dim), dtype=np.float32)
        return voxels, subjects, targets


def subset(dataset: Dataset, per_subject_count: int, seed: int) -> Dataset:
    """Seeded uniform subsample of each subject's training trials; test trials are kept."""
    rng = np.random.default_rng(seed)
    kept: set[int] = {i for i, t in enumerate(dataset.trials) if t.split != "train"}
    for sid in dataset.subject_ids:
        idx = [i for i, t in enumerate(dataset.trials) if t.split == "train" and t.subject_id == sid]
        if per_subject_count > len(idx):
            raise DataError(f"subject {sid!r} has {len(idx)} training trials, "
                            f"cannot take {per_subject_count}")
        if per_subject_count < 0:
            raise DataError("per_subject_count must be non-negative")
        chosen = rng.choice(len(idx), size=per_subject_count, replace=False)
        kept.update(idx[j] for j in chosen)
    trials = [t for i, t in enumerate(dataset.trials) if i in kept]
    return Dataset(dataset.n_tokens, dataset.token_dim, dataset.subjects, trials,
                   dataset.embeddings, dataset.repetition_policy)


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write voxel/embedding containers and ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: dict[str, list[np.ndarray]] = {sid: [] for sid, _ in dataset.subjects}
    trials_json = []
    for t in dataset.trials:
        trials_json.append({"subject_id": t.subject_id, "stimulus_id": t.stimulus_id,
                            "voxel_file": f"voxels_{t.subject_id}.mft", "voxel_entry": "voxels",
                            "voxel_row": len(rows[t.subject_id]), "split": t.split})
        rows[t.subject_id].append(t.voxels)
    for sid, vs in rows.items():
        if vs:
            write_mft(out / f"voxels_{sid}.mft", {"voxels": np.stack(vs).astype(np.float32)})

    stim_ids = list(dataset.embeddings)
    write_mft(out / "embeddings.mft",
              {"embeddings": np.stack([dataset.embeddings[s] for s in stim_ids]).astype(np.float32)})
    manifest = OrderedDict(
        schema_version=MANIFEST_VERSION,
        n_tokens=dataset.n_tokens,
        token_dim=dataset.token_dim,
        subjects=[{"subject_id": s, "voxel_count": f} for s, f in dataset.subjects],
        trials=trials_json,
        embeddings=[{"stimulus_id": s, "file": "embeddings.mft", "entry": "embeddings", "row": i}
                    for i, s in enumerate(stim_ids)],
        repetition_policy=dataset.repetition_policy,
    )
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path
