"""Strict, versioned dataset manifests.

Voxel and embedding payloads live in MFT1 containers referenced by
``(file, entry, row)``; paths are relative to the manifest's directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from ..errors import FormatError, ValidationError
from .dataset import MANIFEST_VERSION, SPLITS, Dataset, TrialRecord
from .mft import read_mft, read_mft_header

_ID = {"type": "string", "minLength": 1}
_COUNT = {"type": "integer", "minimum": 1}
_INDEX = {"type": "integer", "minimum": 0}

MANIFEST_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "n_tokens", "token_dim", "subjects", "trials", "embeddings",
                 "repetition_policy"],
    "properties": {
        "schema_version": {"const": MANIFEST_VERSION},
        "n_tokens": _COUNT,
        "token_dim": _COUNT,
        "subjects": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["subject_id", "voxel_count"],
                "properties": {"subject_id": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
                               "voxel_count": _COUNT},
            },
        },
        "trials": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["subject_id", "stimulus_id", "voxel_file", "voxel_entry", "voxel_row", "split"],
                "properties": {"subject_id": _ID, "stimulus_id": _ID, "voxel_file": _ID,
                               "voxel_entry": _ID, "voxel_row": _INDEX, "split": {"enum": list(SPLITS)}},
            },
        },
        "embeddings": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["stimulus_id", "file", "entry", "row"],
                "properties": {"stimulus_id": _ID, "file": _ID, "entry": _ID, "row": _INDEX},
            },
        },
        "repetition_policy": {"enum": ["separate", "averaged"]},
    },
}


def _headers(root: Path, fname: str, cache: dict, where: str):
    if fname not in cache:
        path = root / fname
        if not path.is_file():
            raise ValidationError(f"{where}: file {fname!r} does not exist")
        try:
            cache[fname] = read_mft_header(path)
        except FormatError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    return cache[fname]


def validate_manifest(doc: dict, root: Path) -> None:
    try:
        jsonschema.validate(doc, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"manifest field {loc}: {exc.message}") from None

    n, d = doc["n_tokens"], doc["token_dim"]
    counts: dict[str, int] = {}
    for s in doc["subjects"]:
        if s["subject_id"] in counts:
            raise ValidationError(f"duplicate subject {s['subject_id']!r}")
        counts[s["subject_id"]] = s["voxel_count"]

    headers: dict = {}
    embedded: dict[str, int] = {}
    for e in doc["embeddings"]:
        sid = e["stimulus_id"]
        embedded[sid] = embedded.get(sid, 0) + 1
        info = _headers(root, e["file"], headers, f"embedding for stimulus {sid!r}").get(e["entry"])
        if info is None:
            raise ValidationError(f"embedding for stimulus {sid!r}: no entry {e['entry']!r} in {e['file']!r}")
        if len(info.dims) != 3 or info.dims[1:] != (n, d):
            raise ValidationError(f"embedding for stimulus {sid!r} has shape {info.dims[1:]}, expected {(n, d)}")
        if e["row"] >= info.dims[0]:
            raise ValidationError(f"embedding for stimulus {sid!r}: row {e['row']} out of range")
    dupes = sorted(s for s, c in embedded.items() if c > 1)
    if dupes:
        raise ValidationError(f"stimuli with more than one embedding: {dupes[:5]}")

    for i, t in enumerate(doc["trials"]):
        where = f"trial {i}"
        if t["subject_id"] not in counts:
            raise ValidationError(f"{where}: undeclared subject {t['subject_id']!r}")
        if t["stimulus_id"] not in embedded:
            raise ValidationError(f"{where}: no embedding for stimulus {t['stimulus_id']!r}")
        info = _headers(root, t["voxel_file"], headers, where).get(t["voxel_entry"])
        if info is None:
            raise ValidationError(f"{where}: no entry {t['voxel_entry']!r} in {t['voxel_file']!r}")
        f = counts[t["subject_id"]]
        if len(info.dims) != 2 or info.dims[1] != f:
            raise ValidationError(f"{where}: voxel entry shape {info.dims} does not hold "
                                  f"{f} voxels of subject {t['subject_id']!r}")
        if t["voxel_row"] >= info.dims[0]:
            raise ValidationError(f"{where}: voxel row {t['voxel_row']} out of range ({info.dims[0]} rows)")


class _Store:
    """Loads each container once, on first access."""

    def __init__(self, root: Path):
        self.root = root
        self.cache: dict[str, dict] = {}

    def get(self, fname: str, entry: str) -> np.ndarray:
        if fname not in self.cache:
            self.cache[fname] = read_mft(self.root / fname)
        return self.cache[fname][entry]


def load_manifest(path) -> Dataset:
    """Validate eagerly; voxels are read lazily afterwards."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"manifest {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from None
    root = path.parent
    validate_manifest(doc, root)
    store = _Store(root)

    embeddings = {e["stimulus_id"]: np.array(store.get(e["file"], e["entry"])[e["row"]], dtype=np.float32)
                  for e in doc["embeddings"]}
    trials = []
    for t in doc["trials"]:
        def loader(f=t["voxel_file"], k=t["voxel_entry"], r=t["voxel_row"]):
            return store.get(f, k)[r]
        trials.append(TrialRecord(t["subject_id"], t["stimulus_id"], split=t["split"], loader=loader))
    return Dataset(doc["n_tokens"], doc["token_dim"],
                   [(s["subject_id"], s["voxel_count"]) for s in doc["subjects"]],
                   trials, embeddings, doc["repetition_policy"])
