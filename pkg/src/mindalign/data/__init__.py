"""Datasets, the MFT1 tensor container and the synthetic generator."""

from .dataset import Dataset, TargetEmbedding, TrialRecord, save_dataset, subset
from .manifest import MANIFEST_SCHEMA, load_manifest, validate_manifest
from .mft import read_mft, read_mft_entry, read_mft_header, write_mft
from .synthetic import SyntheticOracle, SyntheticSpec, generate_synthetic, synthesize

__all__ = [
    "Dataset", "MANIFEST_SCHEMA", "SyntheticOracle", "SyntheticSpec", "TargetEmbedding", "TrialRecord",
    "generate_synthetic", "load_manifest", "read_mft", "read_mft_entry", "read_mft_header",
    "save_dataset", "subset", "synthesize", "validate_manifest", "write_mft",
]
