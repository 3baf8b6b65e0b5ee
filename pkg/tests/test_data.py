import copy
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mindalign.data import (
    Dataset,
    SyntheticSpec,
    TrialRecord,
    generate_synthetic,
    load_manifest,
    read_mft,
    read_mft_header,
    save_dataset,
    subset,
    synthesize,
    write_mft,
)
from mindalign.errors import ConfigError, DataError, FormatError, ValidationError

SMALL = SyntheticSpec(subjects=(("S1", 9), ("S2", 7)), n_tokens=2, token_dim=4, latent_dim=3,
                      noise_std=0.1, n_stimuli=12, n_test=4, seed=5)


class TestMFT:
    def test_empty(self, tmp_path):
        write_mft(tmp_path / "e.mft", {})
        assert read_mft(tmp_path / "e.mft") == {}
        assert (tmp_path / "e.mft").read_bytes() == b"MFT1" + struct.pack("<II", 1, 0)

    def test_round_trip_ranks(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {
            "scalar": np.float64(3.25) * np.ones(()),
            "vec": rng.normal(size=5).astype(np.float32),
            "mat": rng.normal(size=(3, 4)),
            "cube": rng.normal(size=(2, 3, 4)).astype(np.float32),
        }
        write_mft(tmp_path / "t.mft", tensors)
        back = read_mft(tmp_path / "t.mft")
        assert list(back) == list(tensors)
        for k, v in tensors.items():
            assert back[k].dtype == v.dtype and back[k].shape == v.shape
            assert back[k].tobytes() == v.tobytes()

    def test_byte_layout(self, tmp_path):
        write_mft(tmp_path / "t.mft", {"ab": np.array([[1.0, -2.0]], dtype=np.float32)})
        expected = (b"MFT1" + struct.pack("<II", 1, 1) + struct.pack("<H", 2) + b"ab"
                    + struct.pack("<BB", 0, 2) + struct.pack("<QQ", 1, 2) + struct.pack("<ff", 1.0, -2.0))
        assert (tmp_path / "t.mft").read_bytes() == expected

    def test_truncated_names_entry(self, tmp_path):
        write_mft(tmp_path / "t.mft", {"first": np.zeros(3), "second": np.ones((4, 4))})
        raw = (tmp_path / "t.mft").read_bytes()
        (tmp_path / "t.mft").write_bytes(raw[:-10])
        with pytest.raises(FormatError, match=r"'second'.*byte offset \d+"):
            read_mft(tmp_path / "t.mft")
        with pytest.raises(FormatError, match="'second'"):
            read_mft_header(tmp_path / "t.mft")

    @pytest.mark.parametrize("mutate,msg", [
        (lambda b: b"MFT2" + b[4:], "magic"),
        (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "version"),
        (lambda b: b + b"\x00", "trailing"),
        (lambda b: b[:2], "truncated"),
    ])
    def test_corruptions(self, tmp_path, mutate, msg):
        write_mft(tmp_path / "t.mft", {"x": np.zeros(2)})
        (tmp_path / "t.mft").write_bytes(mutate((tmp_path / "t.mft").read_bytes()))
        with pytest.raises(FormatError, match=msg):
            read_mft(tmp_path / "t.mft")

    def test_rejects_non_ascii_and_ints(self, tmp_path):
        with pytest.raises(FormatError):
            write_mft(tmp_path / "t.mft", {"é": np.zeros(1)})
        with pytest.raises(FormatError):
            write_mft(tmp_path / "t.mft", {"i": np.zeros(1, dtype=np.int32)})

    @settings(max_examples=25, deadline=None)
    @given(st.lists(hnp.arrays(st.sampled_from([np.float32, np.float64]),
                               hnp.array_shapes(min_dims=0, max_dims=3, max_side=4),
                               elements=st.floats(allow_nan=False, allow_infinity=False, width=32)),
                    max_size=4))
    def test_round_trip_property(self, tmp_path_factory, arrays):
        path = tmp_path_factory.mktemp("mft") / "p.mft"
        tensors = {f"t{i}": a for i, a in enumerate(arrays)}
        write_mft(path, tensors)
        back = read_mft(path)
        for k, v in tensors.items():
            assert back[k].dtype == v.dtype and back[k].shape == v.shape and back[k].tobytes() == v.tobytes()


class TestSynthetic:
    def test_noiseless_is_linear_in_latent(self):
        spec = SyntheticSpec(subjects=(("S1", 20), ("S2", 15)), n_tokens=2, token_dim=4, latent_dim=5,
                             noise_std=0.0, n_stimuli=30, n_test=5, seed=1)
        ds, oracle = synthesize(spec)
        for sid, _ in spec.subjects:
            trials = ds.select(subjects=[sid])
            v = np.stack([t.voxels for t in trials]).astype(np.float64) - oracle.biases[sid]
            c, *_ = np.linalg.lstsq(oracle.mixing[sid], v.T, rcond=None)
            assert np.abs(oracle.mixing[sid] @ c - v.T).max() < 1e-5
            np.testing.assert_allclose(c.T, oracle.latents, atol=1e-4)

    def test_noiseless_voxels_in_affine_span(self):
        spec = SyntheticSpec(subjects=(("S1", 20),), latent_dim=5, noise_std=0.0, n_stimuli=30, n_test=5)
        ds, oracle = synthesize(spec)
        v = np.stack([t.voxels for t in ds.trials]).astype(np.float64) - oracle.biases["S1"]
        q, _ = np.linalg.qr(oracle.mixing["S1"])
        resid = v.T - q @ (q.T @ v.T)
        assert np.abs(resid).max() < 1e-5

    def test_targets_follow_projection(self):
        ds, oracle = synthesize(SMALL)
        for i, sid in enumerate(sorted(ds.embeddings)):
            expected = (oracle.projection @ oracle.latents[i]).reshape(2, 4)
            np.testing.assert_allclose(ds.embeddings[sid], expected, rtol=1e-5, atol=1e-6)

    def test_subject_offsets(self):
        spec = SyntheticSpec(subjects=(("S1", 30), ("S2", 30)), latent_dim=4, noise_std=0.5,
                             n_stimuli=400, n_test=0 + 1, seed=2)
        ds, oracle = synthesize(spec)
        assert np.abs(oracle.biases["S1"] - oracle.biases["S2"]).max() > 0.1
        bound = spec.noise_std / np.sqrt(spec.n_stimuli)
        for sid in ("S1", "S2"):
            v = np.stack([t.voxels for t in ds.select(subjects=[sid])]).astype(np.float64)
            resid_mean = (v - oracle.latents @ oracle.mixing[sid].T).mean(axis=0)
            dev = np.abs(resid_mean - oracle.biases[sid])
            assert (dev > 3 * bound).mean() <= 0.05
            assert dev.max() < 5 * bound

    def test_split_and_repetitions(self):
        spec = SyntheticSpec(subjects=(("S1", 5),), n_stimuli=10, n_test=3, repetitions=2)
        ds, _ = synthesize(spec)
        assert len(ds) == 20
        assert len(ds.select("test")) == 6
        # repetitions are separate trials with separate noise
        reps = [t.voxels for t in ds.trials if t.stimulus_id == "stim00000"]
        assert len(reps) == 2 and not np.array_equal(reps[0], reps[1])

    def test_byte_identical_files(self, tmp_path):
        generate_synthetic(SMALL, tmp_path / "a")
        generate_synthetic(SMALL, tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(noise_std=-1.0)
        with pytest.raises(ConfigError):
            SyntheticSpec(repetitions=0)


@pytest.fixture
def written(tmp_path):
    path = generate_synthetic(SMALL, tmp_path / "ds")
    return path, json.loads(path.read_text())


class TestManifest:
    def test_loads_and_matches_memory(self, written):
        path, _ = written
        ds = load_manifest(path)
        mem, _ = synthesize(SMALL)
        assert ds.subjects == (("S1", 9), ("S2", 7))
        assert len(ds) == len(mem) == 24
        assert len(ds.select("train")) == 16 and len(ds.select("test")) == 8
        for a, b in zip(ds.trials, mem.trials):
            assert (a.subject_id, a.stimulus_id, a.split) == (b.subject_id, b.stimulus_id, b.split)
            assert a.voxels.tobytes() == b.voxels.tobytes()

    def test_lazy_voxels(self, written):
        ds = load_manifest(written[0])
        assert all(t._voxels is None for t in ds.trials)

    def test_undeclared_subject(self, written):
        path, doc = written
        doc["trials"][0]["subject_id"] = "S9"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="undeclared subject"):
            load_manifest(path)

    def test_wrong_embedding_dim_names_stimulus(self, written):
        path, doc = written
        write_mft(path.parent / "bad.mft", {"e": np.zeros((1, 2, 5), dtype=np.float32)})
        doc["embeddings"][3].update(file="bad.mft", entry="e", row=0)
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="stim00003"):
            load_manifest(path)

    def test_unknown_field(self, written):
        path, doc = written
        doc["extra"] = 1
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            load_manifest(path)


def _leaf_paths(doc):
    """(container, key) for every scalar field of a representative manifest item."""
    yield from ((doc, k) for k in doc if not isinstance(doc[k], list))
    for section in ("subjects", "trials", "embeddings"):
        item = doc[section][0]
        yield from ((item, k) for k in item)


def _corruptions(value):
    yield "delete", None
    yield "null", None
    if isinstance(value, bool):
        return
    if isinstance(value, int):
        yield "negative", -1
        yield "huge", value + 10**6
        yield "stringified", str(value)
    elif isinstance(value, str):
        yield "garbage", "__corrupt__"
        yield "empty", ""
        yield "number", 7


def fuzz_cases(doc):
    cases = []
    for idx, (container, key) in enumerate(_leaf_paths(doc)):
        for kind, new in _corruptions(container[key]):
            cases.append((idx, key, kind, new))
    return cases


def test_manifest_fuzz_rejects_every_single_field_corruption(written):
    path, doc = written
    cases = fuzz_cases(doc)
    assert len(cases) > 40
    survivors = []
    for idx, key, kind, new in cases:
        mutated = copy.deepcopy(doc)
        container, k = list(_leaf_paths(mutated))[idx]
        if kind == "delete":
            del container[k]
        else:
            container[k] = new
        path.write_text(json.dumps(mutated))
        try:
            load_manifest(path)
        except ValidationError:
            continue
        survivors.append((key, kind))
    assert survivors == []


class TestSubset:
    def test_identity(self):
        ds, _ = synthesize(SMALL)
        out = subset(ds, 8, seed=1)
        assert [id(t) for t in out.trials] == [id(t) for t in ds.trials]

    def test_cardinality(self):
        spec = SyntheticSpec(subjects=(("S1", 4), ("S2", 4)), n_stimuli=2100, n_test=100, latent_dim=2)
        ds, _ = synthesize(spec)
        out = subset(ds, 500, seed=0)
        for sid in ("S1", "S2"):
            assert len(out.select("train", [sid])) == 500
            assert len(out.select("test", [sid])) == 100

    def test_deterministic(self):
        ds, _ = synthesize(SMALL)
        a = [t.stimulus_id for t in subset(ds, 3, seed=4).trials]
        b = [t.stimulus_id for t in subset(ds, 3, seed=4).trials]
        assert a == b

    def test_too_many(self):
        ds, _ = synthesize(SMALL)
        with pytest.raises(DataError):
            subset(ds, 9, seed=0)

    def test_written_subset_reloads(self, tmp_path):
        ds, _ = synthesize(SMALL)
        path = save_dataset(subset(ds, 2, seed=0), tmp_path)
        assert len(load_manifest(path).select("train")) == 4


def test_dataset_rejects_wrong_voxel_length():
    with pytest.raises(DataError):
        Dataset(1, 2, [("a", 3)], [TrialRecord("a", "s", np.zeros(4))], {"s": np.zeros((1, 2))})
