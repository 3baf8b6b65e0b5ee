import csv

import numpy as np
import pytest

from mindalign.data import SyntheticSpec, TrialRecord, synthesize
from mindalign.data.dataset import Dataset
from mindalign.errors import DataError, NonFiniteError
from mindalign.eval import evaluate
from mindalign.model import ModelConfig, init_params, load_checkpoint, preset_config
from mindalign.objective import LossConfig
from mindalign.train import CSV_HEADER, OptimizerState, TrainConfig, fit, train_epoch

SUBJECTS = (("A", 10), ("B", 6))


@pytest.fixture(scope="module")
def small():
    spec = SyntheticSpec(subjects=SUBJECTS, n_tokens=2, token_dim=8, latent_dim=4, n_stimuli=30, n_test=6, seed=5)
    dataset, _ = synthesize(spec)
    cfg = ModelConfig(n_tokens=2, token_dim=8, depth=1, heads=2, mlp_ratio=2.0, subjects=SUBJECTS, seed=1)
    return dataset, cfg


def one_trial(dataset):
    t = dataset.select("train")[0]
    return Dataset(dataset.n_tokens, dataset.token_dim, dataset.subjects, [t], dataset.embeddings,
                   dataset.repetition_policy)


def run_epochs(dataset, cfg, tcfg, epochs):
    params, state = init_params(cfg), OptimizerState()
    trials = dataset.select("train")
    losses = []
    for ep in range(1, epochs + 1):
        params, m = train_epoch(params, cfg, dataset, trials, state, tcfg, LossConfig(), ep)
        losses.append(m["total"])
    return params, losses


class TestTrainEpoch:
    def test_overfit_single_trial(self, small):
        dataset, cfg = small
        _, losses = run_epochs(one_trial(dataset), cfg, TrainConfig(lr=1e-3, batch_size=1), 10)
        assert losses[-1] < losses[0]

    def test_single_sample_monotone(self):
        dataset, _ = synthesize(SyntheticSpec(n_stimuli=20, n_test=4))
        _, losses = run_epochs(one_trial(dataset), preset_config("desk"), TrainConfig(lr=1e-3, batch_size=1), 30)
        rises = sum(b > a for a, b in zip(losses, losses[1:]))
        assert rises <= 2

    def test_same_seed_same_trajectory(self, small):
        dataset, cfg = small
        tcfg = TrainConfig(lr=1e-3, seed=4)
        p1, l1 = run_epochs(dataset, cfg, tcfg, 3)
        p2, l2 = run_epochs(dataset, cfg, tcfg, 3)
        assert l1 == l2
        for k in p1:
            np.testing.assert_array_equal(p1[k].data, p2[k].data)

    def test_shuffle_seed_matters(self, small):
        dataset, cfg = small
        _, l1 = run_epochs(dataset, cfg, TrainConfig(lr=1e-3, seed=0), 2)
        _, l2 = run_epochs(dataset, cfg, TrainConfig(lr=1e-3, seed=1), 2)
        assert l1 != l2

    def test_returns_all_means(self, small):
        dataset, cfg = small
        _, m = train_epoch(init_params(cfg), cfg, dataset, dataset.select("train"), OptimizerState(),
                           TrainConfig(), LossConfig(alpha=0.5), 1)
        assert set(m) == {"total", "l1", "contrastive"}
        assert m["total"] == pytest.approx(m["l1"] + 0.5 * m["contrastive"], rel=1e-5)

    def test_frozen_token_stays_zero(self, small):
        dataset, cfg = small
        cfg = cfg.replace(subject_tokens=False)
        params, _ = run_epochs(dataset, cfg, TrainConfig(lr=1e-2), 1)
        assert not params["subject.A.token"].data.any()

    def test_empty(self, small):
        dataset, cfg = small
        with pytest.raises(DataError):
            train_epoch(init_params(cfg), cfg, dataset, [], OptimizerState(), TrainConfig(), LossConfig(), 1)


class TestFit:
    def test_rows_and_csv(self, small, tmp_path):
        dataset, cfg = small
        res = fit(cfg, TrainConfig(epochs=1), dataset, out_dir=tmp_path)
        with open(tmp_path / "metrics.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_HEADER
        assert [r[:2] for r in rows[1:]] == [["1", "train"], ["1", "test"], ["1", "best"]]
        assert len(res.rows) == 3

    def test_test_only_rows(self, small):
        dataset, cfg = small
        res = fit(cfg, TrainConfig(epochs=1), dataset, eval_train=False)
        assert [r["split"] for r in res.rows] == ["test", "best"]

    def test_best_checkpoint_round_trip(self, small, tmp_path):
        dataset, cfg = small
        res = fit(cfg, TrainConfig(epochs=4, lr=3e-3), dataset, out_dir=tmp_path)
        params, cfg2, meta = load_checkpoint(tmp_path / "checkpoint.mft")
        assert cfg2 == cfg and meta["epoch"] == res.best_epoch
        again = evaluate(params, cfg2, dataset, "test", LossConfig())
        assert again == res.best
        assert again.to_dict() == meta["metrics"]

    def test_bit_identical_runs(self, small, tmp_path):
        dataset, cfg = small
        for run in ("a", "b"):
            fit(cfg, TrainConfig(epochs=2, seed=9), dataset, out_dir=tmp_path / run)
        for name in ("checkpoint.mft", "checkpoint.json", "metrics.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_voxel_mismatch_names_trial(self, small):
        dataset, cfg = small
        trials = list(dataset.select("train"))
        # lazily loaded voxels slip past construction-time checks
        trials[3] = TrialRecord(trials[3].subject_id, trials[3].stimulus_id, split="train",
                                loader=lambda: np.zeros(99))
        bad = Dataset(dataset.n_tokens, dataset.token_dim, dataset.subjects, trials + dataset.select("test"),
                      dataset.embeddings, dataset.repetition_policy)
        with pytest.raises(DataError, match="trial 3"):
            fit(cfg, TrainConfig(epochs=1), bad)

    def test_unknown_subject(self, small):
        dataset, cfg = small
        with pytest.raises(DataError):
            fit(cfg.with_subjects(SUBJECTS[:1]), TrainConfig(epochs=1), dataset.restrict(["B"]))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_aborts(self, small):
        dataset, cfg = small
        trials = list(dataset.select("train"))
        t = trials[0]
        trials[0] = TrialRecord(t.subject_id, t.stimulus_id, np.full(t.voxels.shape, np.inf), "train")
        bad = Dataset(dataset.n_tokens, dataset.token_dim, dataset.subjects, trials + dataset.select("test"),
                      dataset.embeddings, dataset.repetition_policy)
        with pytest.raises(NonFiniteError, match="epoch 1"):
            fit(cfg, TrainConfig(epochs=1, shuffle=False), bad)
