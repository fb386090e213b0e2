"""
학습 루프 테스트
================

trainer.py를 검증합니다.

[테스트 데이터]
    작은 방(5m × 5m)에서 400 스텝 수집 → 라벨링 → 작은 모델(H = 3)로 학습
"""

import csv
import math
import sys
import os

import numpy as np
import pytest

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.loader import build_config
from core import diffnet as dn
from core import trainer as trainer_module
from core.errors import DatasetError, NonFiniteError, TrainingDivergedError
from core.model import PredictiveModel
from core.trainer import (
    CURVE_COLUMNS,
    collision_pos_weight,
    iterate_batches,
    split_by_episode,
    train,
    write_curve,
)
from pipeline.collector import collect
from pipeline.dataset import EpisodeDataset
from pipeline.labeler import build_samples, label_dataset
from simulator.terrain import Region, build_map


def tiny_config(horizon: int = 3, **training):
    return build_config({
        "simulator": {"camera_rays": 4, "ground_lookaheads": [0.5, 1.0]},
        "model": {"encoder_sizes": [8, 4], "rnn_hidden": 4, "action_embed": 3, "output_hidden": 5,
                  "horizon": horizon},
        "labeler": {"horizon": horizon},
        "planner": {"horizon": horizon},
        "training": {"batch_size": 64, "max_epochs": 3, "patience": 2, **training},
    })


def room_dataset(config, steps: int = 400, seed: int = 5) -> EpisodeDataset:
    rows = ["#" * 10] + ["#" + "." * 8 + "#"] * 8 + ["#" * 10]
    terrain = build_map(rows, Region(0.5, 0.5, 1.5, 1.5), Region(3.5, 3.5, 4.5, 4.5), name="room")
    records = list(collect(terrain, steps, "range", seed, config.collector, config.simulator))
    return label_dataset(EpisodeDataset.from_records(records), config.labeler)


class TestSplit:
    """학습 / 검증 분할 테스트"""

    def test_split_by_whole_episodes(self):
        config = tiny_config()
        samples = build_samples(room_dataset(config), 3)
        train_idx, val_idx = split_by_episode(samples, 0.3, np.random.default_rng(0))
        assert len(train_idx) > 0 and len(val_idx) > 0
        assert len(np.intersect1d(train_idx, val_idx)) == 0
        assert len(train_idx) + len(val_idx) == len(samples)
        # 한 에피소드가 양쪽에 나뉘면 안 됨
        assert not set(samples.episode[train_idx]) & set(samples.episode[val_idx])

    def test_single_episode_uses_same_set(self):
        config = tiny_config()
        dataset = room_dataset(config)
        start, stop = dataset.episode_bounds()[0]
        samples = build_samples(dataset.subset(start, stop), 3)
        train_idx, val_idx = split_by_episode(samples, 0.1, np.random.default_rng(0))
        np.testing.assert_array_equal(train_idx, val_idx)

    def test_iterate_batches_covers_everything_once(self):
        indices = np.arange(10, 35)
        batches = list(iterate_batches(indices, 8, np.random.default_rng(1)))
        assert [len(b) for b in batches] == [8, 8, 8, 1]
        np.testing.assert_array_equal(np.sort(np.concatenate(batches)), indices)


class TestPositiveWeight:
    """충돌 양성 가중치 테스트"""

    def test_weight_from_label_ratio(self):
        config = tiny_config()
        samples = build_samples(room_dataset(config), 3)
        everything = np.arange(len(samples))
        valid = samples.mask > 0
        n_pos = int(samples.collision[valid].sum())
        n_neg = int(valid.sum()) - n_pos
        expected = max(1.0, 0.25 * n_neg / n_pos) if n_pos else 1.0
        assert collision_pos_weight(samples, everything, 0.25) == pytest.approx(expected)


class TestTrain:
    """학습 전체 테스트"""

    def test_curve_and_best_epoch(self):
        config = tiny_config()
        result = train(room_dataset(config), config, seed=0)
        assert result.curve[0]["epoch"] == 0
        assert 2 <= len(result.curve) <= config.training.max_epochs + 1
        assert result.best_val_loss == pytest.approx(min(row["val_loss"] for row in result.curve))
        assert result.extra["finetuned"] is False

    def test_learns_something(self):
        """큰 학습률로 몇 epoch 돌리면 검증 손실이 한 번은 좋아져야 합니다."""
        config = tiny_config(learning_rate=1e-2, max_epochs=8, patience=8)
        result = train(room_dataset(config), config, seed=1)
        assert result.best_epoch > 0, f"검증 손실이 한 번도 줄지 않음 (곡선: {[r['val_loss'] for r in result.curve]})"

    def test_deterministic(self):
        config = tiny_config()
        dataset = room_dataset(config)
        a = train(dataset, config, seed=3)
        b = train(dataset, config, seed=3)
        np.testing.assert_array_equal(a.model.store["out1/W"].data, b.model.store["out1/W"].data)
        assert [r["val_loss"] for r in a.curve] == [r["val_loss"] for r in b.curve]

    def test_horizon_mismatch(self):
        """H = 3으로 라벨링한 데이터를 H = 4 모델로 학습하면 안 됩니다."""
        dataset = room_dataset(tiny_config(horizon=3))
        with pytest.raises(DatasetError):
            train(dataset, tiny_config(horizon=4), seed=0)

    def test_finetune_keeps_original(self):
        """미세조정은 시작 모델을 복사해서 학습합니다 (원본은 그대로)."""
        config = tiny_config(max_epochs=1)
        dataset = room_dataset(config)
        start = PredictiveModel.from_configs(config.model, config.simulator).initialize(9)
        before = start.store["out1/W"].data.copy()
        result = train(dataset, config, seed=0, init_model=start)
        assert result.extra["finetuned"] is True
        np.testing.assert_array_equal(start.store["out1/W"].data, before)

    def test_finetune_config_mismatch(self):
        config = tiny_config()
        other = tiny_config().model.model_copy(update={"output_hidden": 7})
        start = PredictiveModel(other, 4, 2, (2.0, 1.5)).initialize(0)
        with pytest.raises(DatasetError):
            train(room_dataset(config), config, seed=0, init_model=start)

    def test_divergence_reports_batch(self, monkeypatch):
        """손실이 NaN이 되면 TrainingDivergedError (배치 번호, epoch 포함)"""
        config = tiny_config()
        dataset = room_dataset(config)

        def failing_adam(*args, **kwargs):
            raise NonFiniteError("기울기에 NaN/Inf가 있습니다")

        monkeypatch.setattr(trainer_module.dn, "adam_update", failing_adam)
        with pytest.raises(TrainingDivergedError) as info:
            train(dataset, config, seed=0)
        assert info.value.batch_id == 0
        assert info.value.epoch == 1

    def test_validation_divergence_reports_batch(self, monkeypatch):
        """검증 손실이 NaN이어도 TrainingDivergedError (검증 배치 번호, epoch 포함)"""
        config = tiny_config()
        dataset = room_dataset(config)
        real_loss = trainer_module.model_loss
        seen = {"trained": False}

        def loss_failing_after_training(*args, **kwargs):
            if dn._ACTIVE_TAPES:
                seen["trained"] = True
            elif seen["trained"]:
                raise NonFiniteError("손실이 유한하지 않습니다: nan")
            return real_loss(*args, **kwargs)

        monkeypatch.setattr(trainer_module, "model_loss", loss_failing_after_training)
        with pytest.raises(TrainingDivergedError) as info:
            train(dataset, config, seed=0)
        assert info.value.batch_id == 0
        assert info.value.epoch == 1

    def test_initial_evaluation_divergence(self, monkeypatch):
        """학습 전 평가에서 손실이 NaN이면 epoch 0으로 보고"""
        config = tiny_config()
        dataset = room_dataset(config)

        def always_failing(*args, **kwargs):
            raise NonFiniteError("손실이 유한하지 않습니다: nan")

        monkeypatch.setattr(trainer_module, "model_loss", always_failing)
        with pytest.raises(TrainingDivergedError) as info:
            train(dataset, config, seed=0)
        assert (info.value.batch_id, info.value.epoch) == (0, 0)


class TestCurveFile:
    """학습 곡선 CSV 테스트"""

    def test_columns_and_nan(self, tmp_path):
        path = str(tmp_path / "curves" / "run.csv")
        curve = [{"epoch": 0, "train_loss": 1.5, "val_loss": 1.25, "coll_acc": 0.9,
                  "coll_auc": float("nan"), "bump_auc": 0.5, "pos_mse": 0.1}]
        write_curve(curve, path)
        with open(path, newline="", encoding="utf-8") as fid:
            rows = list(csv.DictReader(fid))
        assert tuple(rows[0]) == CURVE_COLUMNS
        assert float(rows[0]["train_loss"]) == 1.5
        assert math.isnan(float(rows[0]["coll_auc"]))
