"""
자기 지도 라벨러 테스트
========================

labeler.py를 검증합니다. 센서 값을 직접 만든 짧은 에피소드를 사용합니다.

[테스트 에피소드]
    로봇이 x축을 따라 한 스텝에 1m씩 전진 (오도메트리 방향 0)
"""

import math
import sys
import os

import numpy as np
import pytest
from scipy.stats import halfnorm

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.loader import LabelerConfig
from core.collision import DetectorMode
from core.errors import DatasetError, LabelModeMismatchError
from pipeline.dataset import EpisodeDataset, RawRecord
from pipeline.labeler import (
    build_samples,
    calibrate_bump_threshold,
    label_bumpiness,
    label_collision,
    label_dataset,
    label_position,
)
from simulator.engine import SensorFrame


def make_frame(x=0.0, y=0.0, heading=0.0, imu_w=0.0, cmd_w=0.0) -> SensorFrame:
    return SensorFrame(
        cam_obstacle_class=np.full(4, -1, dtype=np.int8),
        cam_obstacle_dist=np.ones(4),
        cam_ground_class=np.zeros((4, 2), dtype=np.int8),
        range_scan=np.full(6, 10.0),
        imu_w_mag=imu_w,
        imu_a_mag=0.0,
        odom_x=x,
        odom_y=y,
        odom_heading=heading,
        commanded_w=cmd_w,
    )


def make_episode(length, episode_id=0, fired_last=False, start_t=0, mode=DetectorMode.RANGE):
    """x = 0, 1, 2, ... 로 전진하는 에피소드. fired_last면 마지막 기록이 충돌"""
    records = []
    for k in range(length):
        fired = fired_last and k == length - 1
        action = (0.0, 0.0) if fired else (1.0, 0.1 * k)
        records.append(RawRecord(start_t + k, make_frame(x=float(k)), action, episode_id, fired, mode))
    return records


def labeled(records, horizon=3):
    cfg = LabelerConfig(horizon=horizon)
    return label_dataset(EpisodeDataset.from_records(records), cfg)


class TestEventLabels:
    """사건별 라벨 테스트"""

    def test_collision_copies_detector_bit(self):
        records = make_episode(4, fired_last=True)
        out = label_collision(records, DetectorMode.RANGE)
        np.testing.assert_array_equal(out, [0, 0, 0, 1])

    def test_mode_mismatch_rejected(self):
        """range로 수집한 데이터를 inertial로 라벨링하면 안 됩니다."""
        records = make_episode(3)
        with pytest.raises(LabelModeMismatchError):
            label_collision(records, DetectorMode.INERTIAL)
        with pytest.raises(LabelModeMismatchError):
            label_dataset(EpisodeDataset.from_records(records), LabelerConfig(), DetectorMode.INERTIAL)

    def test_bumpiness_subtracts_commanded_turn(self):
        """
        IMU 0.8, 명령 0.5 → 초과분 0.3 (기준 0.5 이하) → 0
        IMU 1.2, 명령 −0.5 → 초과분 0.7 → 1
        """
        records = [
            RawRecord(0, make_frame(imu_w=0.8, cmd_w=0.5), (1.0, 0.5), 0, False, DetectorMode.RANGE),
            RawRecord(1, make_frame(imu_w=1.2, cmd_w=-0.5), (1.0, -0.5), 0, False, DetectorMode.RANGE),
        ]
        np.testing.assert_array_equal(label_bumpiness(records, 0.5), [0, 1])

    def test_position_relative_to_first_pose(self):
        """북쪽(90도)을 보고 시작하면 북쪽 이동은 로컬 +x"""
        records = [
            RawRecord(k, make_frame(x=2.0, y=3.0 + k, heading=math.pi / 2), (1.0, 0.0), 0, False, "range")
            for k in range(3)
        ]
        pos = label_position(records)
        np.testing.assert_allclose(pos, [[0, 0], [1, 0], [2, 0]], atol=1e-12)


class TestBuildSamples:
    """학습 샘플 창(window) 테스트"""

    def test_sample_count_and_position(self):
        """길이 5 에피소드 → 샘플 4개, 첫 샘플 위치 = (1,0), (2,0), (3,0)"""
        samples = build_samples(labeled(make_episode(5)), horizon=3)
        assert len(samples) == 4
        np.testing.assert_allclose(samples.position[0], [[1, 0], [2, 0], [3, 0]], atol=1e-12)
        np.testing.assert_array_equal(samples.obs_index, [0, 1, 2, 3])

    def test_actions_are_executed_actions(self):
        samples = build_samples(labeled(make_episode(5)), horizon=3)
        np.testing.assert_allclose(samples.actions[0, :, 1], [0.0, 0.1, 0.2])

    def test_truncated_end_is_masked(self):
        """충돌 없이 끝난 에피소드의 넘친 스텝은 mask = 0"""
        samples = build_samples(labeled(make_episode(5)), horizon=3)
        np.testing.assert_array_equal(samples.mask[3], [1, 0, 0])
        np.testing.assert_array_equal(samples.mask[2], [1, 1, 0])
        np.testing.assert_array_equal(samples.mask[0], [1, 1, 1])

    def test_collision_is_absorbing(self):
        """
        충돌로 끝난 에피소드: 충돌 이후 스텝은 유효하고,
        충돌 = 1, 위치는 충돌 시점 값으로 고정됩니다.
        """
        samples = build_samples(labeled(make_episode(4, fired_last=True)), horizon=3)
        assert len(samples) == 3
        np.testing.assert_array_equal(samples.collision[0], [0, 0, 1])
        np.testing.assert_array_equal(samples.collision[1], [0, 1, 1])
        np.testing.assert_array_equal(samples.collision[2], [1, 1, 1])
        assert samples.mask.min() == 1.0
        # 시작 x = 1, 충돌 지점 x = 3 → 로컬 (2, 0)에서 고정
        np.testing.assert_allclose(samples.position[1], [[1, 0], [2, 0], [2, 0]], atol=1e-12)

    def test_windows_do_not_cross_episodes(self):
        records = make_episode(3, episode_id=0) + make_episode(3, episode_id=1, start_t=3)
        samples = build_samples(labeled(records), horizon=3)
        assert len(samples) == 4
        assert set(samples.obs_index.tolist()) == {0, 1, 3, 4}
        # 두 번째 에피소드는 원점이 다시 0
        np.testing.assert_allclose(samples.position[2, 0], [1, 0], atol=1e-12)

    def test_single_record_episodes_rejected(self):
        records = [RawRecord(k, make_frame(), (0.0, 0.0), k, True, "range") for k in range(3)]
        with pytest.raises(DatasetError):
            build_samples(labeled(records), horizon=2)

    def test_unlabeled_rejected(self):
        with pytest.raises(DatasetError):
            build_samples(EpisodeDataset.from_records(make_episode(4)), horizon=2)

    def test_sample_view(self):
        samples = build_samples(labeled(make_episode(4, fired_last=True)), horizon=2)
        sample = samples[1]
        assert len(sample.labels) == 2
        assert sample.labels[1].collision == 1
        assert sample.observation.odom_x == 1.0


class TestLabelDataset:
    """데이터셋 라벨링 테스트"""

    def test_manifest(self):
        dataset = labeled(make_episode(4, fired_last=True))
        manifest = dataset.meta["labels"]
        assert manifest["records"] == 4
        assert manifest["collision_rate"] == pytest.approx(0.25)
        assert dataset.has_labels


class TestCalibration:
    """울퉁불퉁 기준값 보정 테스트"""

    def test_grass_rate_matches_half_normal(self):
        rates = calibrate_bump_threshold(0.5, 1.0)
        assert rates["Grass"] == pytest.approx(float(halfnorm.sf(0.5, scale=0.6)))
        assert 0.3 < rates["Grass"] < 0.5

    def test_grass_bumpier_than_concrete(self):
        rates = calibrate_bump_threshold(0.5, 1.0)
        assert rates["Concrete"] < 0.05
        assert rates["Gravel"] > rates["Grass"] > rates["Concrete"]
        assert rates["Wall"] == 0.0
