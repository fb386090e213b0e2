"""
예측 모델 테스트
================

model.py를 검증합니다. 빠르게 돌도록 아주 작은 모델을 사용합니다.

[작은 모델]
    카메라 광선 4개, 바닥 샘플 2개 → 특징 길이 4·7 + 4 + 4·2·7 = 88
    인코더 (8 → 4), 은닉 4, 행동 임베딩 3, 출력층 5, 구간 H = 3
"""

import sys
import os

import numpy as np
import pytest

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.loader import ModelConfig, SimulatorConfig
from core import diffnet as dn
from core.errors import DatasetError, ShapeError
from core.model import (
    PredictiveModel,
    feature_size,
    frame_features,
    load_checkpoint,
    model_loss,
    observation_features,
    save_checkpoint,
    step_weights,
)
from simulator.engine import SensorFrame

RAYS, DEPTH, HORIZON = 4, 2, 3


def tiny_model(seed: int = 0) -> PredictiveModel:
    cfg = ModelConfig(encoder_sizes=(8, 4), rnn_hidden=4, action_embed=3, output_hidden=5, horizon=HORIZON)
    return PredictiveModel(cfg, RAYS, DEPTH, (2.0, 1.5)).initialize(seed)


def random_frame(rng: np.random.Generator, scan_value: float = 10.0) -> SensorFrame:
    return SensorFrame(
        cam_obstacle_class=rng.integers(-1, 7, size=RAYS).astype(np.int8),
        cam_obstacle_dist=rng.random(RAYS),
        cam_ground_class=rng.integers(0, 5, size=(RAYS, DEPTH)).astype(np.int8),
        range_scan=np.full(6, scan_value),
        imu_w_mag=0.0,
        imu_a_mag=0.0,
        odom_x=0.0,
        odom_y=0.0,
        odom_heading=0.0,
    )


def random_actions(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.stack([rng.uniform(0, 2, (n, HORIZON)), rng.uniform(-1.5, 1.5, (n, HORIZON))], axis=-1)


class TestFeatures:
    """관측 특징 벡터 테스트"""

    def test_default_size(self):
        """기본 설정: 광선 32개, 바닥 샘플 4개 → 1152"""
        sim = SimulatorConfig()
        assert feature_size(sim.camera_rays, len(sim.ground_lookaheads)) == 1152

    def test_no_hit_is_all_zero(self):
        """NO_HIT(−1) 광선의 종류 one-hot은 모두 0"""
        frame = random_frame(np.random.default_rng(0))
        frame.cam_obstacle_class[:] = -1
        feats = frame_features(frame)
        assert feats.shape == (feature_size(RAYS, DEPTH),)
        assert feats[: RAYS * 7].sum() == 0.0

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        frames = [random_frame(rng) for _ in range(3)]
        batch = observation_features(
            np.stack([f.cam_obstacle_class for f in frames]),
            np.stack([f.cam_obstacle_dist for f in frames]),
            np.stack([f.cam_ground_class for f in frames]),
        )
        np.testing.assert_array_equal(batch[1], frame_features(frames[1]))


class TestPrediction:
    """예측 결과 테스트"""

    def test_shapes_and_ranges(self):
        rng = np.random.default_rng(2)
        model = tiny_model()
        batch = model.predict_batch(random_frame(rng), random_actions(rng, 5))
        assert len(batch) == 5
        assert batch.p_coll.shape == (5, HORIZON)
        assert batch.pos.shape == (5, HORIZON, 2)
        assert np.all((batch.p_coll >= 0) & (batch.p_coll <= 1))
        assert np.all((batch.p_bump >= 0) & (batch.p_bump <= 1))

    def test_single_matches_batch(self):
        rng = np.random.default_rng(3)
        model = tiny_model()
        frame = random_frame(rng)
        actions = random_actions(rng, 4)
        batch = model.predict_batch(frame, actions)
        single = model.predict(frame, actions[2])
        np.testing.assert_allclose(single.p_coll, batch.p_coll[2])
        np.testing.assert_allclose(single.pos, batch.pos[2])

    def test_causal_in_actions(self):
        """스텝 h 예측은 a_0..a_h에만 의존합니다 (마지막 행동을 바꿔도 앞 스텝은 그대로)."""
        rng = np.random.default_rng(4)
        model = tiny_model(seed=5)
        # 출력층 relu가 모두 꺼지지 않도록
        model.store["out0/b"].data = np.ones(5)
        frame = random_frame(rng)
        actions = random_actions(rng, 1)
        changed = actions.copy()
        changed[0, -1] = [0.0, -1.5]
        a = model.predict_batch(frame, actions)
        b = model.predict_batch(frame, changed)
        np.testing.assert_allclose(a.p_coll[0, :-1], b.p_coll[0, :-1])
        np.testing.assert_allclose(a.pos[0, :-1], b.pos[0, :-1])
        assert not np.allclose(a.pos[0, -1], b.pos[0, -1])

    def test_range_scan_is_not_an_input(self):
        """거리 센서 값을 바꿔도 예측은 같아야 합니다 (카메라만 입력)."""
        model = tiny_model()
        actions = random_actions(np.random.default_rng(6), 3)
        near = model.predict_batch(random_frame(np.random.default_rng(7), scan_value=0.2), actions)
        far = model.predict_batch(random_frame(np.random.default_rng(7), scan_value=10.0), actions)
        np.testing.assert_array_equal(near.p_coll, far.p_coll)

    def test_wrong_horizon_rejected(self):
        model = tiny_model()
        with pytest.raises(ShapeError):
            model.predict(random_frame(np.random.default_rng(0)), np.zeros((HORIZON + 1, 2)))

    def test_initialize_is_seeded(self):
        a, b, c = tiny_model(1), tiny_model(1), tiny_model(2)
        np.testing.assert_array_equal(a.store["enc0/W"].data, b.store["enc0/W"].data)
        assert not np.array_equal(a.store["enc0/W"].data, c.store["enc0/W"].data)
        assert np.all(a.store["enc0/b"].data == 0.0)


class TestCheckpoint:
    """체크포인트 저장 / 불러오기 테스트"""

    def test_round_trip_same_predictions(self, tmp_path):
        rng = np.random.default_rng(8)
        model = tiny_model(seed=3)
        path = str(tmp_path / "model.npz")
        save_checkpoint(model, path, {"epochs": 2})

        loaded, meta = load_checkpoint(path)
        assert meta["training"]["epochs"] == 2
        assert loaded.cfg == model.cfg
        frame, actions = random_frame(rng), random_actions(rng, 4)
        np.testing.assert_array_equal(
            loaded.predict_batch(frame, actions).p_coll, model.predict_batch(frame, actions).p_coll
        )

    def test_not_a_checkpoint(self, tmp_path):
        path = str(tmp_path / "params.npz")
        store = dn.ParamStore()
        store.add("w", np.zeros(2))
        dn.save_params(store, path, {"kind": "something-else"})
        with pytest.raises(DatasetError):
            load_checkpoint(path)

    def test_copy_is_independent(self):
        model = tiny_model()
        clone = model.copy()
        clone.store["out1/b"].data = clone.store["out1/b"].data + 1.0
        assert np.all(model.store["out1/b"].data == 0.0)


class TestLoss:
    """손실 함수 테스트"""

    def test_step_weights(self):
        """유효 스텝 평균 후 배치 평균, 유효 스텝이 없는 샘플은 0"""
        w = step_weights(np.array([[1, 1, 0], [0, 0, 0]]))
        np.testing.assert_allclose(w, [[0.25, 0.25, 0.0], [0.0, 0.0, 0.0]])

    def test_masked_steps_do_not_matter(self):
        """mask = 0인 스텝의 라벨을 바꿔도 손실은 같아야 합니다."""
        rng = np.random.default_rng(9)
        model = tiny_model()
        frames = [random_frame(rng) for _ in range(2)]
        feats = np.stack([frame_features(f) for f in frames])
        actions = random_actions(rng, 2)
        out = model.forward(feats, actions)
        mask = np.array([[1, 1, 0], [1, 0, 0]])
        coll = np.zeros((2, HORIZON))
        pos = np.zeros((2, HORIZON, 2))
        other = coll.copy()
        other[0, 2] = 1.0
        other_pos = pos.copy()
        other_pos[1, 1:] = 5.0
        a = model_loss(out, coll, coll, pos, mask).total.item()
        b = model_loss(out, other, other, other_pos, mask).total.item()
        assert a == pytest.approx(b)

    def _loss_case(self, seed: int):
        """
        무작위 모델 + 배치 + 라벨. relu 입력이 0 근처(1e-3 이내)인 경우는
        차분이 맞지 않으므로 다음 후보 데이터로 넘어갑니다.
        """
        for attempt in range(20):
            rng = np.random.default_rng([seed, attempt])
            model = tiny_model(seed=int(rng.integers(1 << 31)))
            feats = np.stack([frame_features(random_frame(rng)) for _ in range(3)])
            actions = random_actions(rng, 3)
            coll = (rng.random((3, HORIZON)) > 0.7).astype(float)
            bumpy = (rng.random((3, HORIZON)) > 0.5).astype(float)
            pos = rng.normal(size=(3, HORIZON, 2))
            mask = (rng.random((3, HORIZON)) > 0.2).astype(float)
            pos_weight = float(rng.uniform(1.0, 4.0))

            def loss():
                out = model.forward(feats, actions)
                return model_loss(out, coll, bumpy, pos, mask, 0.1, pos_weight).total

            model.store.zero_grad()
            with dn.Tape() as tape:
                total = loss()
            margin = min(
                float(np.min(np.abs(r.inputs[0].data))) for r in tape.records if r.op == "relu"
            )
            if margin > 1e-3:
                tape.backward(total)
                return model, loss, rng
        pytest.fail(f"seed {seed}: relu 입력이 0에서 떨어진 데이터를 찾지 못했습니다")

    @staticmethod
    def _numeric_at(loss, tensor, picks, eps=1e-5):
        flat = tensor.data.reshape(-1)
        values = []
        for i in picks:
            original = flat[i]
            flat[i] = original + eps
            plus = loss().item()
            flat[i] = original - eps
            minus = loss().item()
            flat[i] = original
            values.append((plus - minus) / (2.0 * eps))
        return np.array(values)

    @pytest.mark.parametrize("seed", list(range(100)))
    def test_gradients_match_finite_difference(self, seed):
        """모델 전체 손실의 기울기 검사: 모든 파라미터 텐서, 텐서마다 무작위 원소 4개"""
        model, loss, rng = self._loss_case(seed)
        for name in model.store.names():
            tensor = model.store[name]
            assert tensor.grad is not None, f"{name}: 기울기가 없습니다"
            picks = rng.choice(tensor.data.size, size=min(4, tensor.data.size), replace=False)
            numeric = self._numeric_at(loss, tensor, picks)
            np.testing.assert_allclose(
                tensor.grad.reshape(-1)[picks], numeric, rtol=1e-4, atol=1e-7, err_msg=f"seed {seed}, {name}"
            )

    def test_gradients_every_entry(self):
        """한 경우는 모든 파라미터의 모든 원소를 검사합니다."""
        model, loss, _ = self._loss_case(1000)
        for name in model.store.names():
            tensor = model.store[name]
            numeric = dn.finite_difference_grad(lambda: loss().item(), tensor)
            np.testing.assert_allclose(tensor.grad, numeric, rtol=1e-4, atol=1e-7, err_msg=name)

    def test_position_shape_checked(self):
        model = tiny_model()
        rng = np.random.default_rng(0)
        out = model.forward(frame_features(random_frame(rng))[None], random_actions(rng, 1))
        with pytest.raises(ShapeError):
            model_loss(out, np.zeros((1, HORIZON)), np.zeros((1, HORIZON)), np.zeros((1, HORIZON)), np.ones((1, HORIZON)))
