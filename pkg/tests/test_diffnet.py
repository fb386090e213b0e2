"""
미분 엔진 테스트
================

diffnet.py의 역전파 기울기를 중앙 차분 기울기와 비교합니다.

[기울기 검사]
    역전파 기울기 ≈ (f(θ + ε) − f(θ − ε)) / 2ε
    상대 오차 1e-5 이하이면 통과
    연산마다 시드 100개로 무작위 그래프를 만들어 검사합니다.
"""

import sys
import os

import numpy as np
import pytest

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core import diffnet as dn
from core.errors import NonFiniteError, ShapeError


def check_grads(loss_fn, tensors, rtol=1e-5, atol=1e-7):
    """loss_fn() → 스칼라 Tensor. 모든 텐서의 역전파 기울기를 차분 기울기와 비교"""
    for t in tensors:
        t.zero_grad()
    with dn.Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    for t in tensors:
        numeric = dn.finite_difference_grad(lambda: loss_fn().item(), t)
        assert t.grad is not None, f"{t.name}: 기울기가 없습니다"
        np.testing.assert_allclose(t.grad, numeric, rtol=rtol, atol=atol, err_msg=f"{t.name}")


def param(rng, *shape, name=None):
    return dn.Tensor(rng.normal(size=shape), requires_grad=True, name=name)


# 연산마다 무작위 그래프 100개
SEEDS = list(range(100))


class TestGradients:
    """연산별 기울기 검사 (무작위 그래프)"""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_mlp_with_bias(self, seed):
        """matmul → add(편향) → tanh → matmul → sigmoid → 평균"""
        rng = np.random.default_rng(seed)
        x = dn.Tensor(rng.normal(size=(4, 3)))
        w1, b1 = param(rng, 3, 5, name="w1"), param(rng, 5, name="b1")
        w2 = param(rng, 5, 2, name="w2")

        def loss():
            h = dn.tanh(dn.add(dn.matmul(x, w1), b1))
            return dn.reduce_mean(dn.sigmoid(dn.matmul(h, w2)))

        check_grads(loss, [w1, b1, w2])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_relu_concat_slice_reshape(self, seed):
        rng = np.random.default_rng([3, seed])
        a, b = param(rng, 2, 3, name="a"), param(rng, 2, 4, name="b")
        # relu 꺾이는 점(0)에서는 차분이 맞지 않음
        a.data[np.abs(a.data) < 1e-3] = 0.5

        def loss():
            joined = dn.concat([dn.relu(a), b], axis=1)             # (2, 7)
            part = dn.slice(joined, 1, 6, axis=1)                    # (2, 5)
            flat = dn.reshape(part, (10,))
            return dn.reduce_sum(dn.mul(flat, flat))

        check_grads(loss, [a, b])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_sub_and_scale(self, seed):
        rng = np.random.default_rng([4, seed])
        a, bias = param(rng, 3, 2, name="a"), param(rng, 2, name="bias")
        check_grads(lambda: dn.reduce_sum(dn.scale(dn.sub(a, bias), -2.5)), [a, bias])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_reduce_sum_axis(self, seed):
        rng = np.random.default_rng([5, seed])
        a = param(rng, 3, 4, name="a")
        weights = dn.Tensor(rng.normal(size=4))
        check_grads(lambda: dn.reduce_sum(dn.mul(dn.reduce_sum(a, axis=0), weights)), [a])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_losses(self, seed):
        """세 가지 손실 함수 모두 기울기가 맞아야 합니다."""
        rng = np.random.default_rng([6, seed])
        z = param(rng, 5, 3, name="z")
        y_bin = (rng.random((5, 3)) > 0.5).astype(float)
        y_cls = np.eye(3)[rng.integers(0, 3, size=5)]
        target = rng.normal(size=(5, 3))

        check_grads(lambda: dn.reduce_mean(dn.sigmoid_cross_entropy(z, y_bin)), [z])
        check_grads(lambda: dn.reduce_mean(dn.softmax_cross_entropy(z, y_cls)), [z])
        check_grads(lambda: dn.reduce_mean(dn.squared_error(z, target)), [z])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gru_cell(self, seed):
        """GRU 한 스텝을 두 번 굴린 그래프의 모든 파라미터 기울기"""
        rng = np.random.default_rng([7, seed])
        hidden, inputs = 4, 3
        params = {}
        for name in dn.GRU_PARAM_NAMES:
            if name.startswith("W"):
                params[name] = param(rng, inputs, hidden, name=name)
            elif name.startswith("U"):
                params[name] = param(rng, hidden, hidden, name=name)
            else:
                params[name] = param(rng, hidden, name=name)
        h0 = param(rng, 2, hidden, name="h0")
        xs = [dn.Tensor(rng.normal(size=(2, inputs))) for _ in range(2)]

        def loss():
            h = h0
            for x in xs:
                h = dn.gru_cell(h, x, params)
            return dn.reduce_sum(h)

        check_grads(loss, list(params.values()) + [h0])

    def test_shared_input_accumulates(self):
        """같은 텐서를 두 번 쓰면 기울기가 더해집니다: d(x + x)/dx = 2"""
        x = dn.Tensor(np.ones(3), requires_grad=True)
        with dn.Tape() as tape:
            y = dn.reduce_sum(dn.add(x, x))
        tape.backward(y)
        np.testing.assert_allclose(x.grad, [2.0, 2.0, 2.0])


class TestTape:
    """테이프 동작 테스트"""

    def test_no_recording_without_tape(self):
        tape = dn.Tape()
        x = dn.Tensor(np.ones((2, 2)), requires_grad=True)
        dn.matmul(x, x)
        assert tape.records == []

    def test_constants_not_recorded(self):
        with dn.Tape() as tape:
            dn.tanh(dn.Tensor(np.ones(3)))
        assert tape.records == []

    def test_backward_keeps_forward_values(self):
        rng = np.random.default_rng(8)
        w = param(rng, 3, 3)
        with dn.Tape() as tape:
            out = dn.reduce_sum(dn.tanh(w))
        before = out.data.copy()
        tape.backward(out)
        np.testing.assert_array_equal(out.data, before)

    def test_gru_zero_weights_halves_state(self):
        """모든 가중치 0 → z = 0.5, h̃ = 0 → h' = 0.5·h"""
        params = {}
        for name in dn.GRU_PARAM_NAMES:
            shape = (2, 3) if name.startswith("W") else (3, 3) if name.startswith("U") else (3,)
            params[name] = dn.Tensor(np.zeros(shape))
        h = dn.Tensor(np.array([1.0, -2.0, 4.0]))
        out = dn.gru_cell(h, dn.Tensor(np.ones(2)), params)
        np.testing.assert_allclose(out.data, [0.5, -1.0, 2.0])


class TestShapes:
    """모양 오류 테스트"""

    def test_matmul_mismatch(self):
        with pytest.raises(ShapeError):
            dn.matmul(dn.Tensor(np.ones((2, 3))), dn.Tensor(np.ones((2, 3))))

    def test_no_general_broadcast(self):
        """(2, 3) + (2,) 같은 브로드캐스팅은 허용하지 않습니다."""
        with pytest.raises(ShapeError):
            dn.add(dn.Tensor(np.ones((2, 3))), dn.Tensor(np.ones(2)))

    def test_loss_target_shape(self):
        with pytest.raises(ShapeError):
            dn.sigmoid_cross_entropy(dn.Tensor(np.zeros((2, 2))), np.zeros(4))

    def test_slice_bounds(self):
        with pytest.raises(ShapeError):
            dn.slice(dn.Tensor(np.ones((2, 3))), 2, 5)


class TestNumerics:
    """수치 안정성 테스트"""

    def test_logistic_extremes(self):
        out = dn.logistic(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])
        assert np.all(np.isfinite(out))

    def test_cross_entropy_large_logits(self):
        loss = dn.sigmoid_cross_entropy(dn.Tensor(np.array([800.0, -800.0])), np.array([0.0, 1.0]))
        np.testing.assert_allclose(loss.data, [800.0, 800.0])


class TestAdam:
    """Adam 갱신 테스트"""

    def test_first_step_moves_by_lr(self):
        """첫 스텝은 기울기 크기와 상관없이 약 lr만큼 반대 방향으로 움직입니다."""
        store = dn.ParamStore()
        store.add("w", np.zeros(3))
        dn.adam_update(store, {"w": np.array([10.0, -0.01, 0.0])}, lr=0.1)
        np.testing.assert_allclose(store["w"].data, [-0.1, 0.1, 0.0], atol=1e-6)
        assert store.step == 1

    def test_minimizes_quadratic(self):
        """f(w) = Σ(w − 3)² 를 Adam으로 줄이면 w → 3"""
        store = dn.ParamStore()
        w = store.add("w", np.zeros(4))
        for _ in range(2000):
            store.zero_grad()
            with dn.Tape() as tape:
                loss = dn.reduce_sum(dn.squared_error(w, np.full(4, 3.0)))
            tape.backward(loss)
            dn.adam_update(store, store.grads(), lr=0.05)
        np.testing.assert_allclose(store["w"].data, 3.0, atol=5e-2)

    def test_non_finite_gradient_rejected(self):
        """NaN 기울기 → NonFiniteError, 파라미터와 스텝 수는 그대로"""
        store = dn.ParamStore()
        store.add("a", np.ones(2))
        store.add("b", np.ones(2))
        with pytest.raises(NonFiniteError):
            dn.adam_update(store, {"a": np.ones(2), "b": np.array([np.nan, 0.0])})
        np.testing.assert_array_equal(store["a"].data, [1.0, 1.0])
        assert store.step == 0

    def test_duplicate_name_rejected(self):
        store = dn.ParamStore()
        store.add("w", np.zeros(1))
        with pytest.raises(KeyError):
            store.add("w", np.zeros(1))


class TestParamFiles:
    """파라미터 저장 / 읽기 테스트"""

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        store = dn.ParamStore()
        store.add("enc/W0", rng.normal(size=(3, 2)))
        store.add("enc/b0", rng.normal(size=2))
        path = str(tmp_path / "params.npz")
        dn.save_params(store, path, {"note": "test"})

        values, meta = dn.load_params(path)
        assert meta["note"] == "test"
        assert sorted(values) == ["enc/W0", "enc/b0"]
        np.testing.assert_array_equal(values["enc/W0"], store["enc/W0"].data)

        other = dn.ParamStore()
        other.add("enc/W0", np.zeros((3, 2)))
        other.add("enc/b0", np.zeros(2))
        other.load_values(values)
        np.testing.assert_array_equal(other["enc/b0"].data, store["enc/b0"].data)
        assert other.count() == 8
