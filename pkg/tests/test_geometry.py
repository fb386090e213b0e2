"""
기하학 계산 모듈 테스트
========================

geometry.py의 각 함수가 올바르게 동작하는지 검증합니다.

[테스트 실행 방법]
프로젝트 루트에서:
    python -m pytest tests/ -v

특정 파일만:
    python -m pytest tests/test_geometry.py -v
"""

import math
import sys
import os

import numpy as np
import pytest

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.geometry import (
    ActionBounds,
    angle_between,
    bearing_error,
    calculate_distance_2d,
    local_to_world,
    relative_poses,
    rollout_unicycle,
    world_to_local,
    wrap_angle,
)


class TestWrapAngle:
    """각도 정규화 테스트"""

    def test_over_pi(self):
        """190도 → −170도"""
        assert wrap_angle(math.radians(190)) == pytest.approx(math.radians(-170))

    def test_minus_pi_becomes_pi(self):
        """−π는 범위 밖이므로 π가 되어야 합니다."""
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    def test_array_input(self):
        """numpy 배열도 원소별로 정규화되어야 합니다."""
        out = wrap_angle(np.array([0.0, 3 * math.pi, -3 * math.pi / 2]))
        assert out.shape == (3,)
        assert out[0] == pytest.approx(0.0)
        assert out[1] == pytest.approx(math.pi)
        assert out[2] == pytest.approx(math.pi / 2)


class TestDistance:
    """평면 거리 테스트"""

    def test_pythagoras(self):
        """3-4-5 직각삼각형"""
        assert calculate_distance_2d(0, 0, 3, 4) == pytest.approx(5.0)

    def test_same_point(self):
        assert calculate_distance_2d(2.5, -1.0, 2.5, -1.0) == 0.0


class TestFrames:
    """세계 ↔ 로컬 좌표 변환 테스트"""

    def test_point_ahead_is_positive_x(self):
        """
        북쪽(90도)을 보는 로봇의 1m 북쪽 점은
        로컬 좌표로 (1, 0) 이어야 합니다.
        """
        local = world_to_local((1.0, 1.0, math.pi / 2), np.array([1.0, 2.0]))
        assert local[0] == pytest.approx(1.0)
        assert local[1] == pytest.approx(0.0, abs=1e-12)

    def test_point_left_is_positive_y(self):
        """동쪽을 보는 로봇의 북쪽 점은 로봇 왼쪽(+y)"""
        local = world_to_local((0.0, 0.0, 0.0), np.array([0.0, 2.0]))
        assert local[1] == pytest.approx(2.0)

    def test_local_to_world_inverts(self):
        """로컬로 갔다가 다시 세계 좌표로 오면 원래 점이어야 합니다."""
        rng = np.random.default_rng(0)
        pose = (3.0, -2.0, 2.1)
        points = rng.uniform(-5, 5, size=(10, 2))
        back = local_to_world(pose, world_to_local(pose, points))
        np.testing.assert_allclose(back, points, atol=1e-12)

    def test_relative_pose_of_origin_is_zero(self):
        origin = (1.0, 2.0, 0.5)
        rel = relative_poses(origin, np.array([origin]))
        np.testing.assert_allclose(rel, [[0.0, 0.0, 0.0]], atol=1e-12)


class TestBearing:
    """목표 방향 오차 테스트"""

    def test_goal_to_the_left(self):
        """동쪽을 볼 때 북쪽 목표 → +90도 (왼쪽으로 돌아야 함)"""
        assert bearing_error((0.0, 0.0, 0.0), (0.0, 5.0)) == pytest.approx(math.pi / 2)

    def test_goal_straight_ahead(self):
        assert bearing_error((1.0, 1.0, math.pi / 4), (3.0, 3.0)) == pytest.approx(0.0, abs=1e-12)

    def test_angle_between_perpendicular(self):
        out = angle_between(np.array([[1.0, 0.0]]), np.array([0.0, 1.0]))
        assert out[0] == pytest.approx(math.pi / 2)

    def test_zero_vector_is_worst(self):
        """움직이지 않은 후보는 π(최악)로 취급합니다."""
        out = angle_between(np.array([[0.0, 0.0]]), np.array([1.0, 0.0]))
        assert out[0] == pytest.approx(math.pi)


class TestRollout:
    """이륜 운동학 굴리기 테스트"""

    def test_straight_line(self):
        """v = 1 m/s, 0.25초 × 4스텝 → 1m 전진"""
        actions = np.tile([1.0, 0.0], (1, 4, 1))
        poses = rollout_unicycle((0.0, 0.0, 0.0), actions, 0.25)
        assert poses.shape == (1, 4, 3)
        assert poses[0, -1, 0] == pytest.approx(1.0)
        assert poses[0, -1, 1] == pytest.approx(0.0)

    def test_turn_in_place(self):
        """v = 0이면 위치는 그대로, 방향만 w·dt씩 바뀝니다."""
        actions = np.tile([0.0, 1.0], (1, 3, 1))
        poses = rollout_unicycle((2.0, 3.0, 0.0), actions, 0.25)
        np.testing.assert_allclose(poses[0, :, :2], [[2.0, 3.0]] * 3)
        np.testing.assert_allclose(poses[0, :, 2], [0.25, 0.5, 0.75])

    def test_position_uses_heading_before_turn(self):
        """첫 스텝 위치는 회전 전 방향으로 계산됩니다 (시뮬레이터와 같은 순서)."""
        actions = np.array([[[1.0, 1.5]]])
        poses = rollout_unicycle((0.0, 0.0, 0.0), actions, 0.25)
        assert poses[0, 0, 0] == pytest.approx(0.25)
        assert poses[0, 0, 1] == pytest.approx(0.0)


class TestActionBounds:
    """행동 범위 테스트"""

    def test_planner_box_forbids_reverse(self):
        bounds = ActionBounds.planner_box(2.0, 1.5)
        clipped = bounds.clip(np.array([[-1.0, 3.0], [2.5, -2.0]]))
        np.testing.assert_allclose(clipped, [[0.0, 1.5], [2.0, -1.5]])

    def test_contains(self):
        bounds = ActionBounds.symmetric(2.0, 1.5)
        assert bounds.contains(np.array([[-2.0, 1.5]]))
        assert not bounds.contains(np.array([[0.0, 1.6]]))
