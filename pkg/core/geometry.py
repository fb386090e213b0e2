"""
2D 기하학 계산 모듈
====================

이 모듈은 로봇의 위치·방향 계산에 쓰는 함수들을 모아놓은 곳입니다.

[좌표 체계]
- X축: 지도 오른쪽 (동쪽)
- Y축: 지도 위쪽 (북쪽)
- 방향(heading): X축에서 반시계 방향으로 잰 각도 (라디안, (−π, π])
- 원점(0,0): 지도 왼쪽 아래 모서리

[두 가지 좌표계]
- 세계 좌표계: 지도 기준 좌표
- 로컬 좌표계: 로봇 기준 좌표 (로봇 위치가 원점, 로봇 앞쪽이 +X)

                Y (세계)
                │        x' (로컬, 로봇 앞쪽)
                │      ╱
                │    ●  ← 로봇
                │     ╲
                │      y' (로컬, 로봇 왼쪽)
        ────────┼──────────── X (세계)
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

# ============================================================
# 타입 정의
# ============================================================
# 2D 자세 (x, y, heading)
Pose2D = Tuple[float, float, float]


def wrap_angle(angle):
    """
    각도를 (−π, π] 범위로 정규화합니다.

    [원리 설명]
    각도는 360도(2π)마다 같은 방향입니다.
        190도 → −170도
        −180도 → 180도  (−π는 범위 밖이므로 π로)

    스칼라와 numpy 배열 모두 받습니다.
    """
    wrapped = math.pi - np.mod(math.pi - np.asarray(angle, dtype=float), 2.0 * math.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def calculate_distance_2d(x1: float, y1: float, x2: float, y2: float) -> float:
    """두 점 사이의 평면 거리 (피타고라스 정리)"""
    return math.hypot(x2 - x1, y2 - y1)


def world_to_local(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """
    세계 좌표 점들을 로봇 로컬 좌표로 변환합니다.

    [계산 방법]
    1단계: 로봇 위치를 빼서 원점 이동
    2단계: −heading 만큼 회전

        x' =  cos(θ)·dx + sin(θ)·dy
        y' = −sin(θ)·dx + cos(θ)·dy

    Args:
        pose: 로봇 자세 (x, y, heading)
        points: (..., 2) 배열

    Returns:
        (..., 2) 로컬 좌표 배열
    """
    x, y, heading = pose
    pts = np.asarray(points, dtype=float)
    dx = pts[..., 0] - x
    dy = pts[..., 1] - y
    c, s = math.cos(heading), math.sin(heading)
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def local_to_world(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """world_to_local의 역변환: heading만큼 회전한 뒤 로봇 위치를 더합니다."""
    x, y, heading = pose
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(heading), math.sin(heading)
    return np.stack([x + c * pts[..., 0] - s * pts[..., 1], y + s * pts[..., 0] + c * pts[..., 1]], axis=-1)


def relative_poses(origin: Pose2D, poses: np.ndarray) -> np.ndarray:
    """
    자세 배열 (..., 3)을 origin 자세 기준 상대 자세로 바꿉니다.
    origin 자신은 (0, 0, 0)이 됩니다.
    """
    poses = np.asarray(poses, dtype=float)
    xy = world_to_local(origin, poses[..., :2])
    heading = wrap_angle(poses[..., 2] - origin[2])
    return np.concatenate([xy, np.asarray(heading)[..., None]], axis=-1)


def bearing_error(pose: Pose2D, goal: Tuple[float, float]) -> float:
    """
    로봇이 목표를 보려면 얼마나 돌아야 하는지 (라디안, (−π, π])

    양수 = 왼쪽으로 돌아야 함, 음수 = 오른쪽
    """
    x, y, heading = pose
    target = math.atan2(goal[1] - y, goal[0] - x)
    return wrap_angle(target - heading)


def angle_between(vectors: np.ndarray, target: np.ndarray) -> np.ndarray:
    """
    벡터들과 목표 벡터 사이의 절대 각도 [0, π]

    [원리 설명]
    내적 공식: cos(각도) = (a·b) / (|a|·|b|)
    대신 atan2(|a×b|, a·b)를 사용하면 0도/180도 근처에서도 정확합니다.

    길이가 0인 벡터는 "진전 없음"으로 보고 π(최악)를 반환합니다.

    Args:
        vectors: (..., 2) 배열
        target: (2,) 목표 방향 벡터
    """
    v = np.asarray(vectors, dtype=float)
    tx, ty = float(target[0]), float(target[1])
    cross = v[..., 0] * ty - v[..., 1] * tx
    dot = v[..., 0] * tx + v[..., 1] * ty
    angle = np.arctan2(np.abs(cross), dot)
    degenerate = (np.hypot(v[..., 0], v[..., 1]) == 0.0) | (tx == 0.0 and ty == 0.0)
    return np.where(degenerate, math.pi, angle)


def rollout_unicycle(pose: Pose2D, actions: np.ndarray, dt: float) -> np.ndarray:
    """
    행동 시퀀스를 이륜 로봇(unicycle) 운동학으로 굴려 자세 궤적을 구합니다.

    [운동학]
        x += v·cos(θ)·dt
        y += v·sin(θ)·dt
        θ += w·dt

    위치는 "이동 전" 방향으로 갱신합니다 (시뮬레이터 step과 같은 순서).

    Args:
        pose: 시작 자세 (x, y, heading)
        actions: (N, H, 2) 행동 시퀀스 묶음 (v, w)
        dt: 제어 주기 (초)

    Returns:
        (N, H, 3) 각 스텝 이후의 자세
    """
    actions = np.asarray(actions, dtype=float)
    n, horizon, _ = actions.shape
    out = np.empty((n, horizon, 3))
    x = np.full(n, float(pose[0]))
    y = np.full(n, float(pose[1]))
    th = np.full(n, float(pose[2]))
    for h in range(horizon):
        v = actions[:, h, 0]
        w = actions[:, h, 1]
        x = x + v * np.cos(th) * dt
        y = y + v * np.sin(th) * dt
        th = wrap_angle(th + w * dt)
        out[:, h, 0] = x
        out[:, h, 1] = y
        out[:, h, 2] = th
    return out


@dataclass(frozen=True)
class ActionBounds:
    """행동 (v, w)의 허용 범위"""

    v_min: float
    v_max: float
    w_min: float
    w_max: float

    @classmethod
    def planner_box(cls, v_max: float, w_max: float) -> "ActionBounds":
        """플래너용: 전진만 (v ∈ [0, v_max]), 회전은 양방향"""
        return cls(0.0, v_max, -w_max, w_max)

    @classmethod
    def symmetric(cls, v_max: float, w_max: float) -> "ActionBounds":
        return cls(-v_max, v_max, -w_max, w_max)

    def clip(self, actions: np.ndarray) -> np.ndarray:
        """(..., 2) 배열을 범위 안으로 자릅니다."""
        actions = np.asarray(actions, dtype=float)
        low = np.array([self.v_min, self.w_min])
        high = np.array([self.v_max, self.w_max])
        return np.clip(actions, low, high)

    def contains(self, actions: np.ndarray) -> bool:
        actions = np.asarray(actions, dtype=float)
        return bool(
            np.all(actions[..., 0] >= self.v_min) and np.all(actions[..., 0] <= self.v_max)
            and np.all(actions[..., 1] >= self.w_min) and np.all(actions[..., 1] <= self.w_max)
        )
