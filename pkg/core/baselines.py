"""
비교용 정책 (거리 센서 플래너, 직진 정책)
==========================================

학습 모델과 비교하기 위한 두 가지 정책입니다.

1. 거리 센서(LIDAR) 정책
   현재 거리 센서 스캔에 잡힌 점을 장애물로 보고,
   후보 경로가 장애물에 clearance보다 가까이 가면 "충돌"로 판단합니다.

       스캔 점 ·  ·  ·
                ·       ·        ← 키 큰 풀도 점으로 잡힘!
       로봇 ●────────▶ 후보 경로
                 │
           clearance 이내? → 충돌 비용

   약점: 풀처럼 지나갈 수 있는 것도 장애물로 봅니다.
   모든 후보가 막히면 제자리에서 돌면서 길을 찾습니다.

2. 직진(Naive) 정책
   목표 방향으로 일정 속도로 달립니다. 장애물은 보지 않습니다.

       w = k_p × (목표 방향 − 현재 방향),  |w| ≤ w_max

[입력 제한]
LIDAR 정책은 거리 스캔 + 오도메트리 + 목표만,
직진 정책은 오도메트리 + 목표만 사용합니다 (카메라, 학습 파라미터 사용 안 함).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.loader import BaselineConfig, PlannerConfig, RewardConfig, SimulatorConfig
from core.geometry import ActionBounds, Pose2D, bearing_error, rollout_unicycle
from core.model import EventPredictionBatch
from core.planner import (
    PlanDiagnostics,
    PlannerState,
    PolicyDecision,
    local_goal,
    reward,
    reward_weighted_update,
    sample_sequences,
    softmax_weights,
)
from simulator.engine import Action, SensorFrame, range_angles

logger = logging.getLogger(__name__)


@dataclass
class RangeView:
    """LIDAR 정책이 볼 수 있는 값만 담은 관측"""

    range_scan: np.ndarray
    odom_pose: Pose2D
    max_range: float

    @classmethod
    def from_frame(cls, frame: SensorFrame, max_range: float) -> "RangeView":
        return cls(range_scan=np.asarray(frame.range_scan, dtype=float), odom_pose=frame.odom_pose, max_range=max_range)


def scan_points(view: RangeView, sim: SimulatorConfig) -> np.ndarray:
    """스캔에서 실제로 맞은 점들 (로봇 로컬 좌표, (K, 2))"""
    angles = range_angles(sim)
    hit = view.range_scan < view.max_range
    r = view.range_scan[hit]
    return np.stack([r * np.cos(angles[hit]), r * np.sin(angles[hit])], axis=-1)


def geometric_predictions(
    actions: np.ndarray, points: np.ndarray, clearance: float, dt: float
) -> EventPredictionBatch:
    """
    완전한 운동학으로 후보를 굴려서 (N, H) 충돌 표시와 위치를 만듭니다.
    충돌은 흡수 상태 (한 번 닿으면 이후 스텝 모두 충돌).
    """
    poses = rollout_unicycle((0.0, 0.0, 0.0), actions, dt)
    xy = poses[..., :2]
    if len(points):
        d2 = ((xy[:, :, None, :] - points[None, None, :, :]) ** 2).sum(axis=-1)
        near = (d2.min(axis=-1) < clearance * clearance).astype(float)
    else:
        near = np.zeros(xy.shape[:2])
    p_coll = np.maximum.accumulate(near, axis=1)
    return EventPredictionBatch(p_coll=p_coll, p_bump=np.zeros_like(p_coll), pos=xy)


def lidar_policy_step(
    view: RangeView,
    pstate: PlannerState,
    goal: Tuple[float, float],
    cfg: BaselineConfig,
    planner_cfg: PlannerConfig,
    reward_cfg: RewardConfig,
    sim: SimulatorConfig,
    bounds: ActionBounds,
    rng: np.random.Generator,
    turn_sign: float = 1.0,
) -> Tuple[Action, PlannerState, PlanDiagnostics, bool]:
    """
    LIDAR 정책 한 스텝 (플래너와 같은 후보 생성/가중 평균, 같은 N과 H)

    Returns:
        (행동, 새 플래너 상태, 진단, 제자리 회전 여부)
    """
    pose = view.odom_pose
    # 울퉁불퉁함은 거리 센서로 알 수 없으므로 α_bum = 0
    geo_reward = reward_cfg.model_copy(update={"alpha_bum": 0.0})
    samples = sample_sequences(pstate, planner_cfg, rng, bounds)
    predictions = geometric_predictions(samples, scan_points(view, sim), cfg.clearance, sim.dt)
    rewards = reward(predictions, geo_reward, local_goal(pose, goal))
    weights = softmax_weights(rewards, planner_cfg.gamma)

    if np.all(predictions.p_coll.max(axis=1) > 0):
        # 모든 후보가 막힘 → 제자리 회전
        action = (0.0, float(turn_sign * bounds.w_max))
        a_hat = np.tile(np.array(action), (planner_cfg.horizon, 1))
        rotating = True
    else:
        a_hat = bounds.clip(reward_weighted_update(samples, rewards, planner_cfg.gamma))
        action = (float(a_hat[0, 0]), float(a_hat[0, 1]))
        rotating = False

    diagnostics = PlanDiagnostics(samples=samples, rewards=rewards, predictions=predictions, weights=weights, a_hat=a_hat)
    return action, PlannerState(a_hat=a_hat, pose=pose), diagnostics, rotating


def naive_policy_step(
    odom_pose: Pose2D,
    goal: Tuple[float, float],
    cfg: BaselineConfig,
    bounds: ActionBounds,
) -> Action:
    """목표 방향으로 직진: v = v_nom, w = k_p × 방향 오차 (자름)"""
    err = bearing_error(odom_pose, goal)
    w = float(np.clip(cfg.naive_gain * err, bounds.w_min, bounds.w_max))
    v = float(np.clip(cfg.naive_speed, bounds.v_min, bounds.v_max))
    return (v, w)


class LidarPolicy:
    """거리 센서 기반 기하학 플래너 (Policy 인터페이스)"""

    name = "lidar"

    def __init__(
        self,
        goal: Tuple[float, float],
        cfg: BaselineConfig,
        planner_cfg: PlannerConfig,
        reward_cfg: RewardConfig,
        sim: SimulatorConfig,
        bounds: ActionBounds,
        seed: int = 0,
    ):
        self.goal = (float(goal[0]), float(goal[1]))
        self.cfg = cfg
        self.planner_cfg = planner_cfg
        self.reward_cfg = reward_cfg
        self.sim = sim
        self.bounds = bounds
        self.seed = int(seed)
        self.reset()

    def reset(self) -> None:
        self.pstate = PlannerState.initial(self.planner_cfg.horizon)
        self.rng = np.random.default_rng(self.seed)
        self.turn_sign: Optional[float] = None
        self.rotating_steps = 0

    def act(self, frame: SensorFrame) -> PolicyDecision:
        view = RangeView.from_frame(frame, self.sim.max_range)
        if self.turn_sign is None:
            # 목표 쪽으로 돌기 시작하고, 이후 방향 유지
            self.turn_sign = 1.0 if bearing_error(view.odom_pose, self.goal) >= 0 else -1.0
        action, self.pstate, diagnostics, rotating = lidar_policy_step(
            view, self.pstate, self.goal, self.cfg, self.planner_cfg, self.reward_cfg,
            self.sim, self.bounds, self.rng, self.turn_sign,
        )
        self.rotating_steps = self.rotating_steps + 1 if rotating else 0
        if self.rotating_steps == 1:
            logger.debug("LIDAR 정책: 모든 후보가 막힘 → 제자리 회전")
        return PolicyDecision(action=action, diagnostics=diagnostics, info={"rotating": rotating})


class NaivePolicy:
    """목표로 직진하는 정책 (Policy 인터페이스)"""

    name = "naive"

    def __init__(self, goal: Tuple[float, float], cfg: BaselineConfig, bounds: ActionBounds):
        self.goal = (float(goal[0]), float(goal[1]))
        self.cfg = cfg
        self.bounds = bounds

    def reset(self) -> None:
        pass

    def act(self, frame: SensorFrame) -> PolicyDecision:
        return PolicyDecision(action=naive_policy_step(frame.odom_pose, self.goal, self.cfg, self.bounds))

