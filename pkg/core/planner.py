"""
보상 함수와 확률적 MPC 플래너
=============================

매 스텝 "앞으로 H 스텝 동안 어떻게 움직일지"를 새로 계획하고,
그중 첫 행동만 실행합니다 (모델 예측 제어, MPC).

[보상]
스텝 h마다 비용을 매기고 모두 더한 값에 −를 붙입니다.

    비용_h = p_coll · (1 + α_pos + α_bum)
           + (1 − p_coll) · ( α_pos · 각도/π + α_bum · p_bump )

    - 각도: 예측 위치 방향과 목표 방향 사이의 각도 [0, π]
            (예측 위치가 원점이면 π, 즉 "진전 없음")
    - 충돌할 것 같으면 (p_coll = 1) 모든 비용이 최대값

[플래너 - 한 스텝]

    ① 지난번 최적 시퀀스 â를 한 칸 당긴 것을 중심으로 N개 후보 생성
         ã_h = β·(â_h+1 + ε_h) + (1 − β)·ã_h-1,   ε ~ N(0, σ²)
                                                   ã_-1 = 0, â_H = â_H-1
    ② 예측 모델로 N개 후보의 사건 예측
    ③ 보상 R_n 계산
    ④ 보상 가중 평균으로 â 갱신
         â = Σ_n softmax(γ·R)_n · ã_n
    ⑤ â_0 실행

    β가 클수록 후보가 이전 계획을 따라가고, 작을수록 부드럽게(0 쪽으로) 눌립니다.
    γ가 클수록 가장 좋은 후보 하나만 따르고, 작을수록 단순 평균에 가까워집니다.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Tuple, Union

import numpy as np

from config.loader import PlannerConfig, RewardConfig
from core.errors import NonFiniteError, ShapeError
from core.geometry import ActionBounds, Pose2D, angle_between, world_to_local
from core.model import EventPrediction, EventPredictionBatch
from simulator.engine import Action, SensorFrame

logger = logging.getLogger(__name__)


class EventPredictor(Protocol):
    """행동 시퀀스 묶음의 사건을 예측하는 것 (학습 모델 또는 정답 시뮬레이터)"""

    horizon: int

    def predict_batch(self, frame: SensorFrame, actions: np.ndarray) -> EventPredictionBatch:
        ...


class Policy(Protocol):
    """배치 단계에서 쓰는 공통 정책 인터페이스"""

    def reset(self) -> None:
        ...

    def act(self, frame: SensorFrame) -> "PolicyDecision":
        ...


@dataclass
class PlannerState:
    """플래너가 스텝 사이에 기억하는 값"""

    a_hat: np.ndarray                  # (H, 2) 현재 최적 행동 시퀀스 추정
    pose: Pose2D = (0.0, 0.0, 0.0)     # 오도메트리 자세 추정

    @classmethod
    def initial(cls, horizon: int) -> "PlannerState":
        return cls(a_hat=np.zeros((horizon, 2)))

    @property
    def horizon(self) -> int:
        return int(self.a_hat.shape[0])


@dataclass
class PlanDiagnostics:
    """plan_step 내부 값 (궤적 파일과 후보 경로 그림에 사용)"""

    samples: np.ndarray                    # (N, H, 2)
    rewards: np.ndarray                    # (N,)
    predictions: EventPredictionBatch
    weights: np.ndarray                    # (N,)
    a_hat: np.ndarray                      # (H, 2)
    planned_prediction: Optional[EventPrediction] = None
    planned_reward: float = float("nan")

    @property
    def best_reward(self) -> float:
        """찾은 것 중 가장 좋은 보상 (후보들과 갱신된 â 포함)"""
        best = float(np.max(self.rewards))
        if not math.isnan(self.planned_reward):
            best = max(best, self.planned_reward)
        return best


@dataclass
class PolicyDecision:
    action: Action
    diagnostics: Optional[PlanDiagnostics] = None
    info: dict = field(default_factory=dict)


# ============================================================
# 보상
# ============================================================
def local_goal(pose: Pose2D, goal: Tuple[float, float]) -> np.ndarray:
    """세계 좌표 목표 → 로봇 로컬 좌표 (2,)"""
    return world_to_local(pose, np.asarray(goal, dtype=float))


def reward(
    pred: Union[EventPrediction, EventPredictionBatch],
    cfg: RewardConfig,
    goal_local: np.ndarray,
) -> Union[float, np.ndarray]:
    """
    보상 R (클수록 좋음, 최대 0, 최소 −H·(1 + α_pos + α_bum))

    EventPrediction이면 float, EventPredictionBatch이면 (N,) 배열
    """
    p_coll = np.asarray(pred.p_coll, dtype=float)
    p_bump = np.asarray(pred.p_bump, dtype=float)
    pos = np.asarray(pred.pos, dtype=float)
    if pos.shape != p_coll.shape + (2,) or p_bump.shape != p_coll.shape:
        raise ShapeError("reward", p_coll.shape, p_bump.shape, pos.shape)

    angle = angle_between(pos, np.asarray(goal_local, dtype=float))
    collide_cost = p_coll * (1.0 + cfg.alpha_pos + cfg.alpha_bum)
    free_cost = (1.0 - p_coll) * (cfg.alpha_pos * angle / math.pi + cfg.alpha_bum * p_bump)
    total = -(collide_cost + free_cost).sum(axis=-1)
    if np.ndim(total) == 0:
        return float(total)
    return total


# ============================================================
# 후보 생성 / 가중 평균
# ============================================================
def shifted_plan(a_hat: np.ndarray) -> np.ndarray:
    """â를 한 칸 당김: [â_1, ..., â_H-1, â_H-1]"""
    return np.concatenate([a_hat[1:], a_hat[-1:]], axis=0)


def sample_sequences(
    pstate: PlannerState,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    bounds: Optional[ActionBounds] = None,
) -> np.ndarray:
    """
    시간 상관 후보 시퀀스 N개 (N, H, 2)

    잡음은 (N, H, 2) 한 번에 뽑고, 재귀 계산이 끝난 뒤 범위로 자릅니다.
    """
    horizon = pstate.horizon
    if horizon != cfg.horizon:
        raise ShapeError("sample_sequences", pstate.a_hat.shape, (cfg.horizon, 2))
    sigma = np.asarray(cfg.sigma, dtype=float)
    eps = rng.standard_normal((cfg.samples, horizon, 2)) * sigma
    target = shifted_plan(pstate.a_hat)

    out = np.empty((cfg.samples, horizon, 2))
    prev = np.zeros((cfg.samples, 2))
    for h in range(horizon):
        prev = cfg.beta * (target[h] + eps[:, h]) + (1.0 - cfg.beta) * prev
        out[:, h] = prev
    if bounds is not None:
        out = bounds.clip(out)
    return out


def softmax_weights(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """softmax(γ·R), 최댓값을 빼서 계산"""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ShapeError("softmax_weights", rewards.shape)
    if not np.all(np.isfinite(rewards)):
        raise NonFiniteError("보상에 NaN/Inf가 있습니다")
    z = gamma * (rewards - rewards.max())
    w = np.exp(z)
    return w / w.sum()


def reward_weighted_update(samples: np.ndarray, rewards: np.ndarray, gamma: float) -> np.ndarray:
    """â = Σ_n softmax(γ·R)_n · ã_n"""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != np.asarray(rewards).shape[0]:
        raise ShapeError("reward_weighted_update", samples.shape, np.asarray(rewards).shape)
    weights = softmax_weights(rewards, gamma)
    return np.tensordot(weights, samples, axes=1)


# ============================================================
# 한 스텝 계획
# ============================================================
def plan_step(
    frame: SensorFrame,
    pstate: PlannerState,
    predictor: EventPredictor,
    reward_cfg: RewardConfig,
    planner_cfg: PlannerConfig,
    rng: np.random.Generator,
    goal: Tuple[float, float],
    bounds: ActionBounds,
) -> Tuple[Action, PlannerState, PlanDiagnostics]:
    """
    후보 생성 → 예측 → 보상 → 가중 평균 → 첫 행동

    Args:
        goal: 세계 좌표 목표 (GPS 좌표 대응). 오도메트리 자세로 로컬 변환

    Returns:
        (실행할 행동, 새 플래너 상태, 진단 정보)
    """
    if predictor.horizon != planner_cfg.horizon:
        raise ShapeError("plan_step", (predictor.horizon,), (planner_cfg.horizon,))
    pose = frame.odom_pose
    goal_local = local_goal(pose, goal)

    samples = sample_sequences(pstate, planner_cfg, rng, bounds)
    predictions = predictor.predict_batch(frame, samples)
    rewards = reward(predictions, reward_cfg, goal_local)
    a_hat = bounds.clip(reward_weighted_update(samples, rewards, planner_cfg.gamma))
    weights = softmax_weights(rewards, planner_cfg.gamma)

    planned = predictor.predict_batch(frame, a_hat[None])
    diagnostics = PlanDiagnostics(
        samples=samples,
        rewards=rewards,
        predictions=predictions,
        weights=weights,
        a_hat=a_hat,
        planned_prediction=planned[0],
        planned_reward=float(reward(planned, reward_cfg, goal_local)[0]),
    )
    action = (float(a_hat[0, 0]), float(a_hat[0, 1]))
    return action, PlannerState(a_hat=a_hat, pose=pose), diagnostics


def random_shooting(
    frame: SensorFrame,
    predictor: EventPredictor,
    reward_cfg: RewardConfig,
    planner_cfg: PlannerConfig,
    rng: np.random.Generator,
    goal: Tuple[float, float],
    bounds: ActionBounds,
) -> Tuple[Action, PlanDiagnostics]:
    """
    비교용 최적화기: 행동 범위 안에서 균등하게 N개를 새로 뽑고 가장 좋은 것 선택
    (이전 계획을 기억하지 않음)
    """
    low = np.array([bounds.v_min, bounds.w_min])
    high = np.array([bounds.v_max, bounds.w_max])
    samples = rng.uniform(low, high, size=(planner_cfg.samples, planner_cfg.horizon, 2))
    predictions = predictor.predict_batch(frame, samples)
    rewards = reward(predictions, reward_cfg, local_goal(frame.odom_pose, goal))
    best = int(np.argmax(rewards))
    weights = np.zeros(len(rewards))
    weights[best] = 1.0
    diagnostics = PlanDiagnostics(
        samples=samples,
        rewards=rewards,
        predictions=predictions,
        weights=weights,
        a_hat=samples[best],
        planned_prediction=predictions[best],
        planned_reward=float(rewards[best]),
    )
    return (float(samples[best, 0, 0]), float(samples[best, 0, 1])), diagnostics


class LearnedPolicy:
    """
    예측 모델 + 보상 + 플래너 묶음

    predictor에는 학습된 PredictiveModel을 넣지만,
    평가용 정답 시뮬레이터(OraclePredictor)를 넣어도 같은 방식으로 동작합니다.

    [사용 예시]
    policy = LearnedPolicy(model, RewardConfig(), PlannerConfig(), goal=(18, 18),
                           bounds=ActionBounds.planner_box(2.0, 1.5), seed=3)
    policy.reset()
    decision = policy.act(frame)
    """

    name = "learned"

    def __init__(
        self,
        predictor: EventPredictor,
        reward_cfg: RewardConfig,
        planner_cfg: PlannerConfig,
        goal: Tuple[float, float],
        bounds: ActionBounds,
        seed: int = 0,
    ):
        self.predictor = predictor
        self.reward_cfg = reward_cfg
        self.planner_cfg = planner_cfg
        self.goal = (float(goal[0]), float(goal[1]))
        self.bounds = bounds
        self.seed = int(seed)
        self.reset()

    def reset(self) -> None:
        self.pstate = PlannerState.initial(self.planner_cfg.horizon)
        self.rng = np.random.default_rng(self.seed)

    def act(self, frame: SensorFrame) -> PolicyDecision:
        action, self.pstate, diagnostics = plan_step(
            frame, self.pstate, self.predictor, self.reward_cfg, self.planner_cfg, self.rng, self.goal, self.bounds
        )
        return PolicyDecision(action=action, diagnostics=diagnostics)
