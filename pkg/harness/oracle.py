"""
정답 예측기 (oracle)
====================

학습 모델 대신 "시뮬레이터 정답"으로 사건을 예측합니다.
플래너가 제대로 동작하는지를 모델 품질과 분리해서 확인할 때 사용합니다.

[계산 방법]
실제 자세에서 후보 행동을 시뮬레이터와 같은 규칙으로 굴립니다.
    - 목적지 칸이 지나갈 수 없으면 제자리 + 충돌 (이후 계속 충돌)
    - 울퉁불퉁 확률 = P(η > 기준값),  η ~ HalfNormal(bump_gain × 울퉁불퉁함 × |v|)
    - 위치 = 시작 자세 기준 로컬 좌표

실제 자세(정답)를 읽으므로 harness에만 둡니다.
"""

from typing import Optional

import numpy as np
from scipy.stats import halfnorm

from config.loader import SimulatorConfig
from core.geometry import wrap_angle, world_to_local
from core.model import EventPredictionBatch
from simulator.engine import RobotState, SensorFrame
from simulator.terrain import TerrainMap


class OraclePredictor:
    """
    [사용 예시]
    oracle = OraclePredictor(terrain, horizon=8, bump_threshold=0.5)
    oracle.sync(state)                      # 매 스텝 실제 상태 전달
    batch = oracle.predict_batch(frame, actions)
    """

    def __init__(
        self,
        terrain: TerrainMap,
        horizon: int,
        bump_threshold: float,
        sim: Optional[SimulatorConfig] = None,
    ):
        self.terrain = terrain
        self.horizon = int(horizon)
        self.bump_threshold = float(bump_threshold)
        self.sim = sim or SimulatorConfig()
        self.state: Optional[RobotState] = None

    def sync(self, state: RobotState) -> None:
        self.state = state

    def predict_batch(self, frame: SensorFrame, actions: np.ndarray) -> EventPredictionBatch:
        if self.state is None:
            raise RuntimeError("OraclePredictor.sync()로 실제 상태를 먼저 알려줘야 합니다")
        actions = np.asarray(actions, dtype=float)
        n, horizon, _ = actions.shape
        sim, terrain = self.sim, self.terrain
        dt = sim.dt

        x = np.full(n, self.state.x)
        y = np.full(n, self.state.y)
        th = np.full(n, self.state.heading)
        collided = np.zeros(n, dtype=bool)
        p_coll = np.zeros((n, horizon))
        p_bump = np.zeros((n, horizon))
        xy = np.zeros((n, horizon, 2))

        for h in range(horizon):
            v = np.clip(actions[:, h, 0], -sim.v_max, sim.v_max)
            w = np.clip(actions[:, h, 1], -sim.w_max, sim.w_max)
            nx = x + v * np.cos(th) * dt
            ny = y + v * np.sin(th) * dt
            blocked = (v != 0.0) & ~terrain.sample(nx, ny, "traversable")
            active = ~collided
            moving = ~(blocked | collided)
            x = np.where(moving, nx, x)
            y = np.where(moving, ny, y)
            th = np.where(collided, th, wrap_angle(th + w * dt))
            collided = collided | blocked

            scale = sim.bump_gain * terrain.sample(x, y, "bumpiness") * np.abs(np.where(active, v, 0.0))
            p_bump[:, h] = np.where(scale > 0, halfnorm.sf(self.bump_threshold, scale=np.maximum(scale, 1e-12)), 0.0)
            p_coll[:, h] = collided
            xy[:, h, 0] = x
            xy[:, h, 1] = y

        pos = world_to_local(self.state.pose, xy)
        return EventPredictionBatch(p_coll=p_coll, p_bump=p_bump, pos=pos)
