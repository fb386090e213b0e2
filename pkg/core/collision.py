"""
충돌 감지 및 복구 모듈
======================

데이터 수집 중 로봇이 부딪혔는지 "로봇 자신의 센서만으로" 판단하고,
부딪혔다면 스스로 빠져나오게 합니다. 사람은 개입하지 않습니다.
(정말 빠져나올 수 없을 때만 사람이 들어서 옮기는 것으로 처리)

[충돌 감지 방식 두 가지]

1. 거리 센서 방식 (range) - 도심용
   가장 가까운 장애물까지 거리 < d_near → 충돌
   단점: 키 큰 풀도 장애물로 봅니다 (지나치게 조심스러움)

2. 관성 방식 (inertial) - 비포장용
   명령 속도는 빠른데 실제 바퀴 속도가 거의 0 → "끼임" = 충돌
   풀을 헤치고 지나가면 바퀴가 돌아가므로 충돌로 보지 않습니다

[복구 동작]

    충돌 감지!
       │
       ▼
    ① 후진 (T_back 스텝)
       │
       ▼
    ② 무작위 회전 ±[90°, 180°]
       │
       ▼
    ③ 빠져나왔는가? ── 예 ──▶ 계속 수집
       │ 아니오
       ▼
    k_max번 반복해도 실패 → 가장 가까운 빈 칸으로 옮김 (사람 개입 +1)
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from config.loader import CollectorConfig, SimulatorConfig
from simulator.engine import RobotState, SensorFrame, render_sensors, step
from simulator.pathfinding import dilate
from simulator.terrain import TerrainMap

logger = logging.getLogger(__name__)


class DetectorMode(str, Enum):
    RANGE = "range"
    INERTIAL = "inertial"

    @classmethod
    def parse(cls, value) -> "DetectorMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


def detect_collision(frame: SensorFrame, mode: DetectorMode, cfg: CollectorConfig) -> bool:
    """
    센서 값으로 충돌 여부를 판단합니다.

    Args:
        frame: 현재 센서 값
        mode: 감지 방식
        cfg: 기준값 (d_near, v_cmd_min, v_stuck)

    Returns:
        True = 충돌
    """
    if DetectorMode.parse(mode) == DetectorMode.RANGE:
        return bool(np.min(frame.range_scan) < cfg.d_near)
    return bool(abs(frame.commanded_v) > cfg.v_cmd_min and abs(frame.wheel_v) < cfg.v_stuck)


@dataclass
class ResetResult:
    """복구 동작 결과"""

    state: RobotState
    frame: SensorFrame
    intervened: bool      # 사람 개입(순간이동) 여부
    attempts: int         # 후진+회전 시도 횟수
    steps: int            # 복구에 쓴 시뮬레이션 스텝 수


def clear_mask(terrain: TerrainMap, cfg: CollectorConfig) -> np.ndarray:
    """주변 d_near 안에 장애물/통과불가 칸이 없는 칸"""
    blocked = terrain.occupancy | ~terrain.traversable
    radius = int(math.ceil(cfg.d_near / terrain.cell_size))
    return ~dilate(blocked, radius)


def nearest_free_pose(
    state: RobotState, terrain: TerrainMap, cfg: CollectorConfig
) -> Tuple[float, float]:
    """
    현재 위치에서 가장 가까운 "여유 있는" 칸의 중심 좌표

    여유 있는 칸이 하나도 없으면 통과 가능한 칸 중 가장 가까운 곳,
    그것도 없으면 출발 영역 중심을 돌려줍니다.
    """
    for mask in (clear_mask(terrain, cfg), terrain.traversable & ~terrain.occupancy, terrain.traversable):
        if mask.any():
            jj, ii = np.nonzero(mask)
            cx = (ii + 0.5) * terrain.cell_size
            cy = (jj + 0.5) * terrain.cell_size
            k = int(np.argmin((cx - state.x) ** 2 + (cy - state.y) ** 2))
            return (float(cx[k]), float(cy[k]))
    return terrain.spawn_region.center


def _is_clear(frame: SensorFrame, mode: DetectorMode, cfg: CollectorConfig, backup_ok: bool) -> bool:
    if mode == DetectorMode.RANGE:
        return bool(np.min(frame.range_scan) >= cfg.d_near)
    return backup_ok


def reset_maneuver(
    state: RobotState,
    terrain: TerrainMap,
    rng: np.random.Generator,
    mode: DetectorMode = DetectorMode.RANGE,
    cfg: Optional[CollectorConfig] = None,
    sim: Optional[SimulatorConfig] = None,
) -> ResetResult:
    """
    충돌 후 복구: 후진 → 무작위 회전, 최대 k_max번.
    그래도 막혀 있으면 가장 가까운 빈 칸으로 옮깁니다.
    """
    cfg = cfg or CollectorConfig()
    sim = sim or SimulatorConfig()
    mode = DetectorMode.parse(mode)
    steps = 0
    frame = None

    for attempt in range(1, cfg.max_attempts + 1):
        # ① 후진
        backup_ok = True
        for _ in range(cfg.backup_steps):
            outcome = step(state, (-cfg.backup_speed, 0.0), terrain, sim.dt, rng, sim)
            state, frame = outcome.next_state, outcome.frame
            steps += 1
            backup_ok = abs(frame.wheel_v) >= cfg.v_stuck

        # ② 회전 (w_max 이내로 나누어 회전)
        angle = math.radians(rng.uniform(cfg.rotate_min_deg, cfg.rotate_max_deg))
        angle *= 1.0 if rng.uniform() < 0.5 else -1.0
        n_turn = max(1, int(math.ceil(abs(angle) / (sim.w_max * sim.dt))))
        w = angle / (n_turn * sim.dt)
        for _ in range(n_turn):
            outcome = step(state, (0.0, w), terrain, sim.dt, rng, sim)
            state, frame = outcome.next_state, outcome.frame
            steps += 1

        # ③ 확인
        if _is_clear(frame, mode, cfg, backup_ok):
            return ResetResult(state=state, frame=frame, intervened=False, attempts=attempt, steps=steps)

    # 사람 개입: 가장 가까운 빈 칸으로 옮김 (오도메트리는 모름)
    x, y = nearest_free_pose(state, terrain, cfg)
    logger.info("복구 실패 → 사람 개입: (%.2f, %.2f) → (%.2f, %.2f)", state.x, state.y, x, y)
    moved = RobotState(
        x=x,
        y=y,
        heading=state.heading,
        odom_x=state.odom_x,
        odom_y=state.odom_y,
        odom_heading=state.odom_heading,
    )
    frame = render_sensors(moved, terrain, rng, sim)
    return ResetResult(state=moved, frame=frame, intervened=True, attempts=cfg.max_attempts, steps=steps)
