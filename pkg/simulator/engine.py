"""
시뮬레이션 엔진
================

실제 로봇 없이 가상의 이륜 로봇을 지형 격자 위에서 움직이고,
로봇에 달린 센서 값을 만들어 냅니다.

[동작 원리]
1. 로봇 상태(RobotState): 실제 위치(정답) + 오도메트리 추정값
2. 매 스텝(step)마다:
   a) 행동 (v, w)을 한계값으로 자름
   b) 이륜 운동학으로 다음 위치 계산
   c) 목적지 칸이 지나갈 수 없으면 → 제자리, 충돌 표시
   d) 지형 울퉁불퉁함에 비례하는 IMU 잡음 주입
   e) 오도메트리 적분 (잡음 포함)
3. 센서 렌더링(render_sensors): 광선 진행으로 카메라/거리 센서 값 계산

[센서 구성]
    ┌──────────────┬──────────────────────────────────────────┐
    │ 카메라       │ 170도 시야, 32개 광선                    │
    │              │ - 처음 맞은 장애물의 종류와 거리          │
    │              │ - 전방 0.5/1/2/4m 바닥의 지형 종류        │
    ├──────────────┼──────────────────────────────────────────┤
    │ 거리 센서    │ 360도, 72개 광선 - 장애물까지 거리        │
    │              │ (종류는 모름! 풀과 벽을 구분 못함)        │
    ├──────────────┼──────────────────────────────────────────┤
    │ IMU          │ |각속도|, |가속도| (지형 잡음 포함)       │
    ├──────────────┼──────────────────────────────────────────┤
    │ 오도메트리   │ 바퀴 속도 적분 위치 (누적 오차 있음)      │
    └──────────────┴──────────────────────────────────────────┘

[정답(ground truth) 분리]
StepOutcome.gt_collision, gt_bumpiness_sample은 평가(harness)에서만 사용합니다.
학습 데이터(SensorFrame)에는 정답이 들어가지 않습니다.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from config.loader import SimulatorConfig
from core.geometry import Pose2D, wrap_angle
from simulator.terrain import NO_HIT, TerrainMap

Action = Tuple[float, float]

_DEFAULT_SIM = SimulatorConfig()


@dataclass
class RobotState:
    """로봇 상태 - 실제 위치(정답)와 로봇이 아는 값(오도메트리, IMU)"""

    # 실제 위치 (정답)
    x: float
    y: float
    heading: float

    # 직전 스텝의 명령/측정 속도
    commanded_v: float = 0.0
    commanded_w: float = 0.0
    measured_v: float = 0.0
    measured_w: float = 0.0

    # 오도메트리 추정 자세
    odom_x: float = 0.0
    odom_y: float = 0.0
    odom_heading: float = 0.0

    # 직전 스텝의 IMU 측정값
    imu_w_mag: float = 0.0
    imu_a_mag: float = 0.0

    @classmethod
    def at(cls, x: float, y: float, heading: float = 0.0) -> "RobotState":
        """정지 상태 로봇. 오도메트리는 실제 자세에서 시작합니다."""
        heading = wrap_angle(heading)
        return cls(x=x, y=y, heading=heading, odom_x=x, odom_y=y, odom_heading=heading)

    @property
    def pose(self) -> Pose2D:
        return (self.x, self.y, self.heading)

    @property
    def odom_pose(self) -> Pose2D:
        return (self.odom_x, self.odom_y, self.odom_heading)

    def to_dict(self) -> dict:
        return {
            "x": round(self.x, 6),
            "y": round(self.y, 6),
            "heading": round(self.heading, 6),
            "odom": [round(self.odom_x, 6), round(self.odom_y, 6), round(self.odom_heading, 6)],
            "measured_v": round(self.measured_v, 6),
        }


@dataclass
class SensorFrame:
    """
    로봇 관측값 o_t

    카메라 필드만 학습 모델 입력으로 쓰고,
    거리 센서(range_scan)는 비교용 LIDAR 정책만 사용합니다.
    """

    cam_obstacle_class: np.ndarray   # (W,) int, 처음 맞은 장애물 종류 (없으면 NO_HIT)
    cam_obstacle_dist: np.ndarray    # (W,) [0, 1], max_range로 나눈 거리 (1 = 없음)
    cam_ground_class: np.ndarray     # (W, D) int, 전방 바닥 지형 종류
    range_scan: np.ndarray           # (R,) (0, max_range]
    imu_w_mag: float
    imu_a_mag: float
    odom_x: float
    odom_y: float
    odom_heading: float
    wheel_v: float = 0.0
    wheel_w: float = 0.0
    commanded_v: float = 0.0
    commanded_w: float = 0.0

    @property
    def odom_pose(self) -> Pose2D:
        return (self.odom_x, self.odom_y, self.odom_heading)


@dataclass
class StepOutcome:
    """한 스텝의 결과. gt_* 필드는 평가 전용입니다."""

    next_state: RobotState
    frame: SensorFrame
    gt_collision: bool
    gt_bumpiness_sample: float


# ============================================================
# 광선 진행 (ray marching)
# ============================================================
def _ray_samples(terrain: TerrainMap, sim: SimulatorConfig) -> np.ndarray:
    """광선 위 검사 지점의 거리 목록 (격자 크기 × ray_step_fraction 간격)"""
    step_len = terrain.cell_size * sim.ray_step_fraction
    n = int(math.ceil(sim.max_range / step_len))
    dists = np.arange(1, n + 1) * step_len
    dists[-1] = min(dists[-1], sim.max_range)
    return dists


def march_rays(
    terrain: TerrainMap,
    x: float,
    y: float,
    angles: np.ndarray,
    sim: SimulatorConfig = _DEFAULT_SIM,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    여러 광선을 한 번에 진행시켜 처음 맞은 장애물을 찾습니다.

    [원리 설명]
    광선을 작은 간격으로 나누어, 각 지점이 "센서에 잡히는 칸"인지 검사합니다.

        로봇 ●─·─·─·─·─·─█  ← 처음 잡힌 지점까지의 거리 = 측정값
                          벽

    Args:
        angles: (K,) 세계 좌표계 광선 방향 (라디안)

    Returns:
        (거리 (K,), 지형 종류 (K,)) - 맞은 것이 없으면 (max_range, NO_HIT)
    """
    dists = _ray_samples(terrain, sim)
    xs = x + np.cos(angles)[:, None] * dists[None, :]
    ys = y + np.sin(angles)[:, None] * dists[None, :]
    occupied = terrain.sample(xs, ys, "occupancy")
    hit = occupied.any(axis=1)
    first = occupied.argmax(axis=1)
    rows = np.arange(len(angles))
    hit_dist = np.where(hit, dists[first], sim.max_range)
    visual = terrain.sample(xs[rows, first], ys[rows, first], "visual")
    hit_class = np.where(hit, visual, NO_HIT)
    return hit_dist, hit_class


def camera_angles(sim: SimulatorConfig = _DEFAULT_SIM) -> np.ndarray:
    """카메라 광선의 로봇 기준 각도: −FOV/2(오른쪽 끝) → +FOV/2(왼쪽 끝)"""
    half = 0.5 * math.radians(sim.camera_fov_deg)
    if sim.camera_rays == 1:
        return np.zeros(1)
    return np.linspace(-half, half, sim.camera_rays)


def range_angles(sim: SimulatorConfig = _DEFAULT_SIM) -> np.ndarray:
    """거리 센서 광선의 로봇 기준 각도: 0, 5, 10, ... 도"""
    return np.arange(sim.range_rays) * (2.0 * math.pi / sim.range_rays)


def render_sensors(
    state: RobotState,
    terrain: TerrainMap,
    rng: np.random.Generator,
    sim: SimulatorConfig = _DEFAULT_SIM,
) -> SensorFrame:
    """
    로봇 상태에서 센서 값을 만듭니다.

    키 큰 풀은 센서에 잡히는 칸이므로 카메라와 거리 센서 모두에 "맞음"으로 나옵니다.
    차이는 카메라는 종류(TallGrass)를 알고, 거리 센서는 거리만 안다는 것입니다.
    """
    # 카메라: 처음 맞은 장애물
    cam = state.heading + camera_angles(sim)
    cam_dist, cam_class = march_rays(terrain, state.x, state.y, cam, sim)

    # 카메라: 전방 바닥 지형
    look = np.asarray(sim.ground_lookaheads, dtype=float)
    gx = state.x + np.cos(cam)[:, None] * look[None, :]
    gy = state.y + np.sin(cam)[:, None] * look[None, :]
    ground = terrain.sample(gx, gy, "visual")

    # 거리 센서
    rng_dist, _ = march_rays(terrain, state.x, state.y, state.heading + range_angles(sim), sim)
    if sim.range_noise_std > 0:
        rng_dist = rng_dist + rng.normal(0.0, sim.range_noise_std, size=rng_dist.shape)
        rng_dist = np.clip(rng_dist, 1e-3, sim.max_range)

    return SensorFrame(
        cam_obstacle_class=cam_class.astype(np.int8),
        cam_obstacle_dist=np.clip(cam_dist / sim.max_range, 0.0, 1.0),
        cam_ground_class=ground.astype(np.int8),
        range_scan=rng_dist.astype(float),
        imu_w_mag=state.imu_w_mag,
        imu_a_mag=state.imu_a_mag,
        odom_x=state.odom_x,
        odom_y=state.odom_y,
        odom_heading=state.odom_heading,
        wheel_v=state.measured_v,
        wheel_w=state.measured_w,
        commanded_v=state.commanded_v,
        commanded_w=state.commanded_w,
    )


# ============================================================
# 한 스텝 진행
# ============================================================
def step(
    state: RobotState,
    action: Action,
    terrain: TerrainMap,
    dt: float,
    rng: np.random.Generator,
    sim: SimulatorConfig = _DEFAULT_SIM,
) -> StepOutcome:
    """
    로봇을 한 스텝(dt초) 움직입니다.

    [계산 순서]
    1단계: 행동을 한계값으로 자름 (|v| ≤ v_max, |w| ≤ w_max)
    2단계: 이륜 운동학
        x' = x + v·cos(θ)·dt
        y' = y + v·sin(θ)·dt
        θ' = θ + w·dt
    3단계: 목적지 칸이 지나갈 수 없는 칸이면
        위치 그대로, 측정 속도 0, 충돌 (회전은 그대로 적용)
    4단계: IMU 잡음
        η ~ HalfNormal(bump_gain × 울퉁불퉁함 × |v|)
        (v = 자른 명령 속도, 울퉁불퉁함 = 3단계 이후 로봇이 있는 칸)
        imu_w_mag = |w| + η
    5단계: 오도메트리 = 측정 속도 적분 + 가우시안 잡음

    난수는 매 스텝 같은 순서, 같은 개수만큼 뽑습니다 (재현성).
    """
    v = float(np.clip(action[0], -sim.v_max, sim.v_max))
    w = float(np.clip(action[1], -sim.w_max, sim.w_max))

    nx = state.x + v * math.cos(state.heading) * dt
    ny = state.y + v * math.sin(state.heading) * dt
    nheading = wrap_angle(state.heading + w * dt)

    blocked = v != 0.0 and not terrain.cell_at(nx, ny).physically_traversable
    if blocked:
        nx, ny = state.x, state.y
        measured_v = 0.0
    else:
        measured_v = v
    measured_w = w

    # 지형 잡음: 이동 후 칸(막혔으면 제자리 칸), 명령 속도 기준.
    # 벽에 막혀 바퀴가 헛돌아도 차체는 흔들립니다.
    cell = terrain.cell_at(nx, ny)
    bump_scale = sim.bump_gain * cell.bumpiness_coeff * abs(v)
    eta_w = abs(rng.standard_normal()) * bump_scale
    eta_a = abs(rng.standard_normal()) * bump_scale * sim.accel_noise_ratio
    imu_w_mag = abs(measured_w) + eta_w
    imu_a_mag = abs(measured_v - state.measured_v) / dt + eta_a

    # 오도메트리
    noise = rng.standard_normal(3)
    odom_x = state.odom_x + measured_v * math.cos(state.odom_heading) * dt + sim.odom_noise_pos * noise[0]
    odom_y = state.odom_y + measured_v * math.sin(state.odom_heading) * dt + sim.odom_noise_pos * noise[1]
    odom_heading = wrap_angle(state.odom_heading + measured_w * dt + sim.odom_noise_heading * noise[2])

    next_state = RobotState(
        x=nx,
        y=ny,
        heading=nheading,
        commanded_v=v,
        commanded_w=w,
        measured_v=measured_v,
        measured_w=measured_w,
        odom_x=odom_x,
        odom_y=odom_y,
        odom_heading=odom_heading,
        imu_w_mag=imu_w_mag,
        imu_a_mag=imu_a_mag,
    )
    frame = render_sensors(next_state, terrain, rng, sim)
    return StepOutcome(
        next_state=next_state,
        frame=frame,
        gt_collision=blocked,
        gt_bumpiness_sample=eta_w,
    )


class Episode:
    """
    (지도, 로봇 상태, 난수) 묶음 - 반복문에서 쓰기 편하게 감싼 것

    [사용 예시]
    episode = Episode(terrain, RobotState.at(2.0, 2.0), rng)
    frame = episode.observe()
    outcome = episode.act((1.0, 0.0))
    """

    def __init__(
        self,
        terrain: TerrainMap,
        state: RobotState,
        rng: np.random.Generator,
        sim: SimulatorConfig = _DEFAULT_SIM,
    ):
        self.terrain = terrain
        self.state = state
        self.rng = rng
        self.sim = sim
        self._frame: Optional[SensorFrame] = None
        self.step_count = 0

    def observe(self) -> SensorFrame:
        if self._frame is None:
            self._frame = render_sensors(self.state, self.terrain, self.rng, self.sim)
        return self._frame

    def act(self, action: Action) -> StepOutcome:
        outcome = step(self.state, action, self.terrain, self.sim.dt, self.rng, self.sim)
        self.state = outcome.next_state
        self._frame = outcome.frame
        self.step_count += 1
        return outcome

    def teleport(self, state: RobotState) -> None:
        """상태를 직접 바꿉니다 (사람 개입 / 리셋)."""
        self.state = replace(state)
        self._frame = None
